#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "qmeas/arthurs_kelly.hpp"
#include "qmeas/errors.hpp"
#include "qmeas/operators.hpp"
#include "qmeas/parallel.hpp"
#include "qmeas/rng.hpp"

// Continuous simultaneous measurement: the unconditioned Lindblad-form
// master equation, the record-conditioned stochastic master equation, raw
// measurement-record synthesis, and reproducible ensemble statistics.

namespace qmeas {

// Continuous limit of repeated single-shot measurements: step dt, accuracy
// scaling zeta = 1/(dt sigma^2), couplings s_i. Derived rates:
// gamma_i = 2 s_i zeta and signal fluctuation lambda_i = sqrt(s_i / 2 zeta).
struct ContinuousConfig {
  double dt = 1e-3;
  double zeta = 1.0;
  double s1 = 1.0;
  double s2 = 1.0;

  ContinuousConfig() = default;
  ContinuousConfig(double dt_, double zeta_, double s1_, double s2_)
      : dt(dt_), zeta(zeta_), s1(s1_), s2(s2_) {
    if (!(dt > 0.0) || !(zeta > 0.0)) {
      throw std::invalid_argument("ContinuousConfig: dt and zeta must be positive");
    }
    if (s1 < 0.0 || s2 < 0.0) {
      throw std::invalid_argument("ContinuousConfig: couplings must be non-negative");
    }
  }

  static ContinuousConfig from_measurement_strengths(double dt, double zeta, double gamma1,
                                                     double gamma2) {
    return ContinuousConfig(dt, zeta, gamma1 / (2.0 * zeta), gamma2 / (2.0 * zeta));
  }

  double gamma1() const { return 2.0 * s1 * zeta; }
  double gamma2() const { return 2.0 * s2 * zeta; }
  double lambda1() const { return std::sqrt(s1 / (2.0 * zeta)); }
  double lambda2() const { return std::sqrt(s2 / (2.0 * zeta)); }
  double sigma2_implied() const { return 1.0 / (zeta * dt); }
};

// Raw pointer readouts per step; times are uniform with spacing dt.
struct MeasurementRecord {
  std::vector<double> times;
  std::vector<double> x1;
  std::vector<double> x2;
};

struct StatePath {
  std::vector<double> times;
  std::vector<Mat> states;
};

// -i[H, rho] - (gamma1/8)[A,[A,rho]] - (gamma2/8)[B,[B,rho]]
inline Mat lindblad_rhs(const Mat& rho, const Mat& hs, const Mat& a, const Mat& b, double gamma1,
                        double gamma2) {
  detail::require_same_dim(rho, a, "lindblad_rhs");
  detail::require_same_dim(rho, b, "lindblad_rhs");
  detail::require_same_dim(rho, hs, "lindblad_rhs");
  if (gamma1 < 0.0 || gamma2 < 0.0) {
    throw std::invalid_argument("lindblad_rhs: negative measurement strength");
  }
  Mat out = Complex(0, -1) * commutator(hs, rho);
  if (gamma1 > 0.0) out -= (gamma1 / 8.0) * commutator(a, commutator(a, rho));
  if (gamma2 > 0.0) out -= (gamma2 / 8.0) * commutator(b, commutator(b, rho));
  return out;
}

// Step size for the deterministic reference: 1e-3 over the fastest rate.
inline double default_dt_ode(const Mat& hs, double gamma1, double gamma2) {
  const double rate = gamma1 + gamma2 + 2.0 * spectral_norm_hermitian(hs);
  return std::min(1e-3, 1e-3 / std::max(1.0, rate));
}

// Classical RK4 on the unconditioned equation. States are symmetrized and
// positivity-checked at every retained sample.
inline StatePath integrate_unconditioned(const DensityMatrix& rho0, const Mat& hs, const Mat& a,
                                         const Mat& b, double gamma1, double gamma2,
                                         double t_final, double dt_ode, int sample_every = 1) {
  if (!(t_final > 0.0) || !(dt_ode > 0.0)) {
    throw std::invalid_argument("integrate_unconditioned: need positive t_final and dt_ode");
  }
  if (sample_every < 1) sample_every = 1;
  const auto n_steps = static_cast<std::int64_t>(std::ceil(t_final / dt_ode - 1e-12));
  const double h = t_final / static_cast<double>(n_steps);

  StatePath path;
  path.times.reserve(static_cast<std::size_t>(n_steps / sample_every) + 2);
  path.states.reserve(path.times.capacity());
  Mat rho = rho0.mat;
  path.times.push_back(0.0);
  path.states.push_back(rho);

  Mat k1, k2, k3, k4;
  for (std::int64_t i = 0; i < n_steps; ++i) {
    k1 = lindblad_rhs(rho, hs, a, b, gamma1, gamma2);
    k2 = lindblad_rhs(rho + 0.5 * h * k1, hs, a, b, gamma1, gamma2);
    k3 = lindblad_rhs(rho + 0.5 * h * k2, hs, a, b, gamma1, gamma2);
    k4 = lindblad_rhs(rho + h * k3, hs, a, b, gamma1, gamma2);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((i + 1) % sample_every == 0 || i + 1 == n_steps) {
      rho = symmetrized(rho);
      const double lo = min_eigenvalue(rho);
      if (lo < -kPositivityTol) {
        throw StepSizeError("integrate_unconditioned: positivity breach " + std::to_string(lo));
      }
      path.times.push_back(static_cast<double>(i + 1) * h);
      path.states.push_back(rho);
    }
  }
  return path;
}

// One conditioned Euler-Maruyama step plus the raw readout pair synthesized
// from the same increments. dxi1/dxi2 are the caller's Gaussian increments
// with variance dt.
struct SmeStepResult {
  Mat rho_next;
  double x1 = 0.0;
  double x2 = 0.0;
};

// Positivity guard: Euler-Maruyama fluctuates outside the state set by
// O(gamma dt) per step even when the integration is healthy, so the abort
// threshold scales with the discretization and never drops below 1e-6.
inline double default_positivity_guard(const ContinuousConfig& cfg) {
  return std::max(1e-6, 25.0 * (cfg.gamma1() + cfg.gamma2()) * cfg.dt);
}

inline SmeStepResult sme_step(const Mat& rho, const Mat& hs, const Mat& a, const Mat& b,
                              const ContinuousConfig& cfg, double dxi1, double dxi2,
                              double positivity_guard = 0.0) {
  detail::require_same_dim(rho, a, "sme_step");
  const double dt = cfg.dt;
  const double g1 = cfg.gamma1();
  const double g2 = cfg.gamma2();
  if (positivity_guard <= 0.0) positivity_guard = default_positivity_guard(cfg);

  const double ea = expectation(a, rho);
  const double eb = expectation(b, rho);

  Mat drho = Complex(0, -1) * commutator(hs, rho) * dt;
  if (g1 > 0.0) {
    drho -= (g1 / 8.0) * commutator(a, commutator(a, rho)) * dt;
    // innovation: sqrt(gamma) * Hermitian part of (A - <A>) rho
    drho += std::sqrt(g1) * dxi1 * (0.5 * (a * rho + rho * a) - ea * rho);
  }
  if (g2 > 0.0) {
    drho -= (g2 / 8.0) * commutator(b, commutator(b, rho)) * dt;
    drho += std::sqrt(g2) * dxi2 * (0.5 * (b * rho + rho * b) - eb * rho);
  }

  SmeStepResult out;
  out.rho_next = rho + drho;
  out.rho_next = 0.5 * (out.rho_next + out.rho_next.adjoint());
  out.rho_next /= out.rho_next.trace().real();

  double lo;
  if (out.rho_next.rows() == 2) {
    // closed form: eigenvalues (1 +- |bloch|)/2
    const double purity = (out.rho_next * out.rho_next).trace().real();
    lo = 0.5 * (1.0 - std::sqrt(std::max(0.0, 2.0 * purity - 1.0)));
  } else {
    lo = min_eigenvalue(out.rho_next);
  }
  if (lo < -positivity_guard) {
    throw StepSizeError("sme_step: minimum eigenvalue " + std::to_string(lo));
  }

  out.x1 = cfg.s1 * ea + cfg.lambda1() * dxi1 / dt;
  out.x2 = cfg.s2 * eb + cfg.lambda2() * dxi2 / dt;
  return out;
}

struct Trajectory {
  MeasurementRecord record;
  StatePath states;
};

// Conditioned trajectory: deterministic given the seed, one readout pair
// per step, state samples every sample_every steps.
inline Trajectory run_trajectory(const DensityMatrix& rho0, const Mat& hs, const Mat& a,
                                 const Mat& b, const ContinuousConfig& cfg, double t_final,
                                 TrajectorySeed seed, int sample_every = 1) {
  if (!(t_final > 0.0)) throw std::invalid_argument("run_trajectory: t_final must be positive");
  if (sample_every < 1) sample_every = 1;
  const auto n_steps = static_cast<std::int64_t>(std::llround(t_final / cfg.dt));
  if (n_steps < 1) throw std::invalid_argument("run_trajectory: t_final shorter than one step");

  NoiseStream noise(seed);
  Trajectory traj;
  traj.record.times.reserve(n_steps);
  traj.record.x1.reserve(n_steps);
  traj.record.x2.reserve(n_steps);
  traj.states.times.push_back(0.0);
  traj.states.states.push_back(rho0.mat);

  const double sqrt_dt = std::sqrt(cfg.dt);
  Mat rho = rho0.mat;
  for (std::int64_t i = 0; i < n_steps; ++i) {
    const auto [g1, g2] = noise.gaussian_pair(static_cast<std::uint64_t>(i));
    const auto step = sme_step(rho, hs, a, b, cfg, g1 * sqrt_dt, g2 * sqrt_dt);
    rho = step.rho_next;
    traj.record.times.push_back(static_cast<double>(i) * cfg.dt);
    traj.record.x1.push_back(step.x1);
    traj.record.x2.push_back(step.x2);
    if ((i + 1) % sample_every == 0 || i + 1 == n_steps) {
      traj.states.times.push_back(static_cast<double>(i + 1) * cfg.dt);
      traj.states.states.push_back(rho);
    }
  }
  return traj;
}

// Ensemble mean and per-entry standard error over conditioned trajectories.
// Trajectories are reduced in fixed-size chunks folded in index order, so
// the result is identical for any worker count.
struct EnsemblePath {
  std::vector<double> times;
  std::vector<Mat> mean;
  std::vector<Eigen::MatrixXd> se;  // sqrt(se_re^2 + se_im^2) per entry
};

inline constexpr int kEnsembleChunk = 32;

inline EnsemblePath ensemble_average(int n_traj, const std::function<StatePath(int)>& run_one,
                                     int n_threads = 0) {
  if (n_traj < 1) throw std::invalid_argument("ensemble_average: need n_traj >= 1");

  struct ChunkSums {
    std::vector<Eigen::MatrixXd> re, im, re2, im2;
    std::vector<double> times;
  };
  const int n_chunks = (n_traj + kEnsembleChunk - 1) / kEnsembleChunk;
  std::vector<ChunkSums> chunks(n_chunks);

  parallel_for(n_chunks, n_threads, [&](std::int64_t c) {
    ChunkSums& sums = chunks[c];
    const int lo = static_cast<int>(c) * kEnsembleChunk;
    const int hi = std::min(n_traj, lo + kEnsembleChunk);
    for (int idx = lo; idx < hi; ++idx) {
      const StatePath path = run_one(idx);
      if (sums.re.empty()) {
        sums.times = path.times;
        const auto n_samples = path.states.size();
        const auto d = path.states.front().rows();
        sums.re.assign(n_samples, Eigen::MatrixXd::Zero(d, d));
        sums.im.assign(n_samples, Eigen::MatrixXd::Zero(d, d));
        sums.re2.assign(n_samples, Eigen::MatrixXd::Zero(d, d));
        sums.im2.assign(n_samples, Eigen::MatrixXd::Zero(d, d));
      }
      if (path.states.size() != sums.re.size()) {
        throw std::invalid_argument("ensemble_average: trajectories disagree on sampling");
      }
      for (std::size_t s = 0; s < path.states.size(); ++s) {
        const Eigen::MatrixXd re = path.states[s].real();
        const Eigen::MatrixXd im = path.states[s].imag();
        sums.re[s] += re;
        sums.im[s] += im;
        sums.re2[s] += re.cwiseProduct(re);
        sums.im2[s] += im.cwiseProduct(im);
      }
    }
  });

  const std::size_t n_samples = chunks.front().re.size();
  const auto d = chunks.front().re.front().rows();
  EnsemblePath out;
  out.times = chunks.front().times;
  out.mean.resize(n_samples);
  out.se.resize(n_samples);

  const double n = static_cast<double>(n_traj);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Eigen::MatrixXd re = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd im = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd re2 = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd im2 = Eigen::MatrixXd::Zero(d, d);
    for (const ChunkSums& cs : chunks) {
      re += cs.re[s];
      im += cs.im[s];
      re2 += cs.re2[s];
      im2 += cs.im2[s];
    }
    out.mean[s] = re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
    out.mean[s] /= n;
    if (n_traj > 1) {
      const Eigen::MatrixXd var_re =
          (re2 - re.cwiseProduct(re) / n).cwiseMax(0.0) / (n - 1.0);
      const Eigen::MatrixXd var_im =
          (im2 - im.cwiseProduct(im) / n).cwiseMax(0.0) / (n - 1.0);
      out.se[s] = ((var_re + var_im) / n).cwiseSqrt();
    } else {
      out.se[s] = Eigen::MatrixXd::Zero(d, d);
    }
  }
  return out;
}

inline EnsemblePath ensemble_average(const DensityMatrix& rho0, const Mat& hs, const Mat& a,
                                     const Mat& b, const ContinuousConfig& cfg, double t_final,
                                     int n_traj, std::uint64_t master_seed, int sample_every = 1,
                                     int n_threads = 0) {
  return ensemble_average(
      n_traj,
      [&](int idx) {
        return run_trajectory(rho0, hs, a, b, cfg, t_final,
                              TrajectorySeed{master_seed, static_cast<std::uint64_t>(idx)},
                              sample_every)
            .states;
      },
      n_threads);
}

// Residual of the composed single-shot + unitary map against the first-order
// generator, plus the projection of that residual onto the mixed
// double-commutator direction [A,[B,.]] + [B,[A,.]].
struct GeneratorCheck {
  double residual_trace_norm = 0.0;
  double cross_projection = 0.0;
};

inline GeneratorCheck discrete_map_generator_check(const Mat& a, const Mat& b,
                                                   const DetectorConfig& cfg,
                                                   const DensityMatrix& rho, const Mat& hs = Mat(),
                                                   double zeta = 0.0, int grid_points = 256) {
  const PointerGrid grid = PointerGrid::standard(cfg, grid_points);
  const MeasurementKernel kernel = measurement_kernel(a, b, cfg, grid);
  Mat phi = posterior_unnormalized(rho.mat, kernel);
  phi = hermitian_part(phi);
  phi /= phi.trace().real();

  Mat generator_dt = -cfg.s1 / (4.0 * cfg.sigma2) * commutator(a, commutator(a, rho.mat)) -
                     cfg.s2 / (4.0 * cfg.sigma2) * commutator(b, commutator(b, rho.mat));
  if (hs.size() > 0 && zeta > 0.0) {
    const double dt = 1.0 / (zeta * cfg.sigma2);
    const Mat u = propagator(hs, dt);
    phi = u * phi * u.adjoint();
    generator_dt += Complex(0, -1) * dt * commutator(hs, rho.mat);
  }

  const Mat residual = phi - rho.mat - generator_dt;
  GeneratorCheck out;
  out.residual_trace_norm = trace_norm(residual);

  const Mat cross = commutator(a, commutator(b, rho.mat)) + commutator(b, commutator(a, rho.mat));
  const double cross_norm = std::sqrt(std::abs((cross.adjoint() * cross).trace().real()));
  if (cross_norm > 1e-14) {
    out.cross_projection = std::abs((cross.adjoint() * residual).trace().real()) / cross_norm;
  }
  return out;
}

}  // namespace qmeas

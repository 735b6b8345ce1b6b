#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "qmeas/continuous.hpp"
#include "qmeas/operators.hpp"

// Measurement-based feedback on a spin-1/2: signal construction from the
// record, the feedback Hamiltonian, the ensemble-averaged feedback master
// equation and its Lindblad specialization, and trajectory-level simulation.

namespace qmeas {

// Static external field coefficients; the system Hamiltonian is
// H = omega_x sigma_x + omega_y sigma_y + omega_z sigma_z.
struct FieldConfig {
  double omega_x = 0.0;
  double omega_y = 0.0;
  double omega_z = 0.0;
};

inline Mat spin_hamiltonian(const FieldConfig& f) {
  if (!std::isfinite(f.omega_x) || !std::isfinite(f.omega_y) || !std::isfinite(f.omega_z)) {
    throw std::invalid_argument("spin_hamiltonian: non-finite field");
  }
  return f.omega_x * pauli_x() + f.omega_y * pauli_y() + f.omega_z * pauli_z();
}

// Spin measurement strengths Gamma_j = gamma_j / 4 for the halved Pauli
// observables A = sigma_x/2, B = sigma_y/2.
struct SpinMeasurementConfig {
  double gamma_x = 0.5;
  double gamma_y = 0.5;

  SpinMeasurementConfig() = default;
  SpinMeasurementConfig(double gx, double gy) : gamma_x(gx), gamma_y(gy) {
    if (!(gamma_x > 0.0) || !(gamma_y > 0.0)) {
      throw std::invalid_argument("SpinMeasurementConfig: strengths must be positive");
    }
  }

  double gamma1() const { return 4.0 * gamma_x; }
  double gamma2() const { return 4.0 * gamma_y; }

  ContinuousConfig continuous(double dt, double zeta = 1.0) const {
    return ContinuousConfig::from_measurement_strengths(dt, zeta, gamma1(), gamma2());
  }

  static SpinMeasurementConfig from_continuous(const ContinuousConfig& cfg) {
    return SpinMeasurementConfig(cfg.gamma1() / 4.0, cfg.gamma2() / 4.0);
  }
};

// Feedback operator F = i kappa_f^{-1} (a1 sigma_x + a2 sigma_y + a3 sigma_z)
// and the control strength kappa_f. Both the alpha triple and the explicit
// matrix are stored; they must agree.
struct FeedbackConfig {
  double kappa_f = 1.0;
  std::array<Complex, 3> alpha{Complex(0), Complex(0), Complex(0)};
  Mat f;

  static FeedbackConfig from_alphas(double kappa_f, Complex a1, Complex a2, Complex a3) {
    if (!(kappa_f > 0.0)) {
      throw std::invalid_argument("FeedbackConfig: kappa_f must be positive");
    }
    FeedbackConfig fb;
    fb.kappa_f = kappa_f;
    fb.alpha = {a1, a2, a3};
    fb.f = Complex(0, 1) / kappa_f * (a1 * pauli_x() + a2 * pauli_y() + a3 * pauli_z());
    return fb;
  }

  static FeedbackConfig from_matrix(double kappa_f, const Mat& f) {
    if (!(kappa_f > 0.0)) {
      throw std::invalid_argument("FeedbackConfig: kappa_f must be positive");
    }
    if (f.rows() != 2 || f.cols() != 2) {
      throw std::invalid_argument("FeedbackConfig: F must be 2x2");
    }
    if (std::abs(f.trace()) > 1e-12) {
      throw std::invalid_argument("FeedbackConfig: F must be a combination of Pauli matrices");
    }
    FeedbackConfig fb;
    fb.kappa_f = kappa_f;
    fb.f = f;
    // alpha_i = -i kappa_f f_i with f_i = Tr(sigma_i F)/2
    fb.alpha = {Complex(0, -0.5) * kappa_f * (pauli_x() * f).trace(),
                Complex(0, -0.5) * kappa_f * (pauli_y() * f).trace(),
                Complex(0, -0.5) * kappa_f * (pauli_z() * f).trace()};
    return fb;
  }

  static FeedbackConfig from_both(double kappa_f, const std::array<Complex, 3>& alphas,
                                  const Mat& f, double tol = 1e-10) {
    FeedbackConfig fb = from_alphas(kappa_f, alphas[0], alphas[1], alphas[2]);
    if ((fb.f - f).cwiseAbs().maxCoeff() > tol) {
      throw std::invalid_argument("FeedbackConfig: alpha triple and F matrix disagree");
    }
    fb.f = f;
    return fb;
  }

  // F = c^dag: drives the population toward the ground state.
  static FeedbackConfig lowering_adjoint(double kappa_f) {
    return from_alphas(kappa_f, Complex(0, -0.5) * kappa_f, Complex(0.5) * kappa_f, Complex(0));
  }
};

// Measurement signals from the raw record: the readout of the detector
// coupled to sigma_j/2 with strength s is sbar_j = 2 x / s, which realizes
// sbar_j dt = <sigma_j> dt + dxi_j / sqrt(Gamma_j).
inline std::pair<double, double> signals_from_sample(double x1, double x2,
                                                     const ContinuousConfig& cfg) {
  if (!(cfg.s1 > 0.0) || !(cfg.s2 > 0.0)) {
    throw std::invalid_argument("signals_from_sample: couplings must be positive");
  }
  return {2.0 * x1 / cfg.s1, 2.0 * x2 / cfg.s2};
}

inline std::pair<std::vector<double>, std::vector<double>> signals_from_record(
    const std::vector<double>& x1, const std::vector<double>& x2, const ContinuousConfig& cfg) {
  if (x1.size() != x2.size()) {
    throw std::invalid_argument("signals_from_record: record length mismatch");
  }
  std::vector<double> sx(x1.size()), sy(x2.size());
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const auto [a, b] = signals_from_sample(x1[i], x2[i], cfg);
    sx[i] = a;
    sy[i] = b;
  }
  return {std::move(sx), std::move(sy)};
}

// H_f = -i kappa_f cbar F + h.c. with cbar = (sbar_x - i sbar_y)/2. The
// caller scales time by dt (exp(-i H_f dt)).
inline Mat feedback_hamiltonian(double sbar_x, double sbar_y, const FeedbackConfig& fb) {
  const Complex cbar = 0.5 * Complex(sbar_x, -sbar_y);
  const Mat term = Complex(0, -1) * fb.kappa_f * cbar * fb.f;
  return term + term.adjoint().eval();
}

// Ensemble-averaged master equation under simultaneous measurement of
// sigma_x/2, sigma_y/2 and instantaneous feedback through F.
inline Mat gme_rhs(const Mat& rho, const Mat& hs, double gamma_x, double gamma_y,
                   const FeedbackConfig& fb) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw std::invalid_argument("gme_rhs: spin-1/2 states only");
  }
  if (!(gamma_x > 0.0) || !(gamma_y > 0.0)) {
    throw std::invalid_argument("gme_rhs: measurement strengths must be positive");
  }
  const Mat c = lowering();
  const Mat cd = c.adjoint();
  const Mat& f = fb.f;
  const Mat fd = f.adjoint();
  const double kf = fb.kappa_f;

  Mat out = Complex(0, -1) * commutator(hs, rho);
  out += 0.5 * gamma_y * (dissipator(c, rho) + dissipator(cd, rho));
  out += 0.25 * (gamma_x - gamma_y) * dissipator(c + cd, rho);
  out += kf * kf / (4.0 * gamma_x) * dissipator(Complex(0, 1) * (f - fd), rho);
  out += kf * kf / (4.0 * gamma_y) * dissipator(f + fd, rho);
  out -= 0.5 * kf *
         (commutator(f, c * rho) - commutator(fd, rho * cd) + commutator(f, rho * c) -
          commutator(fd, cd * rho));
  return out;
}

// Rates of the Lindblad form the feedback equation takes for F = c^dag,
// together with the quantities controlling the x-y relaxation branches.
struct RateConstants {
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double eta = 0.0;
  double discriminant = 0.0;
  // decay exponents of the x-y components; for discriminant < 0 both hold
  // the common real part and mu_imag() gives the oscillation frequency
  double mu_plus = 0.0;
  double mu_minus = 0.0;

  double mu_imag() const {
    return discriminant < 0.0 ? 0.5 * std::sqrt(-discriminant) : 0.0;
  }

  static RateConstants from_k(double k1, double k2, double k3, const FieldConfig& field) {
    RateConstants r;
    r.k1 = k1;
    r.k2 = k2;
    r.k3 = k3;
    const double s = k1 + k2;
    const double sz = s + 2.0 * k3;
    const double sy = s + 4.0 * k3;
    r.eta = s * sz * sy + 8.0 * field.omega_x * field.omega_x * s +
            8.0 * field.omega_y * field.omega_y * sy +
            16.0 * field.omega_z * field.omega_z * sz;
    r.discriminant = 4.0 * k3 * k3 - 16.0 * field.omega_z * field.omega_z;
    if (r.discriminant >= 0.0) {
      const double root = std::sqrt(r.discriminant);
      r.mu_plus = 0.5 * (sz + root);
      r.mu_minus = 0.5 * (sz - root);
    } else {
      r.mu_plus = r.mu_minus = 0.5 * sz;
    }
    return r;
  }

  static RateConstants from_feedback(double gamma_x, double gamma_y, double kappa_f,
                                     const FieldConfig& field) {
    if (!(gamma_x > 0.0) || !(gamma_y > 0.0)) {
      throw std::invalid_argument("RateConstants: measurement strengths must be positive");
    }
    if (kappa_f < 0.0) {
      throw std::invalid_argument("RateConstants: kappa_f must be non-negative");
    }
    const double k1 = 0.5 * gamma_y + kappa_f * kappa_f / (2.0 * gamma_x) + kappa_f;
    const double k2 = k1 - 2.0 * kappa_f;
    const double k3 = 0.25 * (gamma_x - gamma_y) - kappa_f * kappa_f / (4.0 * gamma_x) +
                      kappa_f * kappa_f / (4.0 * gamma_y);
    return from_k(k1, k2, k3, field);
  }
};

// Lindblad form of the feedback equation for F = c^dag.
inline Mat me_rhs(const Mat& rho, const Mat& hs, const RateConstants& rates) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw std::invalid_argument("me_rhs: spin-1/2 states only");
  }
  const Mat c = lowering();
  const Mat cd = c.adjoint();
  Mat out = Complex(0, -1) * commutator(hs, rho);
  out += rates.k1 * dissipator(c, rho);
  out += rates.k2 * dissipator(cd, rho);
  out += rates.k3 * dissipator(c + cd, rho);
  return out;
}

// Conditioned trajectory with feedback: per step, the measurement update
// (Euler-Maruyama), then the exact feedback unitary exp(-i H_f dt) built
// from the same step's signals. The exact exponential carries the
// second-order Ito contribution of the feedback automatically.
inline StatePath run_feedback_trajectory(const DensityMatrix& rho0, const Mat& hs,
                                         const ContinuousConfig& cfg, const FeedbackConfig& fb,
                                         double t_final, TrajectorySeed seed,
                                         int sample_every = 1) {
  if (rho0.dim() != 2) {
    throw std::invalid_argument("run_feedback_trajectory: spin-1/2 states only");
  }
  if (!(t_final > 0.0)) {
    throw std::invalid_argument("run_feedback_trajectory: t_final must be positive");
  }
  if (sample_every < 1) sample_every = 1;
  const auto n_steps = static_cast<std::int64_t>(std::llround(t_final / cfg.dt));
  if (n_steps < 1) {
    throw std::invalid_argument("run_feedback_trajectory: t_final shorter than one step");
  }
  const SpinMeasurementConfig meas = SpinMeasurementConfig::from_continuous(cfg);
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  const Mat sx = pauli_x();
  const Mat sy = pauli_y();

  NoiseStream noise(seed);
  StatePath path;
  path.times.push_back(0.0);
  path.states.push_back(rho0.mat);

  const double dt = cfg.dt;
  const double sqrt_dt = std::sqrt(dt);
  const double inv_sqrt_gx = 1.0 / std::sqrt(meas.gamma_x);
  const double inv_sqrt_gy = 1.0 / std::sqrt(meas.gamma_y);

  Mat rho = rho0.mat;
  for (std::int64_t i = 0; i < n_steps; ++i) {
    const auto [g1, g2] = noise.gaussian_pair(static_cast<std::uint64_t>(i));
    const double dxi_x = g1 * sqrt_dt;
    const double dxi_y = g2 * sqrt_dt;

    // signals carry the pre-update means of the step being measured
    const double mean_sx = expectation(sx, rho);
    const double mean_sy = expectation(sy, rho);
    const double sbar_x = mean_sx + dxi_x * inv_sqrt_gx / dt;
    const double sbar_y = mean_sy + dxi_y * inv_sqrt_gy / dt;

    rho = sme_step(rho, hs, a, b, cfg, dxi_x, dxi_y).rho_next;

    if (fb.kappa_f > 0.0) {
      const Mat hf = feedback_hamiltonian(sbar_x, sbar_y, fb);
      const Mat u = propagator(hf, dt);
      rho = u * rho * u.adjoint();
      rho = 0.5 * (rho + rho.adjoint());
      rho /= rho.trace().real();
    }

    if ((i + 1) % sample_every == 0 || i + 1 == n_steps) {
      path.times.push_back(static_cast<double>(i + 1) * dt);
      path.states.push_back(rho);
    }
  }
  return path;
}

}  // namespace qmeas

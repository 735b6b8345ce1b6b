#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <utility>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/operators.hpp"
#include "qmeas/parallel.hpp"

// Generalized single-shot joint measurement of two observables through a
// pair of Gaussian pointer detectors: exact pointer moments by quadrature,
// the truncated commutator-series approximations, and the relative readout
// deviations.

namespace qmeas {

// Couplings of the two detectors. sigma2 sets the measurement accuracy; the
// pointer widths are delta_i = s_i * sigma2 and the accuracy ratios
// r_i = s_i / sigma2.
struct DetectorConfig {
  double s1 = 0.1;
  double s2 = 0.1;
  double sigma2 = 1.0;

  DetectorConfig() = default;
  DetectorConfig(double s1_, double s2_, double sigma2_) : s1(s1_), s2(s2_), sigma2(sigma2_) {
    if (!(s1 > 0.0) || !(s2 > 0.0) || !(sigma2 > 0.0)) {
      throw std::invalid_argument("DetectorConfig: couplings and sigma2 must be positive");
    }
  }

  double delta1() const { return s1 * sigma2; }
  double delta2() const { return s2 * sigma2; }
  double r1() const { return s1 / sigma2; }
  double r2() const { return s2 / sigma2; }
};

// Discretization of the detector momentum wavefunctions. The position grid
// is the DFT-conjugate one: dx = pi / p_max per detector.
struct PointerGrid {
  int n_points = 256;
  double p_max1 = 0.0;
  double p_max2 = 0.0;

  // p_max = 8/sqrt(delta): the Gaussian momentum tail is below exp(-32) of
  // its peak there.
  static PointerGrid standard(const DetectorConfig& cfg, int n_points = 256) {
    PointerGrid g;
    g.n_points = n_points;
    g.p_max1 = 8.0 / std::sqrt(cfg.delta1());
    g.p_max2 = 8.0 / std::sqrt(cfg.delta2());
    g.validate();
    return g;
  }

  void validate() const {
    if (n_points < 4 || (n_points & (n_points - 1)) != 0) {
      throw std::invalid_argument("PointerGrid: n_points must be a power of two >= 4");
    }
    if (!(p_max1 > 0.0) || !(p_max2 > 0.0)) {
      throw std::invalid_argument("PointerGrid: p_max must be positive");
    }
  }

  // Amplitude at |p| = p_max must be below 1e-12 of the peak for both
  // detectors, i.e. delta * p_max^2 / 2 > 12 ln 10.
  void require_resolves(const DetectorConfig& cfg) const {
    validate();
    const double bound = 2.0 * 12.0 * std::log(10.0);
    if (cfg.delta1() * p_max1 * p_max1 < bound || cfg.delta2() * p_max2 * p_max2 < bound) {
      throw std::invalid_argument(
          "PointerGrid: momentum extent too narrow for the detector widths");
    }
  }

  double dp1() const { return 2.0 * p_max1 / n_points; }
  double dp2() const { return 2.0 * p_max2 / n_points; }
  double dx1() const { return M_PI / p_max1; }
  double dx2() const { return M_PI / p_max2; }
};

struct PointerAmplitudes {
  std::vector<double> p1, p2;   // momentum nodes
  Eigen::VectorXcd amp1, amp2;  // <p|d_i> sampled on the nodes
  double dp1 = 0.0, dp2 = 0.0;
};

// Gaussian momentum-space wavefunctions of the two pointers.
inline PointerAmplitudes pointer_momentum_amplitudes(const DetectorConfig& cfg,
                                                     const PointerGrid& grid) {
  grid.require_resolves(cfg);
  const int n = grid.n_points;
  PointerAmplitudes out;
  out.dp1 = grid.dp1();
  out.dp2 = grid.dp2();
  out.p1.resize(n);
  out.p2.resize(n);
  out.amp1.resize(n);
  out.amp2.resize(n);
  const double d1 = cfg.delta1();
  const double d2 = cfg.delta2();
  const double c1 = std::pow(d1 / M_PI, 0.25);
  const double c2 = std::pow(d2 / M_PI, 0.25);
  for (int j = 0; j < n; ++j) {
    out.p1[j] = (j - n / 2) * out.dp1;
    out.p2[j] = (j - n / 2) * out.dp2;
    out.amp1[j] = c1 * std::exp(-0.5 * d1 * out.p1[j] * out.p1[j]);
    out.amp2[j] = c2 * std::exp(-0.5 * d2 * out.p2[j] * out.p2[j]);
  }
  return out;
}

// Sampled field of measurement operators M(x1, x2) on the conjugate position
// grid, with the uniform quadrature weight dx1*dx2 per node.
struct MeasurementKernel {
  int dim = 0;
  int n = 0;
  std::vector<double> x1, x2;
  double dx1 = 0.0, dx2 = 0.0;
  std::vector<Mat> m;  // row-major: m[i * n + l] = M(x1[i], x2[l])
  double completeness_defect = 0.0;

  const Mat& at(int i, int l) const { return m[static_cast<std::size_t>(i) * n + l]; }
  double weight() const { return dx1 * dx2; }
};

namespace detail {

// Unscaled inverse DFT along both axes of an n x n complex matrix.
inline void idft2_inplace(Eigen::MatrixXcd& plane) {
  const int n = static_cast<int>(plane.rows());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  Eigen::VectorXcd buf(n), out(n);
  for (int k = 0; k < n; ++k) {
    buf = plane.col(k);
    fft.inv(out.data(), buf.data(), n);
    plane.col(k) = out;
  }
  for (int m = 0; m < n; ++m) {
    buf = plane.row(m).transpose();
    fft.inv(out.data(), buf.data(), n);
    plane.row(m) = out.transpose();
  }
}

}  // namespace detail

// Builds M(x1, x2) as the Fourier transform of exp(-i (s1 p1 A + s2 p2 B))
// weighted by the pointer momentum amplitudes. One Hermitian
// eigendecomposition per momentum node; construction parallelizes over
// momentum rows.
inline MeasurementKernel measurement_kernel(const Mat& a, const Mat& b, const DetectorConfig& cfg,
                                            const PointerGrid& grid,
                                            double completeness_tol = 1e-6, int n_threads = 0) {
  detail::require_same_dim(a, b, "measurement_kernel");
  detail::require_square(a, "measurement_kernel");
  if (hermiticity_defect(a) > kHermiticityTol || hermiticity_defect(b) > kHermiticityTol) {
    throw std::invalid_argument("measurement_kernel: observables must be Hermitian");
  }
  const PointerAmplitudes amps = pointer_momentum_amplitudes(cfg, grid);

  const int n = grid.n_points;
  const int d = static_cast<int>(a.rows());

  std::vector<Eigen::MatrixXcd> planes(static_cast<std::size_t>(d) * d);
  for (auto& pl : planes) pl.resize(n, n);

  // momentum-space field, premultiplied by the (-1)^(j+k) DFT shift
  parallel_for(n, n_threads, [&](std::int64_t j) {
    Eigen::SelfAdjointEigenSolver<Mat> es;
    Mat h(d, d), w(d, d);
    Eigen::VectorXcd phases(d);
    const Mat a1 = cfg.s1 * a;
    const Mat b1 = cfg.s2 * b;
    for (int k = 0; k < n; ++k) {
      h = amps.p1[j] * a1 + amps.p2[k] * b1;
      es.compute(h);
      for (int q = 0; q < d; ++q) {
        phases[q] = std::exp(Complex(0.0, -es.eigenvalues()[q]));
      }
      w.noalias() = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
      const double coef =
          (((j + k) & 1) ? -1.0 : 1.0) * amps.amp1[j].real() * amps.amp2[k].real();
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          planes[static_cast<std::size_t>(r) * d + c](j, k) = coef * w(r, c);
        }
      }
    }
  });

  for (auto& pl : planes) detail::idft2_inplace(pl);

  MeasurementKernel kernel;
  kernel.dim = d;
  kernel.n = n;
  kernel.dx1 = grid.dx1();
  kernel.dx2 = grid.dx2();
  kernel.x1.resize(n);
  kernel.x2.resize(n);
  for (int i = 0; i < n; ++i) {
    kernel.x1[i] = (i - n / 2) * kernel.dx1;
    kernel.x2[i] = (i - n / 2) * kernel.dx2;
  }

  // e^{i pi n / 2} per axis; real +-1 for n a power of two
  const double axis_phase = (n / 2) % 2 == 0 ? 1.0 : -1.0;
  const double scale0 = amps.dp1 * amps.dp2 / (2.0 * M_PI) * axis_phase * axis_phase;

  kernel.m.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < n; ++l) {
      const double s = (((i + l) & 1) ? -scale0 : scale0);
      Mat mm(d, d);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          mm(r, c) = s * planes[static_cast<std::size_t>(r) * d + c](i, l);
        }
      }
      kernel.m[static_cast<std::size_t>(i) * n + l] = std::move(mm);
    }
  }
  planes.clear();

  // POVM completeness over the position grid
  Mat comp = Mat::Zero(d, d);
  for (const auto& mm : kernel.m) {
    comp.noalias() += mm.adjoint() * mm;
  }
  comp *= kernel.weight();
  kernel.completeness_defect = spectral_norm_hermitian(hermitian_part(comp) - Mat::Identity(d, d));
  if (kernel.completeness_defect > completeness_tol) {
    throw GridResolutionError("measurement kernel completeness defect " +
                              std::to_string(kernel.completeness_defect) + " exceeds tolerance");
  }
  return kernel;
}

// Unnormalized post-measurement state integrated over all readouts.
inline Mat posterior_unnormalized(const Mat& rho, const MeasurementKernel& kernel) {
  if (rho.rows() != kernel.dim || rho.cols() != kernel.dim) {
    throw std::invalid_argument("posterior: state/kernel dimension mismatch");
  }
  Mat acc = Mat::Zero(kernel.dim, kernel.dim);
  Mat t(kernel.dim, kernel.dim);
  for (const auto& mm : kernel.m) {
    t.noalias() = mm * rho;
    acc.noalias() += t * mm.adjoint();
  }
  return acc * kernel.weight();
}

inline DensityMatrix posterior_state(const DensityMatrix& rho, const MeasurementKernel& kernel) {
  Mat post = posterior_unnormalized(rho.mat, kernel);
  post = hermitian_part(post);
  post /= post.trace().real();
  return DensityMatrix(std::move(post));
}

// First and second pointer moments plus post-measurement observable means,
// all by quadrature over the kernel field. This is the independent oracle
// the series formulas are checked against.
struct SingleShotMoments {
  double mean_x1 = 0.0;
  double mean_x2 = 0.0;
  double mean_x1_sq = 0.0;
  double mean_x2_sq = 0.0;
  double corr_x1x2 = 0.0;
  double mean_A_post = 0.0;
  double mean_B_post = 0.0;
};

inline SingleShotMoments exact_moments(const DensityMatrix& rho, const Mat& a, const Mat& b,
                                       const MeasurementKernel& kernel) {
  if (rho.dim() != kernel.dim) {
    throw std::invalid_argument("exact_moments: state/kernel dimension mismatch");
  }
  detail::require_same_dim(a, b, "exact_moments");
  const int n = kernel.n;
  const int d = kernel.dim;
  Mat post = Mat::Zero(d, d);
  Mat t(d, d), mrho(d, d);
  SingleShotMoments mom;
  for (int i = 0; i < n; ++i) {
    const double x1 = kernel.x1[i];
    for (int l = 0; l < n; ++l) {
      const double x2 = kernel.x2[l];
      const Mat& mm = kernel.at(i, l);
      mrho.noalias() = mm * rho.mat;
      t.noalias() = mrho * mm.adjoint();
      const double p = t.trace().real();
      post += t;
      mom.mean_x1 += x1 * p;
      mom.mean_x2 += x2 * p;
      mom.mean_x1_sq += x1 * x1 * p;
      mom.mean_x2_sq += x2 * x2 * p;
      mom.corr_x1x2 += x1 * x2 * p;
    }
  }
  const double w = kernel.weight();
  mom.mean_x1 *= w;
  mom.mean_x2 *= w;
  mom.mean_x1_sq *= w;
  mom.mean_x2_sq *= w;
  mom.corr_x1x2 *= w;
  post *= w;
  mom.mean_A_post = (a * post).trace().real();
  mom.mean_B_post = (b * post).trace().real();
  return mom;
}

inline SingleShotMoments exact_moments(const DensityMatrix& rho, const Mat& a, const Mat& b,
                                       const DetectorConfig& cfg, const PointerGrid& grid) {
  return exact_moments(rho, a, b, measurement_kernel(a, b, cfg, grid));
}

// Leading commutator-series truncations of the post-measurement means and
// pointer first moments.
struct FirstMoments {
  double mean_A_post = 0.0;
  double mean_B_post = 0.0;
  double mean_x1 = 0.0;
  double mean_x2 = 0.0;
};

inline FirstMoments series_first_moments(const DensityMatrix& rho, const Mat& a, const Mat& b,
                                         const DetectorConfig& cfg) {
  detail::require_same_dim(a, b, "series_first_moments");
  if (rho.dim() != a.rows()) {
    throw std::invalid_argument("series_first_moments: dimension mismatch");
  }
  const Mat bba = commutator(b, commutator(b, a));
  const Mat aab = commutator(a, commutator(a, b));
  const double ea = expectation(a, rho.mat);
  const double eb = expectation(b, rho.mat);
  const double ebba = expectation(bba, rho.mat);
  const double eaab = expectation(aab, rho.mat);
  FirstMoments out;
  out.mean_A_post = ea - cfg.s2 / (4.0 * cfg.sigma2) * ebba;
  out.mean_B_post = eb - cfg.s1 / (4.0 * cfg.sigma2) * eaab;
  out.mean_x1 = cfg.s1 * (ea - cfg.s2 / (12.0 * cfg.sigma2) * ebba);
  out.mean_x2 = cfg.s2 * (eb - cfg.s1 / (12.0 * cfg.sigma2) * eaab);
  return out;
}

// Second pointer moments including the mixed triple-commutator bracket.
struct SecondMoments {
  double mean_x1_sq = 0.0;
  double mean_x2_sq = 0.0;
};

inline SecondMoments series_second_moments(const DensityMatrix& rho, const Mat& a, const Mat& b,
                                           const DetectorConfig& cfg) {
  detail::require_same_dim(a, b, "series_second_moments");
  if (rho.dim() != a.rows()) {
    throw std::invalid_argument("series_second_moments: dimension mismatch");
  }
  const double s1 = cfg.s1, s2 = cfg.s2, sig2 = cfg.sigma2;
  const auto bracket = [&](const Mat& u, const Mat& v) {
    // <[v,[v,u^2]]> + <u [v,[v,u]]> + <[v, u [v,u]]>
    const Mat u2 = u * u;
    const Complex t1 = ((v * (v * u2 - u2 * v) - (v * u2 - u2 * v) * v) * rho.mat).trace();
    const Mat vvu = commutator(v, commutator(v, u));
    const Complex t2 = ((u * vvu) * rho.mat).trace();
    const Mat uvu = u * commutator(v, u);
    const Complex t3 = (commutator(v, uvu) * rho.mat).trace();
    return (t1 + t2 + t3).real();
  };
  const double ea2 = expectation(a * a, rho.mat);
  const double eb2 = expectation(b * b, rho.mat);
  SecondMoments out;
  out.mean_x1_sq = 0.5 * s1 * sig2 *
                   (1.0 + 2.0 * s1 / sig2 * ea2 -
                    s1 * s2 / (12.0 * sig2 * sig2) * bracket(a, b));
  out.mean_x2_sq = 0.5 * s2 * sig2 *
                   (1.0 + 2.0 * s2 / sig2 * eb2 -
                    s1 * s2 / (12.0 * sig2 * sig2) * bracket(b, a));
  return out;
}

// Relative deviation of the scaled pointer means from the post-measurement
// observable means, from quadrature.
struct Deviations {
  double eps1 = 0.0;
  double eps2 = 0.0;
};

inline Deviations relative_deviations(const SingleShotMoments& mom, const DetectorConfig& cfg,
                                      double threshold = 1e-6) {
  if (std::abs(mom.mean_A_post) <= threshold || std::abs(mom.mean_B_post) <= threshold) {
    throw DegenerateStateError("relative_deviations: posterior mean below threshold");
  }
  Deviations d;
  d.eps1 = (mom.mean_x1 - cfg.s1 * mom.mean_A_post) / (cfg.s1 * mom.mean_A_post);
  d.eps2 = (mom.mean_x2 - cfg.s2 * mom.mean_B_post) / (cfg.s2 * mom.mean_B_post);
  return d;
}

inline Deviations relative_deviations(const DensityMatrix& rho, const Mat& a, const Mat& b,
                                      const DetectorConfig& cfg, const PointerGrid& grid,
                                      double threshold = 1e-6) {
  return relative_deviations(exact_moments(rho, a, b, cfg, grid), cfg, threshold);
}

// Closed second-order deviation formulas for the angular-momentum pair
// (A, B) = (Lx, Ly); state-independent by the closed algebra.
inline Deviations deviation_formula_angular(const DetectorConfig& cfg) {
  const double sig2 = cfg.sigma2;
  const auto formula = [&](double sa, double sb) {
    // deviation of the detector coupled with strength sa, disturbed by sb
    const double num = sb / (6.0 * sig2) * (1.0 - (sa + 3.0 * sb) / (20.0 * sig2));
    const double den = 1.0 - sb / (4.0 * sig2) + sb * (sa + 3.0 * sb) / (96.0 * sig2 * sig2);
    return num / den;
  };
  Deviations d;
  d.eps1 = formula(cfg.s1, cfg.s2);
  d.eps2 = formula(cfg.s2, cfg.s1);
  return d;
}

}  // namespace qmeas

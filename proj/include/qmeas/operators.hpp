#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "qmeas/errors.hpp"
#include "qmeas/rng.hpp"

// Small dense complex-Hermitian linear algebra: observables, density
// matrices, commutators, dissipators and unitary propagators. Everything
// here is a pure function on values; dimensions are capped at kMaxDim
// (the systems of interest have d <= 5).

namespace qmeas {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;

inline constexpr int kMaxDim = 64;
inline constexpr double kHermiticityTol = 1e-12;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPositivityTol = 1e-8;

namespace detail {

inline void require_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square and non-empty");
  }
  if (m.rows() > kMaxDim) {
    throw std::invalid_argument(std::string(what) + ": dimension exceeds cap of " +
                                std::to_string(kMaxDim));
  }
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
  }
}

inline void require_same_dim(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

}  // namespace detail

inline double hermiticity_defect(const Mat& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const Mat& hermitian) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Operator 2-norm of a Hermitian matrix.
inline double spectral_norm_hermitian(const Mat& hermitian) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Sum of singular values; for Hermitian input this is the sum of |eigenvalue|.
inline double trace_norm(const Mat& m) {
  if (hermiticity_defect(m) < 1e-10) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
  }
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().sum();
}

// A finite-dimensional observable. Entries must equal their conjugate
// transpose to within kHermiticityTol.
struct HermitianOperator {
  Mat mat;

  HermitianOperator() = default;
  explicit HermitianOperator(Mat m) : mat(std::move(m)) {
    detail::require_square(mat, "HermitianOperator");
    const double defect = hermiticity_defect(mat);
    if (defect > kHermiticityTol) {
      throw std::invalid_argument("HermitianOperator: hermiticity defect " +
                                  std::to_string(defect));
    }
  }

  Eigen::Index dim() const { return mat.rows(); }
};

// An arbitrary (not necessarily Hermitian) operator, e.g. the lowering
// operator or a measurement-kernel value.
struct GeneralOperator {
  Mat mat;

  GeneralOperator() = default;
  explicit GeneralOperator(Mat m) : mat(std::move(m)) {
    detail::require_square(mat, "GeneralOperator");
  }

  Eigen::Index dim() const { return mat.rows(); }
};

// System state: Hermitian, unit trace, spectrum bounded below by
// -kPositivityTol.
struct DensityMatrix {
  Mat mat;

  DensityMatrix() = default;
  explicit DensityMatrix(Mat m) : mat(std::move(m)) {
    detail::require_square(mat, "DensityMatrix");
    const double defect = hermiticity_defect(mat);
    if (defect > kHermiticityTol) {
      throw std::invalid_argument("DensityMatrix: hermiticity defect " + std::to_string(defect));
    }
    const double tr_err = std::abs(mat.trace().real() - 1.0) + std::abs(mat.trace().imag());
    if (tr_err > kTraceTol) {
      throw std::invalid_argument("DensityMatrix: trace deviates from one by " +
                                  std::to_string(tr_err));
    }
    const double lo = min_eigenvalue(mat);
    if (lo < -kPositivityTol) {
      throw std::invalid_argument("DensityMatrix: minimum eigenvalue " + std::to_string(lo));
    }
  }

  static DensityMatrix pure(const Eigen::VectorXcd& psi) {
    const double n2 = psi.squaredNorm();
    if (n2 <= 0.0) throw std::invalid_argument("DensityMatrix::pure: zero vector");
    Mat m = psi * psi.adjoint() / n2;
    return DensityMatrix(std::move(m));
  }

  Eigen::Index dim() const { return mat.rows(); }
};

inline Mat commutator(const Mat& a, const Mat& b) {
  detail::require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

inline GeneralOperator commutator(const GeneralOperator& a, const GeneralOperator& b) {
  return GeneralOperator(commutator(a.mat, b.mat));
}

// O rho O^dag - (O^dag O rho + rho O^dag O)/2. Traceless and Hermitian for
// Hermitian rho.
inline Mat dissipator(const Mat& op, const Mat& rho) {
  detail::require_same_dim(op, rho, "dissipator");
  const Mat od = op.adjoint();
  const Mat odo = od * op;
  return op * rho * od - 0.5 * (odo * rho + rho * odo);
}

inline Mat hermitian_part(const Mat& op) {
  detail::require_square(op, "hermitian_part");
  return 0.5 * (op + op.adjoint());
}

// exp(-i h t) for Hermitian h, via eigendecomposition. Unconditionally
// stable and unitary up to rounding.
inline Mat propagator(const Mat& h, double t) {
  detail::require_square(h, "propagator");
  if (!std::isfinite(t)) throw std::invalid_argument("propagator: non-finite time");
  if (hermiticity_defect(h) > 1e-9) {
    throw std::invalid_argument("propagator: generator is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  const Eigen::VectorXd& w = es.eigenvalues();
  Eigen::VectorXcd phases(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    phases[i] = std::exp(Complex(0.0, -w[i] * t));
  }
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

// Hermiticity repair for long integrations: symmetrize, but refuse to mask a
// real asymmetry.
inline Mat symmetrized(const Mat& rho, double max_defect = 1e-8) {
  const double defect = hermiticity_defect(rho);
  if (defect > max_defect) {
    throw StepSizeError("state hermiticity defect " + std::to_string(defect));
  }
  return 0.5 * (rho + rho.adjoint());
}

inline double expectation(const Mat& op, const Mat& rho) {
  return (op * rho).trace().real();
}

// --- spin-1/2 basics -------------------------------------------------------

inline Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Mat pauli_y() {
  Mat m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

inline Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

// Lowering operator (sigma_x - i sigma_y)/2; maps the excited state
// (first basis vector) to the ground state.
inline Mat lowering() {
  Mat m = Mat::Zero(2, 2);
  m(1, 0) = 1;
  return m;
}

// --- angular momentum ------------------------------------------------------

struct AngularMomentum {
  HermitianOperator lx, ly, lz;
};

// Standard 2j+1 dimensional angular-momentum matrices in the basis
// |j, m> with m = j, j-1, ..., -j.
inline AngularMomentum angular_momentum(double j) {
  const double two_j = 2.0 * j;
  const double rounded = std::round(two_j);
  if (!(two_j > 0.0) || std::abs(two_j - rounded) > 1e-9) {
    throw std::invalid_argument("angular_momentum: j must be a positive half-integer");
  }
  const int d = static_cast<int>(rounded) + 1;
  if (d > kMaxDim) {
    throw std::invalid_argument("angular_momentum: dimension exceeds cap");
  }

  Mat lz = Mat::Zero(d, d);
  Mat lplus = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const double m = j - i;
    lz(i, i) = m;
    if (i > 0) {
      // raising connects |j, m> to |j, m+1>
      lplus(i - 1, i) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
  }
  const Mat lminus = lplus.adjoint();
  Mat lx = 0.5 * (lplus + lminus);
  Mat ly = Complex(0, -0.5) * (lplus - lminus);
  return AngularMomentum{HermitianOperator(std::move(lx)), HermitianOperator(std::move(ly)),
                         HermitianOperator(std::move(lz))};
}

// Eigenvector of the largest eigenvalue of a Hermitian operator.
inline Eigen::VectorXcd top_eigenvector(const Mat& h) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  return es.eigenvectors().col(h.rows() - 1);
}

// --- random test states ----------------------------------------------------

inline Mat random_general(CounterRng& rng, int dim) {
  Mat m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int k = 0; k < dim; ++k) {
      m(i, k) = Complex(rng.next_gaussian(), rng.next_gaussian());
    }
  }
  return m;
}

inline Mat random_hermitian(CounterRng& rng, int dim) {
  const Mat g = random_general(rng, dim);
  return 0.5 * (g + g.adjoint());
}

// Ginibre-induced random mixed state.
inline DensityMatrix random_density(CounterRng& rng, int dim) {
  const Mat g = random_general(rng, dim);
  Mat rho = g * g.adjoint();
  rho /= rho.trace().real();
  rho = 0.5 * (rho + rho.adjoint());
  return DensityMatrix(std::move(rho));
}

}  // namespace qmeas

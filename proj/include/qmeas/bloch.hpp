#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/feedback.hpp"
#include "qmeas/fitting.hpp"
#include "qmeas/operators.hpp"

// Closed-form and ODE-level analytics of the spin-1/2 feedback dynamics in
// Bloch coordinates: right-hand side, steady states, effective temperature,
// relaxation times, time-domain solutions and reachable-set sweeps.

namespace qmeas {

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }

  static BlochVector validated(double x, double y, double z, double tol = 1e-9) {
    BlochVector v{x, y, z};
    if (!(v.norm() * v.norm() <= 1.0 + tol)) {
      throw std::invalid_argument("BlochVector: norm exceeds one");
    }
    return v;
  }
};

inline Mat density_from_bloch(const BlochVector& v) {
  return 0.5 *
         (Mat::Identity(2, 2) + v.x * pauli_x() + v.y * pauli_y() + v.z * pauli_z());
}

inline BlochVector bloch_from_density(const Mat& rho) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw std::invalid_argument("bloch_from_density: spin-1/2 states only");
  }
  return BlochVector{(pauli_x() * rho).trace().real(), (pauli_y() * rho).trace().real(),
                     (pauli_z() * rho).trace().real()};
}

// Bloch-coordinate form of the Lindblad feedback equation.
inline std::array<double, 3> bloch_rhs(const BlochVector& v, const FieldConfig& f,
                                       const RateConstants& k) {
  const double s = k.k1 + k.k2;
  return {2.0 * (f.omega_y * v.z - f.omega_z * v.y) - 0.5 * s * v.x,
          2.0 * (f.omega_z * v.x - f.omega_x * v.z) - 0.5 * (s + 4.0 * k.k3) * v.y,
          2.0 * (f.omega_x * v.y - f.omega_y * v.x) - (s + 2.0 * k.k3) * v.z + k.k2 - k.k1};
}

// Closed-form fixed point of the Bloch equations.
inline BlochVector steady_state(const FieldConfig& f, const RateConstants& k) {
  if (k.eta == 0.0) {
    throw SingularParametersError("steady_state: eta vanishes");
  }
  const double s = k.k1 + k.k2;
  const double sy = s + 4.0 * k.k3;
  const double d21 = k.k2 - k.k1;
  BlochVector v;
  v.x = 4.0 / k.eta * d21 * (f.omega_y * sy + 4.0 * f.omega_x * f.omega_z);
  v.y = 4.0 / k.eta * (-d21) * (f.omega_x * s - 4.0 * f.omega_y * f.omega_z);
  v.z = d21 / k.eta * (s * sy + 16.0 * f.omega_z * f.omega_z);
  return v;
}

// Temperature assigned to the diagonal steady state via the Boltzmann ratio
// of its populations; the qubit splitting is 2 omega_z.
inline double effective_temperature(double omega_z, const RateConstants& k,
                                    double k_boltzmann = 1.0) {
  if (!(omega_z > 0.0)) {
    throw std::invalid_argument("effective_temperature: omega_z must be positive");
  }
  if (!(k_boltzmann > 0.0)) {
    throw std::invalid_argument("effective_temperature: k_B must be positive");
  }
  const double num = k.k1 + k.k3;
  const double den = k.k2 + k.k3;
  if (den < 0.0 || num <= den) {
    throw InvalidRegimeError("effective_temperature: requires k1+k3 > k2+k3 >= 0");
  }
  if (den == 0.0) return 0.0;
  return 2.0 * omega_z / (k_boltzmann * std::log(num / den));
}

enum class RelaxationBranch {
  oscillatory,  // discriminant < 0: damped precession
  degenerate,   // discriminant = 0: double root
  overdamped    // discriminant > 0: two real decay rates
};

struct RelaxationTimes {
  double tau_z = 0.0;
  double tau_xy = 0.0;
  RelaxationBranch branch = RelaxationBranch::oscillatory;
};

namespace detail {

inline bool is_degenerate_discriminant(const RateConstants& k) {
  const double sz = k.k1 + k.k2 + 2.0 * k.k3;
  return std::abs(k.discriminant) < 1e-10 * sz * sz;
}

}  // namespace detail

// Relaxation timescales toward the steady state for a field along z.
inline RelaxationTimes relaxation_times(const FieldConfig& f, const RateConstants& k) {
  if (f.omega_x != 0.0 || f.omega_y != 0.0) {
    throw std::invalid_argument("relaxation_times: requires omega_x = omega_y = 0");
  }
  const double sz = k.k1 + k.k2 + 2.0 * k.k3;
  if (!(sz > 0.0)) {
    throw InvalidRegimeError("relaxation_times: nonpositive longitudinal rate");
  }
  RelaxationTimes out;
  out.tau_z = 1.0 / sz;
  if (detail::is_degenerate_discriminant(k)) {
    out.branch = RelaxationBranch::degenerate;
    out.tau_xy = 2.0 / sz;
  } else if (k.discriminant < 0.0) {
    out.branch = RelaxationBranch::oscillatory;
    out.tau_xy = 2.0 / sz;
  } else {
    out.branch = RelaxationBranch::overdamped;
    if (!(k.mu_minus > 0.0)) {
      throw InvalidRegimeError("relaxation_times: nonpositive slow rate");
    }
    out.tau_xy = 1.0 / k.mu_minus;
  }
  return out;
}

// Time-domain solution for a field along z (omega_x = omega_y = 0,
// omega_z != 0). z decays monoexponentially; x and y follow the branch the
// discriminant selects, with complex roots handled in real damped-oscillation
// form.
class ClosedFormSolution {
 public:
  ClosedFormSolution(const BlochVector& v0, const FieldConfig& f, const RateConstants& k)
      : omega_z_(f.omega_z) {
    if (f.omega_x != 0.0 || f.omega_y != 0.0) {
      throw std::invalid_argument("closed_form_solution: requires omega_x = omega_y = 0");
    }
    if (f.omega_z == 0.0) {
      throw UnsupportedBranchError(
          "closed_form_solution: omega_z = 0 has no x-y reduction; integrate the ODE instead");
    }
    const double s = k.k1 + k.k2;
    sz_ = s + 2.0 * k.k3;
    z_inf_ = (k.k2 - k.k1) / sz_;
    cz_ = v0.z - z_inf_;
    half_s_ = 0.5 * s;
    k3_ = k.k3;

    const double xdot0 = -2.0 * omega_z_ * v0.y - half_s_ * v0.x;
    if (detail::is_degenerate_discriminant(k)) {
      branch_ = RelaxationBranch::degenerate;
      nu_ = 0.5 * sz_;
      c2_ = v0.x;
      c3_ = xdot0 + nu_ * v0.x;
    } else if (k.discriminant > 0.0) {
      branch_ = RelaxationBranch::overdamped;
      mu_plus_ = k.mu_plus;
      mu_minus_ = k.mu_minus;
      c2_ = (-xdot0 - mu_minus_ * v0.x) / (mu_plus_ - mu_minus_);
      c3_ = (xdot0 + mu_plus_ * v0.x) / (mu_plus_ - mu_minus_);
    } else {
      branch_ = RelaxationBranch::oscillatory;
      nu_ = 0.5 * sz_;
      w_ = k.mu_imag();
      c2_ = v0.x;
      c3_ = (xdot0 + nu_ * v0.x) / w_;
    }
  }

  RelaxationBranch branch() const { return branch_; }

  BlochVector operator()(double t) const {
    BlochVector v;
    v.z = z_inf_ + cz_ * std::exp(-sz_ * t);
    switch (branch_) {
      case RelaxationBranch::overdamped: {
        const double ep = std::exp(-mu_plus_ * t);
        const double em = std::exp(-mu_minus_ * t);
        v.x = c2_ * ep + c3_ * em;
        v.y = -0.5 / omega_z_ *
              (c2_ * (half_s_ - mu_plus_) * ep + c3_ * (half_s_ - mu_minus_) * em);
        break;
      }
      case RelaxationBranch::degenerate: {
        const double e = std::exp(-nu_ * t);
        v.x = (c2_ + c3_ * t) * e;
        v.y = -0.5 / omega_z_ * (-k3_ * c2_ + (1.0 - k3_ * t) * c3_) * e;
        break;
      }
      case RelaxationBranch::oscillatory: {
        const double e = std::exp(-nu_ * t);
        const double cw = std::cos(w_ * t);
        const double sw = std::sin(w_ * t);
        v.x = e * (c2_ * cw + c3_ * sw);
        v.y = -0.5 / omega_z_ * e *
              ((-k3_ * c2_ + w_ * c3_) * cw + (-k3_ * c3_ - w_ * c2_) * sw);
        break;
      }
    }
    return v;
  }

 private:
  double omega_z_;
  double sz_ = 0.0, z_inf_ = 0.0, cz_ = 0.0;
  double half_s_ = 0.0, k3_ = 0.0;
  double nu_ = 0.0, w_ = 0.0;
  double mu_plus_ = 0.0, mu_minus_ = 0.0;
  double c2_ = 0.0, c3_ = 0.0;
  RelaxationBranch branch_ = RelaxationBranch::oscillatory;
};

inline ClosedFormSolution closed_form_solution(const BlochVector& v0, const FieldConfig& f,
                                               const RateConstants& k) {
  return ClosedFormSolution(v0, f, k);
}

// Transverse steady-state components for a field in the x-y plane.
inline std::pair<double, double> offdiagonal_steady(const FieldConfig& f,
                                                    const RateConstants& k) {
  if (f.omega_z != 0.0) {
    throw std::invalid_argument("offdiagonal_steady: requires omega_z = 0");
  }
  if (k.eta == 0.0) {
    throw SingularParametersError("offdiagonal_steady: eta vanishes");
  }
  const double s = k.k1 + k.k2;
  const double sy = s + 4.0 * k.k3;
  const double xs = 4.0 / k.eta * f.omega_y * (k.k2 - k.k1) * sy;
  const double ys = 4.0 / k.eta * f.omega_x * (k.k1 - k.k2) * s;
  return {xs, ys};
}

// RK4 integration of the Bloch equations (deterministic reference).
struct BlochPath {
  std::vector<double> times;
  std::vector<BlochVector> states;
};

inline BlochPath integrate_bloch(const BlochVector& v0, const FieldConfig& f,
                                 const RateConstants& k, double t_final, double dt,
                                 int sample_every = 1) {
  if (!(t_final > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("integrate_bloch: need positive t_final and dt");
  }
  if (sample_every < 1) sample_every = 1;
  const auto n_steps = static_cast<std::int64_t>(std::ceil(t_final / dt - 1e-12));
  const double h = t_final / static_cast<double>(n_steps);

  BlochPath path;
  path.times.push_back(0.0);
  path.states.push_back(v0);
  BlochVector v = v0;
  auto add = [](const BlochVector& a, const std::array<double, 3>& d, double c) {
    return BlochVector{a.x + c * d[0], a.y + c * d[1], a.z + c * d[2]};
  };
  for (std::int64_t i = 0; i < n_steps; ++i) {
    const auto k1 = bloch_rhs(v, f, k);
    const auto k2 = bloch_rhs(add(v, k1, 0.5 * h), f, k);
    const auto k3 = bloch_rhs(add(v, k2, 0.5 * h), f, k);
    const auto k4 = bloch_rhs(add(v, k3, h), f, k);
    v.x += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    v.y += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    v.z += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    if ((i + 1) % sample_every == 0 || i + 1 == n_steps) {
      path.times.push_back(static_cast<double>(i + 1) * h);
      path.states.push_back(v);
    }
  }
  return path;
}

inline std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) {
    throw std::invalid_argument("log_grid: need 0 < lo < hi and n >= 2");
  }
  std::vector<double> g(n);
  const double llo = std::log10(lo);
  const double lhi = std::log10(hi);
  for (int i = 0; i < n; ++i) {
    g[i] = std::pow(10.0, llo + (lhi - llo) * i / (n - 1));
  }
  return g;
}

// Upper boundary of the steady states (x_s, y_s) attained when the
// measurement strengths sweep a grid at fixed field and feedback strength
// (omega_z = 0). The attained boundary is traced as the maximum y_s per x_s
// bin and summarized by a total-least-squares line.
struct ReachableBoundary {
  std::vector<std::array<double, 2>> boundary;  // polyline, ascending x_s
  std::vector<double> orth_residual;            // per polyline point
  OrthogonalLine line;
  double max_orth_residual = 0.0;
  int realizable_side = -1;  // sign of n.p - c on the attained interior
  double xs_min = 0.0, xs_max = 0.0, ys_min = 0.0, ys_max = 0.0;
};

inline ReachableBoundary reachable_set_boundary(double omega_x, double omega_y, double kappa_f,
                                                const std::vector<double>& gamma_grid,
                                                int n_bins = 100) {
  if (gamma_grid.size() < 2) {
    throw std::invalid_argument("reachable_set_boundary: need a gamma grid");
  }
  const FieldConfig field{omega_x, omega_y, 0.0};
  std::vector<std::array<double, 2>> pts;
  pts.reserve(gamma_grid.size() * gamma_grid.size());
  for (const double gx : gamma_grid) {
    for (const double gy : gamma_grid) {
      const RateConstants k = RateConstants::from_feedback(gx, gy, kappa_f, field);
      const auto [xs, ys] = offdiagonal_steady(field, k);
      pts.push_back({xs, ys});
    }
  }

  ReachableBoundary out;
  out.xs_min = out.xs_max = pts.front()[0];
  out.ys_min = out.ys_max = pts.front()[1];
  for (const auto& p : pts) {
    out.xs_min = std::min(out.xs_min, p[0]);
    out.xs_max = std::max(out.xs_max, p[0]);
    out.ys_min = std::min(out.ys_min, p[1]);
    out.ys_max = std::max(out.ys_max, p[1]);
  }

  const double span = out.xs_max - out.xs_min;
  if (span < 1e-12 && out.ys_max - out.ys_min < 1e-12) {
    // degenerate sweep: every steady state coincides
    out.boundary.push_back(pts.front());
    out.orth_residual.push_back(0.0);
    out.line = OrthogonalLine{0.0, 1.0, pts.front()[1]};
    return out;
  }

  std::vector<bool> filled(n_bins, false);
  std::vector<std::array<double, 2>> best(n_bins);
  for (const auto& p : pts) {
    int bin = static_cast<int>((p[0] - out.xs_min) / span * n_bins);
    bin = std::clamp(bin, 0, n_bins - 1);
    if (!filled[bin] || p[1] > best[bin][1]) {
      filled[bin] = true;
      best[bin] = p;
    }
  }
  for (int i = 0; i < n_bins; ++i) {
    if (filled[i]) out.boundary.push_back(best[i]);
  }

  out.line = orthogonal_line_fit(out.boundary);
  out.orth_residual.resize(out.boundary.size());
  for (std::size_t i = 0; i < out.boundary.size(); ++i) {
    out.orth_residual[i] =
        std::abs(out.line.signed_distance(out.boundary[i][0], out.boundary[i][1]));
    out.max_orth_residual = std::max(out.max_orth_residual, out.orth_residual[i]);
  }

  double interior = 0.0;
  for (const auto& p : pts) interior += out.line.signed_distance(p[0], p[1]);
  out.realizable_side = interior <= 0.0 ? -1 : 1;
  return out;
}

}  // namespace qmeas

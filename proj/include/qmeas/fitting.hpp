#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qmeas {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("least_squares_line: need >= 2 matching points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("least_squares_line: degenerate abscissae");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

// Fitted exponent of y ~ C x^p.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw std::invalid_argument("loglog_slope: values must be positive");
    }
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return least_squares_line(lx, ly).slope;
}

// Decay rate of y ~ C exp(-rate t), fitted on log|y|.
inline double decay_rate_fit(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<double> ly(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = std::abs(y[i]);
    if (!(a > 0.0)) throw std::invalid_argument("decay_rate_fit: zero sample");
    ly[i] = std::log(a);
  }
  return -least_squares_line(t, ly).slope;
}

// Total-least-squares line n . p = c with |n| = 1 (orthogonal regression via
// the covariance eigenvector).
struct OrthogonalLine {
  double nx = 0.0, ny = 1.0, c = 0.0;

  double signed_distance(double x, double y) const { return nx * x + ny * y - c; }
};

inline OrthogonalLine orthogonal_line_fit(const std::vector<std::array<double, 2>>& pts) {
  if (pts.size() < 2) throw std::invalid_argument("orthogonal_line_fit: need >= 2 points");
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p[0];
    my += p[1];
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : pts) {
    const double dx = p[0] - mx;
    const double dy = p[1] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // Smallest-eigenvalue eigenvector of the 2x2 scatter matrix is the normal.
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  const double lam_min = 0.5 * tr - disc;
  double nx, ny;
  if (std::abs(sxy) > 1e-300) {
    nx = lam_min - syy;
    ny = sxy;
  } else if (sxx <= syy) {
    nx = 1.0;
    ny = 0.0;
  } else {
    nx = 0.0;
    ny = 1.0;
  }
  const double norm = std::hypot(nx, ny);
  OrthogonalLine line;
  line.nx = nx / norm;
  line.ny = ny / norm;
  line.c = line.nx * mx + line.ny * my;
  return line;
}

}  // namespace qmeas

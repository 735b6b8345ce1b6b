#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qmeas/arthurs_kelly.hpp"
#include "qmeas/fitting.hpp"

using namespace qmeas;

namespace {

// position-space pointer wavefunction
double pointer_wave(double x, double delta) {
  return std::pow(M_PI * delta, -0.25) * std::exp(-x * x / (2.0 * delta));
}

DensityMatrix plus_x_state(double j) {
  const auto l = angular_momentum(j);
  return DensityMatrix::pure(top_eigenvector(l.lx.mat));
}

// maximal eigenstate along (x+y): both <Lx> and <Ly> are nonzero, so both
// relative deviations are defined
DensityMatrix plus_xy_state(double j) {
  const auto l = angular_momentum(j);
  return DensityMatrix::pure(top_eigenvector(l.lx.mat + l.ly.mat));
}

}  // namespace

TEST_CASE("pointer momentum amplitudes: normalization and moments") {
  const DetectorConfig cfg(1.0, 0.5, 1.0);  // delta1 = 1
  const PointerGrid grid = PointerGrid::standard(cfg);
  const auto amps = pointer_momentum_amplitudes(cfg, grid);

  double norm1 = 0.0, norm2 = 0.0, mean1 = 0.0, second1 = 0.0;
  for (int i = 0; i < grid.n_points; ++i) {
    const double w1 = std::norm(amps.amp1[i]);
    norm1 += w1 * amps.dp1;
    mean1 += amps.p1[i] * w1 * amps.dp1;
    second1 += amps.p1[i] * amps.p1[i] * w1 * amps.dp1;
    norm2 += std::norm(amps.amp2[i]) * amps.dp2;
  }
  CHECK(std::abs(norm1 - 1.0) < 1e-10);
  CHECK(std::abs(norm2 - 1.0) < 1e-10);
  CHECK(std::abs(mean1) < 1e-12);
  // Gaussian second moment 1/(2 delta) with delta = 1
  CHECK(std::abs(second1 - 0.5) < 1e-10);
}

TEST_CASE("pointer grid must resolve the detector widths") {
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  PointerGrid narrow;
  narrow.n_points = 64;
  narrow.p_max1 = 2.0 / std::sqrt(cfg.delta1());
  narrow.p_max2 = 8.0 / std::sqrt(cfg.delta2());
  CHECK_THROWS_AS(pointer_momentum_amplitudes(cfg, narrow), std::invalid_argument);

  PointerGrid bad;
  bad.n_points = 100;  // not a power of two
  bad.p_max1 = bad.p_max2 = 10.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("detector config invariants") {
  CHECK_THROWS_AS(DetectorConfig(-0.1, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(DetectorConfig(0.1, 0.0, 1.0), std::invalid_argument);
  const DetectorConfig cfg(0.2, 0.4, 2.0);
  CHECK(cfg.delta1() == Catch::Approx(0.4));
  CHECK(cfg.r2() == Catch::Approx(0.2));
}

TEST_CASE("kernel factorizes into shifted Gaussians when the observables commute") {
  // A = sigma_z/2, B = I: the kernel is diagonal with
  // M_kk = d1(x1 - s1 a_k) d2(x2 - s2)
  const DetectorConfig cfg(0.3, 0.2, 1.5);
  const PointerGrid grid = PointerGrid::standard(cfg, 128);
  const Mat a = 0.5 * pauli_z();
  const Mat b = Mat::Identity(2, 2);
  const auto kernel = measurement_kernel(a, b, cfg, grid);

  const double peak = std::pow(M_PI * M_PI * cfg.delta1() * cfg.delta2(), -0.25);
  double max_err = 0.0;
  for (int i = 0; i < kernel.n; i += 3) {
    for (int l = 0; l < kernel.n; l += 3) {
      const Mat& m = kernel.at(i, l);
      const double g2 = pointer_wave(kernel.x2[l] - cfg.s2, cfg.delta2());
      const double m00 = pointer_wave(kernel.x1[i] - cfg.s1 * 0.5, cfg.delta1()) * g2;
      const double m11 = pointer_wave(kernel.x1[i] + cfg.s1 * 0.5, cfg.delta1()) * g2;
      max_err = std::max(max_err, std::abs(m(0, 0) - m00));
      max_err = std::max(max_err, std::abs(m(1, 1) - m11));
      max_err = std::max(max_err, std::abs(m(0, 1)));
      max_err = std::max(max_err, std::abs(m(1, 0)));
    }
  }
  CHECK(max_err / peak < 1e-10);
}

TEST_CASE("POVM completeness at the default grid") {
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  const auto l = angular_momentum(1.0);
  const auto kernel =
      measurement_kernel(l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg));
  CHECK(kernel.completeness_defect < 1e-6);
}

TEST_CASE("completeness defect decreases with grid refinement") {
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  std::vector<double> defects;
  for (const int n : {8, 16, 32}) {
    PointerGrid grid = PointerGrid::standard(cfg, n);
    const auto kernel = measurement_kernel(a, b, cfg, grid, /*completeness_tol=*/10.0);
    defects.push_back(kernel.completeness_defect);
  }
  // at least halves per doubling, monotonically
  CHECK(defects[1] < 0.5 * defects[0]);
  CHECK(defects[2] < 0.5 * defects[1]);
}

TEST_CASE("too coarse a grid raises a resolution error") {
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  CHECK_THROWS_AS(measurement_kernel(a, b, cfg, PointerGrid::standard(cfg, 8)),
                  GridResolutionError);
}

TEST_CASE("posterior state: QND on a pointer basis state is exact") {
  const DetectorConfig cfg(0.4, 0.3, 1.0);
  const Mat a = 0.5 * pauli_z();
  const Mat b = Mat::Identity(2, 2);
  const auto kernel = measurement_kernel(a, b, cfg, PointerGrid::standard(cfg, 128));

  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 0.3;
  diag(1, 1) = 0.7;
  const DensityMatrix rho(diag);
  const DensityMatrix post = posterior_state(rho, kernel);
  CHECK((post.mat - rho.mat).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("posterior approaches the first-order map at second order") {
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  CounterRng rng(314);
  const DensityMatrix rho = random_density(rng, 2);

  std::vector<double> rs{0.02, 0.04, 0.08};
  std::vector<double> residuals;
  for (const double r : rs) {
    const DetectorConfig cfg(r, r, 1.0);
    const auto kernel = measurement_kernel(a, b, cfg, PointerGrid::standard(cfg));
    const Mat post = posterior_unnormalized(rho.mat, kernel);
    const Mat first_order = rho.mat -
                            cfg.s1 / (4.0 * cfg.sigma2) * commutator(a, commutator(a, rho.mat)) -
                            cfg.s2 / (4.0 * cfg.sigma2) * commutator(b, commutator(b, rho.mat));
    residuals.push_back(trace_norm(post - first_order));
  }
  const double slope = loglog_slope(rs, residuals);
  CHECK(slope > 1.8);
  CHECK(slope < 2.2);

  // weak-coupling limit: the map reduces to the identity at O(r)
  const DetectorConfig weak(1e-3, 1e-3, 1.0);
  const auto kernel = measurement_kernel(a, b, weak, PointerGrid::standard(weak));
  const DensityMatrix post = posterior_state(rho, kernel);
  CHECK(trace_norm(post.mat - rho.mat) < 2e-3);
  // and exactly for the maximally mixed state
  const DensityMatrix mixed(0.5 * Mat::Identity(2, 2));
  CHECK(trace_norm(posterior_state(mixed, kernel).mat - mixed.mat) < 1e-6);
}

TEST_CASE("exact moments reproduce the commuting case") {
  const DetectorConfig cfg(0.3, 0.25, 1.2);
  const Mat a = 0.5 * pauli_z();
  const Mat b = Mat::Identity(2, 2);
  CounterRng rng(99);
  const DensityMatrix rho = random_density(rng, 2);
  const auto kernel = measurement_kernel(a, b, cfg, PointerGrid::standard(cfg, 128));
  const auto mom = exact_moments(rho, a, b, kernel);

  const double ea = expectation(a, rho.mat);
  CHECK(std::abs(mom.mean_x1 - cfg.s1 * ea) < 1e-8);
  CHECK(std::abs(mom.mean_x2 - cfg.s2) < 1e-8);
  // correlation: (s1 s2 / 2) <AB + BA> with B = I
  CHECK(std::abs(mom.corr_x1x2 - cfg.s1 * cfg.s2 * ea) < 1e-8);
  // variance floor s1 sigma^2 / 2 plus the exact s1^2 <A^2> term
  const double expected_x1sq =
      0.5 * cfg.s1 * cfg.sigma2 * (1.0 + 2.0 * cfg.s1 / cfg.sigma2 * expectation(a * a, rho.mat));
  CHECK(std::abs(mom.mean_x1_sq - expected_x1sq) < 1e-8);
}

TEST_CASE("series first moments: closed-algebra example") {
  // [B,[B,A]] = A for the halved Paulis, so <A>' = <A>(1 - r2/4)
  const DetectorConfig cfg(0.12, 0.12, 1.0);
  const auto mom = series_first_moments(plus_x_state(0.5), 0.5 * pauli_x(), 0.5 * pauli_y(), cfg);
  CHECK(mom.mean_A_post == Catch::Approx(0.5 * (1.0 - 0.12 / 4.0)).epsilon(1e-12));
  CHECK(mom.mean_x1 == Catch::Approx(0.12 * 0.5 * (1.0 - 0.12 / 12.0)).epsilon(1e-12));
}

TEST_CASE("series first moments reduce to the plain mean when commutators vanish") {
  const DetectorConfig cfg(0.3, 0.2, 1.0);
  CounterRng rng(4);
  const DensityMatrix rho = random_density(rng, 2);
  const auto mom = series_first_moments(rho, 0.5 * pauli_z(), Mat::Identity(2, 2), cfg);
  CHECK(mom.mean_x1 == Catch::Approx(cfg.s1 * expectation(0.5 * pauli_z(), rho.mat)));
}

TEST_CASE("series second moments: single-detector case is exact") {
  const DetectorConfig cfg(0.3, 1e-12, 1.0);
  CounterRng rng(8);
  const DensityMatrix rho = random_density(rng, 2);
  const Mat a = 0.5 * pauli_x();
  const auto mom = series_second_moments(rho, a, 0.5 * pauli_y(), cfg);
  const double expected =
      0.5 * cfg.s1 * cfg.sigma2 * (1.0 + 2.0 * cfg.s1 / cfg.sigma2 * expectation(a * a, rho.mat));
  CHECK(mom.mean_x1_sq == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("series moments agree with the quadrature oracle at their stated orders") {
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  CounterRng rng(2718);
  const DensityMatrix rho = random_density(rng, 2);

  std::vector<double> rs{0.0125, 0.025, 0.05, 0.1};
  std::vector<double> first_err, second_err;
  for (const double r : rs) {
    const DetectorConfig cfg(r, r, 1.0);
    const auto kernel = measurement_kernel(a, b, cfg, PointerGrid::standard(cfg));
    const auto exact = exact_moments(rho, a, b, kernel);
    const auto first = series_first_moments(rho, a, b, cfg);
    const auto second = series_second_moments(rho, a, b, cfg);

    const double e1 = std::max({std::abs(first.mean_A_post - exact.mean_A_post),
                                std::abs(first.mean_B_post - exact.mean_B_post),
                                std::abs(first.mean_x1 - exact.mean_x1) / cfg.s1,
                                std::abs(first.mean_x2 - exact.mean_x2) / cfg.s2});
    first_err.push_back(e1);
    const double scale1 = 0.5 * cfg.s1 * cfg.sigma2;
    const double scale2 = 0.5 * cfg.s2 * cfg.sigma2;
    second_err.push_back(std::max(std::abs(second.mean_x1_sq - exact.mean_x1_sq) / scale1,
                                  std::abs(second.mean_x2_sq - exact.mean_x2_sq) / scale2));
  }
  const double slope1 = loglog_slope(rs, first_err);
  CHECK(slope1 > 1.8);
  CHECK(slope1 < 2.2);
  // bracket truncation error is cubic in r once rescaled by the variance floor
  const double slope2 = loglog_slope(rs, second_err);
  CHECK(slope2 > 2.8);
  // bound form: err <= C r^3 with C frozen from the largest-r point
  const double c3 = second_err.back() / std::pow(rs.back(), 3);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(second_err[i] <= 1.05 * c3 * std::pow(rs[i], 3));
  }
}

TEST_CASE("relative deviations vanish for commuting observables") {
  const DetectorConfig cfg(0.3, 0.25, 1.0);
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 0.8;
  diag(1, 1) = 0.2;
  const DensityMatrix rho(diag);
  const auto dev = relative_deviations(rho, 0.5 * pauli_z(), Mat::Identity(2, 2), cfg,
                                       PointerGrid::standard(cfg, 128));
  CHECK(std::abs(dev.eps1) < 1e-8);
  CHECK(std::abs(dev.eps2) < 1e-8);
}

TEST_CASE("closed deviation formula anchors") {
  // leading order eps1 -> r2/6
  const DetectorConfig tiny(1e-4, 1e-4, 1.0);
  const auto lead = deviation_formula_angular(tiny);
  CHECK(lead.eps1 == Catch::Approx(1e-4 / 6.0).epsilon(1e-3));

  const DetectorConfig r01(0.1, 0.1, 1.0);
  const auto d01 = deviation_formula_angular(r01);
  CHECK(d01.eps1 == Catch::Approx(0.016745).epsilon(1e-3));
  CHECK(d01.eps2 == Catch::Approx(d01.eps1).epsilon(1e-12));

  const DetectorConfig r05(0.5, 0.5, 1.0);
  const auto d05 = deviation_formula_angular(r05);
  CHECK(d05.eps1 == Catch::Approx(0.0847).epsilon(2e-3));
}

TEST_CASE("quadrature deviations sit near the formula and in the reported band") {
  for (const double j : {0.5, 1.0}) {
    const auto l = angular_momentum(j);
    const DetectorConfig cfg(0.5, 0.5, 1.0);
    const auto dev =
        relative_deviations(plus_xy_state(j), l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg));
    CHECK(dev.eps1 > 0.08);
    CHECK(dev.eps1 < 0.12);
    CHECK(dev.eps2 > 0.08);
    CHECK(dev.eps2 < 0.12);
  }

  // at r = 0.1 the quadrature oracle confirms the second-order value to
  // O(r^3); the (x+y)-aligned probe keeps both readout means nonzero
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  const auto l = angular_momentum(0.5);
  const auto dev =
      relative_deviations(plus_xy_state(0.5), l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg));
  CHECK(std::abs(dev.eps1 - 0.016745) < 2e-3);

  // the same number emerges from the x-aligned state via the first readout
  const auto mom =
      exact_moments(plus_x_state(0.5), l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg));
  const double eps1 = (mom.mean_x1 - cfg.s1 * mom.mean_A_post) / (cfg.s1 * mom.mean_A_post);
  CHECK(std::abs(eps1 - 0.016745) < 2e-3);
}

TEST_CASE("deviations are state independent for angular momentum pairs") {
  const double r = 0.1;
  const DetectorConfig cfg(r, r, 1.0);
  for (const double j : {0.5, 1.0}) {
    const auto l = angular_momentum(j);
    const auto kernel = measurement_kernel(l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg));
    CounterRng rng(100 + static_cast<int>(2 * j));
    double lo = 1e300, hi = -1e300;
    int found = 0;
    while (found < 20) {
      const DensityMatrix rho = random_density(rng, static_cast<int>(std::lround(2 * j)) + 1);
      if (std::abs(expectation(l.lx.mat, rho.mat)) < 0.1) continue;
      if (std::abs(expectation(l.ly.mat, rho.mat)) < 1e-3) continue;
      ++found;
      const auto dev = relative_deviations(exact_moments(rho, l.lx.mat, l.ly.mat, kernel), cfg);
      lo = std::min(lo, dev.eps1);
      hi = std::max(hi, dev.eps1);
    }
    CHECK(hi - lo < std::max(2.0 * r * r * r, 1e-6));
  }
}

TEST_CASE("relative deviations reject states with vanishing posterior mean") {
  const DetectorConfig cfg(0.1, 0.1, 1.0);
  const auto l = angular_momentum(0.5);
  const DensityMatrix plus_z = DensityMatrix::pure(top_eigenvector(l.lz.mat));
  CHECK_THROWS_AS(
      relative_deviations(plus_z, l.lx.mat, l.ly.mat, cfg, PointerGrid::standard(cfg)),
      DegenerateStateError);
}

TEST_CASE("deviations grow monotonically with the couplings") {
  // formula values on a fine grid
  for (const double r1 : {0.05, 0.2, 0.35}) {
    double prev = -1.0;
    for (const double r2 : {0.05, 0.2, 0.35, 0.5}) {
      const auto d = deviation_formula_angular(DetectorConfig(r1, r2, 1.0));
      CHECK(d.eps1 >= prev);
      prev = d.eps1;
    }
  }
  // quadrature values along a coarse grid line
  const auto l = angular_momentum(0.5);
  double prev = -1.0;
  for (const double r2 : {0.1, 0.3, 0.5}) {
    const DetectorConfig cfg(0.25, r2, 1.0);
    const auto dev = relative_deviations(plus_xy_state(0.5), l.lx.mat, l.ly.mat, cfg,
                                         PointerGrid::standard(cfg));
    CHECK(dev.eps1 > prev);
    prev = dev.eps1;
  }
}

TEST_CASE("pointer covariance is negligible against the variances at weak coupling") {
  const Mat a = 0.5 * pauli_x();
  const Mat b = 0.5 * pauli_y();
  CounterRng rng(55);
  const DensityMatrix rho = random_density(rng, 2);
  std::vector<double> ratios;
  for (const double s : {0.1, 0.05, 0.025}) {
    const DetectorConfig cfg(s, s, 1.0);
    const auto kernel = measurement_kernel(a, b, cfg, PointerGrid::standard(cfg));
    const auto mom = exact_moments(rho, a, b, kernel);
    const double cov = mom.corr_x1x2 - mom.mean_x1 * mom.mean_x2;
    const double v1 = mom.mean_x1_sq - mom.mean_x1 * mom.mean_x1;
    const double v2 = mom.mean_x2_sq - mom.mean_x2 * mom.mean_x2;
    ratios.push_back(std::abs(cov) / std::sqrt(v1 * v2));
  }
  CHECK(ratios[1] < 0.7 * ratios[0]);
  CHECK(ratios[2] < 0.7 * ratios[1]);
  CHECK(ratios[2] < 0.02);
}

TEST_CASE("pointer correlation matches the symmetrized product") {
  // exact for commuting observables
  const DetectorConfig ccfg(0.2, 0.3, 1.0);
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 0.6;
  diag(1, 1) = 0.4;
  const DensityMatrix rho_diag(diag);
  const Mat az = 0.5 * pauli_z();
  const Mat id = Mat::Identity(2, 2);
  const auto momc = exact_moments(rho_diag, az, id,
                                  measurement_kernel(az, id, ccfg, PointerGrid::standard(ccfg, 128)));
  const double sym = 0.5 * expectation(az * id + id * az, rho_diag.mat);
  CHECK(std::abs(momc.corr_x1x2 - ccfg.s1 * ccfg.s2 * sym) < 1e-8);
}

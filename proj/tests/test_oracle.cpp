#include <doctest.h>

#include <cmath>

#include "core/oracle.hpp"

using namespace fibm;

TEST_CASE("closed-form eigenvalues and projectors") {
  ClosedFormModel cf(2);
  CHECK(cf.lambda(+1, {0.5, 1.0, 0.0}) == doctest::Approx(1.0 + 0.5 * std::sqrt(2.0)));
  CHECK(cf.lambda(-1, {0.5, 1.0, 0.0}) == doctest::Approx(1.0 - 0.5 * std::sqrt(2.0)));

  // pi+ at k2 = 0 is diag(1, 0)
  const Matrix pp = cf.projector(+1, {0.4, 0.0, 0.0});
  CHECK(std::abs(pp(0, 0).real() - 1.0) < 1e-15);
  CHECK(std::abs(pp(1, 1).real()) < 1e-15);

  // projector identities and eigen-relations at generic points
  for (double k2 : {-0.8, 0.3, 1.1}) {
    const Coord k{0.6, k2, 0.0};
    const Matrix p = cf.projector(+1, k);
    const Matrix q = cf.projector(-1, k);
    CHECK(spectral_norm((p * p - p).eval()) < 1e-14);
    CHECK(spectral_norm((p * q).eval()) < 1e-14);
    CHECK(spectral_norm((p + q).eval() - Matrix::Identity(2, 2)) < 1e-14);
    const Matrix h = cf.hamiltonian(k);
    CHECK(spectral_norm((h * p).eval() - cf.lambda(+1, k) * p) < 1e-13);
    // symbolic k2-derivative of the projector against central differences
    const double eps = 1e-5;
    const Matrix fd = (cf.projector(+1, {0.6, k2 + eps, 0.0}) -
                       cf.projector(+1, {0.6, k2 - eps, 0.0})) /
                      (2 * eps);
    CHECK(spectral_norm(fd - cf.d_projector_dk2(+1, k)) < 1e-9);
  }

  ClosedFormModel cf1(1);
  CHECK(cf1.threshold_energy() == doctest::Approx(-0.25));
  CHECK(cf1.threshold_point()[0] == doctest::Approx(0.0));
  CHECK(cf1.threshold_point()[1] == doctest::Approx(-0.5));
  // the threshold sits on the double band: both gradients degenerate there
  const auto g = cf1.grad_lambda(+1, {0.0, -0.5, 0.0});
  CHECK(std::abs(g[1]) < 1e-14);  // tangential direction along the band
}

TEST_CASE("profile partitions and supports") {
  ClosedFormModel cf(2);
  for (int i = 0; i <= 4000; ++i) {
    const double x = -1.0 + 2.0 * i / 4000.0;
    const double g0 = cf.g0(x), gp = cf.gp(x), gm = cf.gm(x);
    CHECK(std::abs(g0 * g0 + gp * gp + gm * gm - 1.0) < 1e-12);
    const double t0 = cf.th0(x), t1 = cf.th1(x);
    CHECK(std::abs(t0 * t0 + t1 * t1 - 1.0) < 1e-12);
    if (std::abs(x) >= 0.5) CHECK(g0 == 0.0);
    if (x <= 0.25) CHECK(gp == 0.0);
    if (x >= -0.25) CHECK(gm == 0.0);
    if (std::abs(x) >= 0.25) CHECK(t0 == 0.0);
    if (std::abs(x) <= 0.125) CHECK(t1 == 0.0);
  }
  // derivative closures against central differences
  for (double x : {0.25 + 0.017, 0.3, 0.37, 0.41, 0.46, -0.33, 0.15, 0.2}) {
    const double eps = 1e-6;
    CHECK(std::abs((cf.g0(x + eps) - cf.g0(x - eps)) / (2 * eps) - cf.dg0(x)) < 2e-6);
    CHECK(std::abs((cf.gp(x + eps) - cf.gp(x - eps)) / (2 * eps) - cf.dgp(x)) < 2e-6);
    CHECK(std::abs((cf.gm(x + eps) - cf.gm(x - eps)) / (2 * eps) - cf.dgm(x)) < 2e-6);
  }
}

TEST_CASE("escape fields and divergences") {
  ClosedFormModel cf(2);
  for (int branch : {+1, -1}) {
    for (double k1 : {0.3, 0.6}) {
      for (double k2 : {-0.7, 0.2}) {
        const Coord k{k1, k2, 0.0};
        const auto x = cf.escape(branch, k);
        const auto g = cf.grad_lambda(branch, k);
        // X . grad(lambda) = 1 by construction
        CHECK(x[0] * g[0] + x[1] * g[1] == doctest::Approx(1.0));
        // divergence closure against central differences
        const double eps = 1e-5;
        const double fd = (cf.escape(branch, {k1 + eps, k2, 0.0})[0] -
                           cf.escape(branch, {k1 - eps, k2, 0.0})[0]) /
                              (2 * eps) +
                          (cf.escape(branch, {k1, k2 + eps, 0.0})[1] -
                           cf.escape(branch, {k1, k2 - eps, 0.0})[1]) /
                              (2 * eps);
        CHECK(std::abs(fd - cf.escape_divergence(branch, k)) < 1e-8);
      }
    }
  }
  // gradient floor on the sheets
  for (double k1 : {0.05, 0.4, 0.9}) {
    for (double k2 : {-1.0, 0.0, 1.0}) {
      const auto g = cf.grad_lambda(+1, {k1, k2, 0.0});
      CHECK(std::sqrt(g[0] * g[0] + g[1] * g[1]) >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("conjugate coefficients reproduce the stated commutators") {
  ClosedFormModel cf(2);
  // [H0, iA] = -sum_j A_j dH_j + [H0, B] with the closed-form coefficients;
  // both routes are closed-form, so agreement is near machine precision.
  for (bool modified : {false, true}) {
    for (double k1 : {0.05, 0.2, 0.3, 0.42, 0.6}) {
      for (double k2 : {-0.9, 0.0, 0.7}) {
        const Coord k{k1, k2, 0.0};
        Matrix acc = Matrix::Zero(2, 2);
        for (int a = 0; a < 2; ++a)
          acc -= cf.conjugate_principal(a, k, modified) * cf.d_hamiltonian(a, k);
        const Matrix b = cf.conjugate_zeroth(k, modified);
        const Matrix h = cf.hamiltonian(k);
        acc += h * b - b * h;
        CHECK(spectral_norm(acc - cf.first_commutator(k, modified)) < 1e-12);
      }
    }
  }
}

TEST_CASE("commutator positivity bounds") {
  ClosedFormModel cf(2);
  CHECK(cf.mourre_floor() == doctest::Approx(0.5));
  // global pointwise bound [H0, iA~] >= 1/2
  double worst = 1e30;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) {
      const Coord k{-1.0 + 2.0 * i / 200.0, -1.0 + 2.0 * j / 200.0, 0.0};
      worst = std::min(worst, min_eigenvalue_hermitian(cf.first_commutator(k, true)));
    }
  CHECK(worst >= 0.5 - 1e-12);

  const double floor = cf.naive_ad2_floor(20000);
  CHECK(floor > 0.01);
  CHECK(floor < 0.25);
  // the flat maximum makes the scan insensitive to its resolution
  CHECK(std::abs(floor - cf.naive_ad2_floor(3001)) < 1e-6);

  ClosedFormModel cf1(1);
  CHECK_THROWS_AS(cf1.naive_ad2_floor(100), Error);
  CHECK_THROWS_AS(cf1.first_commutator({0.1, 0.1, 0.0}, false), Error);
}

TEST_CASE("generic oracle accessors") {
  ClosedFormModel cf(2);
  CHECK(cf.eval_scalar("lambda+", {0.5, 1.0, 0.0}) == doctest::Approx(1.0 + 0.5 * std::sqrt(2.0)));
  CHECK(cf.eval_matrix("pi+", {0.4, 0.0, 0.0})(0, 0).real() == doctest::Approx(1.0));
  CHECK_THROWS_AS(cf.eval_scalar("nonsense", {0, 0, 0}), Error);
}

#include <doctest.h>

#include <cmath>

#include "core/fields.hpp"
#include "core/polynomial.hpp"

using namespace fibm;

TEST_CASE("box grid arithmetic") {
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 5);
  CHECK(grid->num_nodes() == 25);
  CHECK(grid->spacing(0) == doctest::Approx(0.5));
  CHECK(grid->spacing(1) == doctest::Approx(0.5));

  auto wide = build_grid(DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 65);
  CHECK(wide->spacing(0) == doctest::Approx(0.0625));
}

TEST_CASE("torus grid wraps") {
  auto grid = build_grid(DomainSpec::torus({2.0 * M_PI}), 4);
  CHECK(grid->num_nodes() == 4);
  CHECK(grid->coord(0, 1) == doctest::Approx(M_PI / 2.0));
  CHECK(grid->coord(0, 3) == doctest::Approx(3.0 * M_PI / 2.0));
  auto nb = grid->neighbor(3, 0, +1);
  REQUIRE(nb.has_value());
  CHECK(*nb == 0);

  // derivative of a sampled periodic function wraps exactly
  MatrixField f = sample_matrix_function(grid, 1, [](const Coord& k) {
    Matrix m(1, 1);
    m(0, 0) = std::sin(k[0]);
    return m;
  });
  MatrixField df = discrete_derivative(f, 0);
  // node 0 wraps to nodes 1 and 3: (sin(pi/2) - sin(3pi/2)) / (2 h) = 2/pi
  CHECK(std::abs(df.at(0)(0, 0).real() - 2.0 / M_PI) < 1e-12);
}

TEST_CASE("grid rejects degenerate input") {
  CHECK_THROWS_AS(build_grid(DomainSpec::box({{{-1.0, 1.0}}}), 3), Error);
  CHECK_THROWS_AS(DomainSpec::box({{{1.0, 1.0}}}), Error);
}

TEST_CASE("sampling the second built-in family") {
  auto fam = builtin_family("example2");
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 5);
  MatrixField f = sample_family(fam, grid);

  // H0(1, 0) = diag(1, -1)
  std::int64_t node = grid->ravel({4, 2, 0});
  CHECK(grid->coord(node)[0] == doctest::Approx(1.0));
  CHECK(grid->coord(node)[1] == doctest::Approx(0.0));
  CHECK(std::abs(f.at(node)(0, 0).real() - 1.0) < 1e-15);
  CHECK(std::abs(f.at(node)(1, 1).real() + 1.0) < 1e-15);
  CHECK(std::abs(f.at(node)(0, 1)) < 1e-15);

  // H0(0, k2) = k2 Id (double band)
  std::vector<double> vals;
  fam.eval({0.0, 0.3, 0.0}, vals);
  CHECK(vals[0] == doctest::Approx(0.3));
  CHECK(vals[3] == doctest::Approx(0.3));
  CHECK(vals[1] == doctest::Approx(0.0));
}

TEST_CASE("zero family samples to zero") {
  MatrixPolynomialFamily zero(2, 2);
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 4);
  MatrixField f = sample_family(zero, grid);
  CHECK(f.max_norm() == 0.0);
}

TEST_CASE("hermitian sampling closure") {
  auto fam = builtin_family("example1");
  auto grid = build_grid(DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 17);
  MatrixField f = sample_family(fam, grid);
  CHECK(f.max_hermitian_defect() <= 1e-13);
}

TEST_CASE("derivative families are exact") {
  auto fam2 = builtin_family("example2");
  auto d2 = fam2.derivative(1);
  // d/dk2 H0 = [[1, k1], [k1, 1]]
  std::vector<double> vals;
  d2.eval({0.7, -0.4, 0.0}, vals);
  CHECK(vals[0] == doctest::Approx(1.0));
  CHECK(vals[1] == doctest::Approx(0.7));
  CHECK(vals[2] == doctest::Approx(0.7));
  CHECK(vals[3] == doctest::Approx(1.0));

  auto fam1 = builtin_family("example1");
  auto d1 = fam1.derivative(0);
  // d/dk1 H0 at (0, -1/2) = [[1, -1/2], [-1/2, -1]]
  d1.eval({0.0, -0.5, 0.0}, vals);
  CHECK(vals[0] == doctest::Approx(1.0));
  CHECK(vals[1] == doctest::Approx(-0.5));
  CHECK(vals[3] == doctest::Approx(-1.0));

  // cross-check against central differences of the sampled family
  const double h = 1e-4;
  std::vector<double> plus, minus;
  fam1.eval({h, -0.5, 0.0}, plus);
  fam1.eval({-h, -0.5, 0.0}, minus);
  for (int t = 0; t < 4; ++t)
    CHECK(std::abs((plus[static_cast<size_t>(t)] - minus[static_cast<size_t>(t)]) / (2 * h) -
                   vals[static_cast<size_t>(t)]) < 1e-7);

  // derivative of a constant family vanishes
  MatrixPolynomialFamily c(1, 2);
  c.entry(0, 0) = Polynomial(3.5);
  CHECK(c.derivative(0).entry(0, 0).is_zero());
  CHECK_THROWS_AS(c.derivative(2), Error);
}

TEST_CASE("discrete derivative converges at second order") {
  // degree-4 entries so the central stencil is not exact
  MatrixPolynomialFamily fam(1, 2);
  Polynomial k1 = Polynomial::variable(0, 2);
  Polynomial k2 = Polynomial::variable(1, 2);
  fam.entry(0, 0) = k1 * k1 * k1 * k1 + k2 * k2 * k1;
  auto dfam = fam.derivative(0);

  auto err_at = [&](int n) {
    auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), n);
    MatrixField f = sample_family(fam, grid);
    MatrixField exact = sample_family(dfam, grid);
    MatrixField disc = discrete_derivative(f, 0);
    disc -= exact;
    return disc.max_norm();
  };
  const double e1 = err_at(33), e2 = err_at(65);
  const double ratio = e1 / e2;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("model json round trip") {
  const std::string text = R"({
    "fiber_dim": 2, "dim": 2,
    "entries": {
      "0,0": [[[0,1],1.0],[[1,0],1.0]],
      "0,1": [[[1,1],1.0]],
      "1,0": [[[1,1],1.0]],
      "1,1": [[[0,1],1.0],[[1,0],-1.0]]
    }})";
  auto fam = family_from_json(text);
  auto ref = builtin_family("example2");
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(fam.entry(i, j).same_as(ref.entry(i, j)));

  // hermitian violation is rejected
  const std::string bad = R"({
    "fiber_dim": 2, "dim": 2,
    "entries": {"0,1": [[[1,0],1.0]], "1,0": [[[0,1],1.0]]}})";
  CHECK_THROWS_AS(family_from_json(bad), Error);
}

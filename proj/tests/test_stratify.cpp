#include <doctest.h>

#include <cmath>
#include <fstream>

#include "core/oracle.hpp"
#include "core/stratify.hpp"

using namespace fibm;

namespace {

MatrixPolynomialFamily scalar_paraboloid() {
  MatrixPolynomialFamily fam(1, 2);
  Polynomial k1 = Polynomial::variable(0, 2);
  Polynomial k2 = Polynomial::variable(1, 2);
  fam.entry(0, 0) = k1 * k1 + k2 * k2;
  return fam;
}

struct StrataRun {
  GridPtr grid;
  SigmaSample sample;
  std::vector<Stratum> strata;
  double lip;
};

StrataRun stratify(const MatrixPolynomialFamily& fam, const DomainSpec& dom, int n,
                   const Interval& window) {
  StrataRun r;
  r.grid = build_grid(dom, n);
  r.lip = estimate_eigenvalue_lipschitz(fam, *r.grid);
  const double tol = std::max(0.75 * r.lip * r.grid->min_spacing(), 1e-12);
  r.sample = sample_sigma(fam, r.grid, window, tol);
  r.strata = extract_strata(r.sample, 1.5 * r.lip);
  return r;
}

}  // namespace

TEST_CASE("sigma sampling") {
  auto fam = builtin_family("example2");
  auto run = stratify(fam, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 41, {-0.2, 0.2});

  bool found_double = false;
  for (const auto& t : run.sample.triples) {
    const Coord k = run.grid->coord(t.node);
    if (t.multiplicity == 2) {
      found_double = true;
      CHECK(std::abs(k[0]) < 2.5 * run.grid->min_spacing());
      CHECK(std::abs(t.lambda - k[1]) < 1e-10);  // double band sits at energy k2
    }
  }
  CHECK(found_double);

  // empty window below the spectrum
  auto empty = sample_sigma(fam, run.grid, {-50.0, -40.0}, 1e-8);
  CHECK(empty.triples.empty());

  // scalar family: one triple per node inside the disc
  auto scal = stratify(scalar_paraboloid(), DomainSpec::box({{{-1.5, 1.5}}, {{-1.5, 1.5}}}), 31,
                       {-1.0, 1.0});
  for (const auto& t : scal.sample.triples) {
    CHECK(t.multiplicity == 1);
    const Coord k = scal.grid->coord(t.node);
    CHECK(k[0] * k[0] + k[1] * k[1] < 1.0);
  }
}

TEST_CASE("strata of the second model") {
  auto fam = builtin_family("example2");
  auto run = stratify(fam, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 41, {-0.2, 0.2});

  // four sheet components (sign of k1 x branch) plus the double-band line
  int mult2 = 0, mult1 = 0;
  for (const auto& s : run.strata) {
    if (s.multiplicity == 2) {
      ++mult2;
      CHECK(s.estimated_dim <= 1);
    } else {
      ++mult1;
      CHECK(s.estimated_dim == 2);
    }
  }
  CHECK(mult2 == 1);
  CHECK(mult1 == 4);
  CHECK(run.strata.size() == 5);
}

TEST_CASE("strata of the first model near energy zero") {
  auto fam = builtin_family("example1");
  auto run = stratify(fam, DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 65, {-0.2, 0.3});

  int mult2 = 0, mult1 = 0;
  for (const auto& s : run.strata) (s.multiplicity == 2 ? mult2 : mult1)++;
  CHECK(mult2 >= 1);  // double-band segments along k1 = 0
  CHECK(mult1 >= 2);  // sheet components
  // double-band members hug the k1 = 0 axis within the merge band width
  const double band = run.sample.cluster_tol / 2.0 + run.grid->min_spacing();
  for (const auto& s : run.strata) {
    if (s.multiplicity != 2) continue;
    for (int m : s.members) {
      const auto& t = run.sample.triples[static_cast<size_t>(m)];
      CHECK(std::abs(run.grid->coord(t.node)[0]) <= band);
    }
  }

  // single constant scalar family: one stratum of multiplicity 1
  MatrixPolynomialFamily c(1, 2);
  c.entry(0, 0) = Polynomial(0.5);
  auto crun = stratify(c, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 9, {0.0, 1.0});
  CHECK(crun.strata.size() == 1);
  CHECK(crun.strata[0].multiplicity == 1);
}

TEST_CASE("multiplicity conservation") {
  auto fam = builtin_family("example2");
  auto run = stratify(fam, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 33, {-0.3, 0.3});
  MatrixField h = sample_family(fam, run.grid);
  for (std::int64_t node = 0; node < run.grid->num_nodes(); ++node) {
    const auto d = eigen_decompose(h.at(node), run.sample.cluster_tol);
    int expected = 0;
    for (const auto& c : d.clusters)
      if (run.sample.window.contains(c.mean)) expected += c.count;
    int got = 0;
    for (const auto& t : run.sample.triples)
      if (t.node == node) got += t.multiplicity;
    CHECK(got == expected);
  }
}

TEST_CASE("threshold detection") {
  // first model: single threshold at energy -1/4 over the double band
  {
    auto fam = builtin_family("example1");
    auto run = stratify(fam, DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 65, {-0.6, 0.4});
    const double h = run.grid->min_spacing();
    auto th = detect_thresholds(fam, run.sample, run.strata, 10.0 * h, run.lip);
    REQUIRE(th.values.size() == 1);
    CHECK(std::abs(th.values[0] + 0.25) <= 2.0 * h);
    CHECK(std::abs(th.points[0][0]) <= 2.0 * h);
    CHECK(std::abs(th.points[0][1] + 0.5) <= 2.0 * h);
  }
  // second model: free of thresholds
  {
    auto fam = builtin_family("example2");
    auto run = stratify(fam, DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 65, {-1.0, 1.0});
    auto th = detect_thresholds(fam, run.sample, run.strata, 10.0 * run.grid->min_spacing(), run.lip);
    CHECK(th.values.empty());
  }
  // scalar paraboloid: threshold at the bottom of the band
  {
    auto fam = scalar_paraboloid();
    auto run = stratify(fam, DomainSpec::box({{{-1.5, 1.5}}, {{-1.5, 1.5}}}), 31, {-0.5, 1.0});
    const double h = run.grid->min_spacing();
    auto th = detect_thresholds(fam, run.sample, run.strata, 10.0 * h, run.lip);
    REQUIRE(th.values.size() == 1);
    CHECK(std::abs(th.values[0]) <= 2.0 * h);
  }
}

TEST_CASE("threshold location is stable under refinement") {
  auto fam = builtin_family("example1");
  double v_coarse = 0.0, v_fine = 0.0, lip = 0.0;
  for (int n : {65, 129}) {
    auto run = stratify(fam, DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), n, {-0.6, 0.4});
    lip = run.lip;
    auto th = detect_thresholds(fam, run.sample, run.strata, 10.0 * run.grid->min_spacing(), run.lip);
    REQUIRE(th.values.size() == 1);
    (n == 65 ? v_coarse : v_fine) = th.values[0];
  }
  const double h_coarse = 4.0 / 64.0;
  CHECK(std::abs(v_fine - v_coarse) < 4.0 * lip * h_coarse);
}

TEST_CASE("sheet gradients of the second model stay above one") {
  auto fam = builtin_family("example2");
  auto run = stratify(fam, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 41, {-0.2, 0.2});
  std::vector<MatrixPolynomialFamily> dfam;
  dfam.push_back(fam.derivative(0));
  dfam.push_back(fam.derivative(1));
  MatrixField h = sample_family(fam, run.grid);
  for (const auto& s : run.strata) {
    if (s.multiplicity != 1) continue;
    for (int m : s.members) {
      const auto& t = run.sample.triples[static_cast<size_t>(m)];
      const auto d = eigen_decompose(h.at(t.node), run.sample.cluster_tol);
      const Matrix& pi = d.projectors[static_cast<size_t>(t.cluster_index)];
      double sq = 0.0;
      for (int a = 0; a < 2; ++a) {
        std::vector<double> vals;
        dfam[static_cast<size_t>(a)].eval(run.grid->coord(t.node), vals);
        Matrix dm(2, 2);
        dm << vals[0], vals[1], vals[2], vals[3];
        const double g = (pi * dm).trace().real();
        sq += g * g;
      }
      CHECK(std::sqrt(sq) >= 1.0 - 1e-6);
    }
  }
}

TEST_CASE("strata csv is written") {
  auto fam = builtin_family("example2");
  auto run = stratify(fam, DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 21, {-0.2, 0.2});
  const std::string path = "/tmp/fibm_test_strata.csv";
  write_strata_csv(path, run.sample, run.strata);
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string header;
  std::getline(f, header);
  CHECK(header == "k1,k2,lambda,mu,stratum_id");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == static_cast<int>(run.sample.triples.size()));
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/covering.hpp"
#include "core/stratify.hpp"

using namespace fibm;

namespace {

struct CoveringRun {
  GridPtr grid;
  SigmaSample sample;
  std::vector<Stratum> strata;
  ThresholdSet thresholds;
  SpectralFieldPtr spec;
  Covering cov;
  std::shared_ptr<const ClosedFormModel> model;
};

CoveringRun build_greedy(const std::string& model_id, const DomainSpec& dom, int n,
                         const Interval& I, const Interval& Itilde) {
  CoveringRun r;
  auto fam = builtin_family(model_id);
  r.grid = build_grid(dom, n);
  const double lip = estimate_eigenvalue_lipschitz(fam, *r.grid);
  r.sample = sample_sigma(fam, r.grid, Itilde, std::max(0.75 * lip * r.grid->min_spacing(), 1e-12));
  r.strata = extract_strata(r.sample, 1.5 * lip);
  r.thresholds = detect_thresholds(fam, r.sample, r.strata, 10.0 * r.grid->min_spacing(), lip);
  r.spec = build_spectral_field(sample_family(fam, r.grid), kDefaultClusterTol);
  r.cov = build_covering(fam, r.grid, r.sample, r.strata, r.thresholds, I, Itilde, {});
  if (model_id == "example1") r.model = std::make_shared<ClosedFormModel>(1);
  if (model_id == "example2") r.model = std::make_shared<ClosedFormModel>(2);
  return r;
}

MatrixPolynomialFamily scalar_paraboloid() {
  MatrixPolynomialFamily fam(1, 2);
  Polynomial k1 = Polynomial::variable(0, 2);
  Polynomial k2 = Polynomial::variable(1, 2);
  fam.entry(0, 0) = k1 * k1 + k2 * k2;
  return fam;
}

}  // namespace

TEST_CASE("greedy covering of the scalar band annulus") {
  auto fam = scalar_paraboloid();
  auto grid = build_grid(DomainSpec::box({{{-1.5, 1.5}}, {{-1.5, 1.5}}}), 41);
  const double lip = estimate_eigenvalue_lipschitz(fam, *grid);
  auto sample = sample_sigma(fam, grid, {0.1, 1.4}, std::max(0.75 * lip * grid->min_spacing(), 1e-12));
  auto strata = extract_strata(sample, 1.5 * lip);
  ThresholdSet none;
  Covering cov = build_covering(fam, grid, sample, strata, none, {0.5, 1.0}, {0.1, 1.4}, {});

  CHECK(cov.num_regions() >= 3);
  for (const auto& w : cov.windows) CHECK(w.rank == 1);

  BumpSystem bumps(cov, nullptr);
  PartitionReport rep = verify_partition(bumps, sample, {0.5, 1.0});
  CHECK(rep.max_g_defect <= 1e-12);
  CHECK(rep.max_sigma_defect <= 1e-10);
}

TEST_CASE("greedy covering of the first model at energy one") {
  auto run = build_greedy("example1", DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 161,
                          {0.95, 1.05}, {0.45, 1.55});
  CHECK(run.cov.num_regions() >= 4);

  // the double band crosses the energy shell on the k2 axis: some window
  // must carry rank 2
  bool has_rank2 = false;
  for (const auto& w : run.cov.windows) {
    CHECK(w.J.inside(run.cov.Itilde));
    CHECK(w.Jprime.inside(w.J));
    has_rank2 = has_rank2 || w.rank == 2;
  }
  CHECK(has_rank2);

  // window rank constancy over the sampled region
  for (size_t wi = 0; wi < run.cov.windows.size(); ++wi) {
    MaskedField p = window_projector_field(run.cov, static_cast<int>(wi), *run.spec);
    for (std::int64_t node = 0; node < run.grid->num_nodes(); ++node) {
      if (!p.mask[static_cast<size_t>(node)]) continue;
      const int rank = static_cast<int>(std::lround(p.field.at(node).trace().real()));
      CHECK(rank == run.cov.windows[wi].rank);
    }
  }

  BumpSystem bumps(run.cov, run.model);
  PartitionReport rep = verify_partition(bumps, run.sample, run.cov.I);
  CHECK(rep.max_g_defect <= 1e-12);
  CHECK(rep.max_sigma_defect <= 1e-10);

  // bump supports stay strictly inside the box
  for (const auto& r : run.cov.regions) {
    for (int a = 0; a < 2; ++a) {
      CHECK(r.center[a] - r.radius >= run.grid->spec().bounds[a][0]);
      CHECK(r.center[a] + r.radius <= run.grid->spec().bounds[a][1]);
    }
  }
}

TEST_CASE("threshold inside the working interval aborts the covering") {
  auto fam = builtin_family("example1");
  auto grid = build_grid(DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 65);
  const double lip = estimate_eigenvalue_lipschitz(fam, *grid);
  auto sample = sample_sigma(fam, grid, {-0.6, 0.4}, 0.75 * lip * grid->min_spacing());
  auto strata = extract_strata(sample, 1.5 * lip);
  auto th = detect_thresholds(fam, sample, strata, 10.0 * grid->min_spacing(), lip);
  REQUIRE(!th.values.empty());
  CHECK_THROWS_AS(
      build_covering(fam, grid, sample, strata, th, {-0.3, -0.2}, {-0.35, -0.15}, {}),
      Error);
}

TEST_CASE("slab covering of the second model") {
  auto fam = builtin_family("example2");
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 33);
  auto spec = build_spectral_field(sample_family(fam, grid), kDefaultClusterTol);
  Covering cov = analytic_covering(2, grid, {-0.1, 0.1}, {-0.2, 0.2}, *spec);
  auto model = std::make_shared<ClosedFormModel>(2);

  REQUIRE(cov.num_regions() == 3);
  REQUIRE(cov.windows.size() == 5);
  CHECK(cov.windows[0].rank == 2);

  // branch windows follow the closed-form sheet projectors on their side
  for (int wi = 1; wi <= 4; ++wi) {
    MaskedField p = window_projector_field(cov, wi, *spec);
    const Window& w = cov.windows[static_cast<size_t>(wi)];
    const double side = w.region == 1 ? 1.0 : -1.0;
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
      const Coord k = grid->coord(node);
      if (side * k[0] <= 0.0) {
        CHECK(!p.mask[static_cast<size_t>(node)]);
        continue;
      }
      REQUIRE(p.mask[static_cast<size_t>(node)]);
      // order 1 is the upper branch: pi_+ on the right slab, pi_- on the left
      const int branch = (w.branch_order == 1) == (side > 0) ? +1 : -1;
      CHECK(spectral_norm(p.field.at(node) - model->projector(branch, k)) < 1e-12);
    }
  }

  const double lip = estimate_eigenvalue_lipschitz(fam, *grid);
  auto sample = sample_sigma(fam, grid, {-0.2, 0.2}, 0.75 * lip * grid->min_spacing());
  BumpSystem bumps(cov, model);
  PartitionReport rep = verify_partition(bumps, sample, cov.I);
  CHECK(rep.max_g_defect <= 1e-12);
  CHECK(rep.max_sigma_defect <= 1e-10);
}

TEST_CASE("bump normalization identities") {
  // two overlapping balls: the normalized squares sum to one in the overlap
  Covering cov;
  cov.grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 17);
  for (double cx : {-0.2, 0.2}) {
    Region r;
    r.kind = Region::Kind::Ball;
    r.center = {cx, 0.0, 0.0};
    r.radius = 0.5;
    cov.regions.push_back(r);
    cov.region_windows.emplace_back();
  }
  BumpSystem bumps(cov, nullptr);
  const Coord mid{0.0, 0.0, 0.0};
  const double g0 = bumps.g(0, mid), g1 = bumps.g(1, mid);
  CHECK(std::abs(g0 * g0 + g1 * g1 - 1.0) < 1e-12);
  CHECK(g0 == doctest::Approx(g1));

  // analytic bump gradients agree with central differences
  for (int m = 0; m < 2; ++m) {
    for (double x : {-0.15, 0.05, 0.21}) {
      const double eps = 1e-6;
      const auto grad = bumps.grad_g(m, {x, 0.07, 0.0});
      const double fd0 =
          (bumps.g(m, {x + eps, 0.07, 0.0}) - bumps.g(m, {x - eps, 0.07, 0.0})) / (2 * eps);
      const double fd1 =
          (bumps.g(m, {x, 0.07 + eps, 0.0}) - bumps.g(m, {x, 0.07 - eps, 0.0})) / (2 * eps);
      CHECK(std::abs(grad[0] - fd0) < 1e-7);
      CHECK(std::abs(grad[1] - fd1) < 1e-7);
    }
  }
}

TEST_CASE("incidence classification on the slab covering") {
  auto fam = builtin_family("example2");
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 33);
  auto spec = build_spectral_field(sample_family(fam, grid), kDefaultClusterTol);
  Covering cov = analytic_covering(2, grid, {-0.1, 0.1}, {-0.2, 0.2}, *spec);
  WindowCache cache(cov, *spec);
  IncidenceData inc = classify_incidence(cache);

  // crossing slab absorbs every branch window; branch slabs never meet
  CHECK(inc.pairs.size() == 4);
  for (const auto& p : inc.pairs) {
    CHECK(cov.windows[static_cast<size_t>(p.deeper)].rank == 2);
    CHECK(cov.windows[static_cast<size_t>(p.shallower)].rank == 1);
    CHECK(!p.same_stratum);
    CHECK(p.absorption_defect <= 1e-10);
  }
  // asymmetry: no pair appears with both orientations
  for (const auto& a : inc.pairs)
    for (const auto& b : inc.pairs) {
      const bool flipped = a.deeper == b.shallower && a.shallower == b.deeper;
      CHECK(!flipped);
    }
  // orderings are deepest-first
  CHECK(!inc.orderings.empty());
  for (const auto& fam_set : inc.orderings)
    for (size_t i = 1; i < fam_set.size(); ++i)
      CHECK(cov.windows[static_cast<size_t>(fam_set[i - 1])].rank >=
            cov.windows[static_cast<size_t>(fam_set[i])].rank);
}

TEST_CASE("incidence on the greedy covering of the first model") {
  auto run = build_greedy("example1", DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 161,
                          {0.95, 1.05}, {0.45, 1.55});
  WindowCache cache(run.cov, *run.spec);
  IncidenceData inc = classify_incidence(cache);
  for (const auto& p : inc.pairs) {
    CHECK(p.absorption_defect <= 1e-10);
    if (!p.same_stratum)
      CHECK(run.cov.windows[static_cast<size_t>(p.deeper)].rank >
            run.cov.windows[static_cast<size_t>(p.shallower)].rank);
  }
}

TEST_CASE("theta partitions") {
  // analytic covering: the crossing slab splits into the profile weights
  auto fam = builtin_family("example2");
  auto grid = build_grid(DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}}), 33);
  auto spec = build_spectral_field(sample_family(fam, grid), kDefaultClusterTol);
  Covering cov = analytic_covering(2, grid, {-0.1, 0.1}, {-0.2, 0.2}, *spec);
  auto model = std::make_shared<ClosedFormModel>(2);
  BumpSystem bumps(cov, model);
  ThetaFamily th = build_theta_family(cov, bumps, 0);
  REQUIRE(th.alphas.size() == 3);
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    double sum = 0.0;
    for (const auto& w : th.weights) sum += w.at(node);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  // greedy covering: normalized subset products partition each region
  auto run = build_greedy("example1", DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}}), 161,
                          {0.95, 1.05}, {0.45, 1.55});
  BumpSystem gb(run.cov, run.model);
  for (int m = 0; m < std::min(3, run.cov.num_regions()); ++m) {
    ThetaFamily tf = build_theta_family(run.cov, gb, m);
    CHECK(tf.max_partition_defect <= 1e-12);
    // weights vanish on bump supports of regions outside their index set
    for (size_t a = 0; a < tf.alphas.size(); ++a) {
      for (std::int64_t node : run.cov.regions[static_cast<size_t>(m)].valid_nodes) {
        if (tf.weights[a].at(node) < 1e-13) continue;
        const Coord k = run.grid->coord(node);
        for (int other = 0; other < run.cov.num_regions(); ++other) {
          if (std::find(tf.alphas[a].begin(), tf.alphas[a].end(), other) != tf.alphas[a].end())
            continue;
          CHECK(gb.g(other, k) * gb.g(other, k) * tf.weights[a].at(node) < 1e-10);
        }
      }
    }
  }
}

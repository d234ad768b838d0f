#include "core/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "core/util.hpp"

namespace fibm {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

double estimate_eigenvalue_lipschitz(const MatrixPolynomialFamily& fam, const Grid& grid) {
  std::vector<MatrixPolynomialFamily> deriv;
  for (int a = 0; a < grid.dim(); ++a) deriv.push_back(fam.derivative(a));
  const std::int64_t n = grid.num_nodes();
  std::vector<double> norms(static_cast<size_t>(n), 0.0);
  for_each_index(n, [&](std::int64_t node) {
    const Coord k = grid.coord(node);
    std::vector<double> vals;
    double sq = 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
      deriv[static_cast<size_t>(a)].eval(k, vals);
      const int mu = fam.fiber_dim();
      Matrix m(mu, mu);
      for (int i = 0; i < mu; ++i)
        for (int j = 0; j < mu; ++j) m(i, j) = vals[static_cast<size_t>(i) * mu + j];
      const double nm = spectral_norm(m);
      sq += nm * nm;
    }
    norms[static_cast<size_t>(node)] = std::sqrt(sq);
  });
  return *std::max_element(norms.begin(), norms.end());
}

SigmaSample sample_sigma(const MatrixPolynomialFamily& fam, GridPtr grid, const Interval& window,
                         double cluster_tol) {
  if (fam.dim() != grid->dim()) fail(ErrorCode::DimensionMismatch, "family/grid dimension mismatch");
  SigmaSample sample;
  sample.grid = grid;
  sample.window = window;
  sample.cluster_tol = cluster_tol;

  const std::int64_t n = grid->num_nodes();
  std::vector<std::vector<SigmaTriple>> per_node(static_cast<size_t>(n));
  MatrixField h = sample_family(fam, grid);
  for_each_index(n, [&](std::int64_t node) {
    const SpectralDecomposition d = eigen_decompose(h.at(node), cluster_tol);
    for (size_t c = 0; c < d.clusters.size(); ++c) {
      if (!window.contains(d.clusters[c].mean)) continue;
      SigmaTriple t;
      t.node = node;
      t.lambda = d.clusters[c].mean;
      t.multiplicity = d.clusters[c].count;
      t.cluster_index = static_cast<int>(c);
      per_node[static_cast<size_t>(node)].push_back(t);
    }
  });
  for (auto& v : per_node)
    for (auto& t : v) sample.triples.push_back(t);
  return sample;
}

std::vector<Stratum> extract_strata(const SigmaSample& sample, double lip) {
  const Grid& grid = *sample.grid;
  const int nt = static_cast<int>(sample.triples.size());
  if (nt == 0) return {};

  // triples grouped by node for adjacency lookups
  std::map<std::int64_t, std::vector<int>> by_node;
  for (int i = 0; i < nt; ++i) by_node[sample.triples[static_cast<size_t>(i)].node].push_back(i);

  UnionFind uf(nt);
  const double lam_tol_base = std::max(lip * grid.min_spacing(), 1e-12);
  for (int i = 0; i < nt; ++i) {
    const SigmaTriple& t = sample.triples[static_cast<size_t>(i)];
    for (int axis = 0; axis < grid.dim(); ++axis) {
      const auto nb = grid.neighbor(t.node, axis, +1);
      if (!nb) continue;
      const auto it = by_node.find(*nb);
      if (it == by_node.end()) continue;
      // mutual nearest-energy matching within the multiplicity class, so
      // distinct bands passing close to each other never glue together
      int best = -1;
      double best_d = lam_tol_base * grid.spacing(axis) / grid.min_spacing();
      for (int j : it->second) {
        const SigmaTriple& u = sample.triples[static_cast<size_t>(j)];
        if (u.multiplicity != t.multiplicity) continue;
        const double d = std::abs(u.lambda - t.lambda);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (best < 0) continue;
      const SigmaTriple& u = sample.triples[static_cast<size_t>(best)];
      bool mutual = true;
      for (int i2 : by_node[t.node]) {
        if (i2 == i) continue;
        const SigmaTriple& t2 = sample.triples[static_cast<size_t>(i2)];
        if (t2.multiplicity != u.multiplicity) continue;
        if (std::abs(t2.lambda - u.lambda) < best_d) {
          mutual = false;
          break;
        }
      }
      if (mutual) uf.merge(i, best);
    }
  }

  std::map<int, Stratum> roots;
  for (int i = 0; i < nt; ++i) {
    const int r = uf.find(i);
    Stratum& s = roots[r];
    s.members.push_back(i);
    s.multiplicity = sample.triples[static_cast<size_t>(i)].multiplicity;
  }
  std::vector<Stratum> strata;
  int id = 0;
  for (auto& [r, s] : roots) {
    s.id = id++;
    strata.push_back(std::move(s));
  }

  // dimension estimate: principal axes of member coordinates at scale ~3h
  for (Stratum& s : strata) {
    const double radius = 3.2 * grid.min_spacing();
    std::vector<int> votes;
    const size_t stride = std::max<size_t>(1, s.members.size() / 64);
    for (size_t mi = 0; mi < s.members.size(); mi += stride) {
      const Coord c0 = grid.coord(sample.triples[static_cast<size_t>(s.members[mi])].node);
      Eigen::MatrixXd pts(static_cast<int>(s.members.size()), grid.dim());
      int count = 0;
      for (int m : s.members) {
        const Coord c = grid.coord(sample.triples[static_cast<size_t>(m)].node);
        if (grid.distance(c, c0) > radius) continue;
        for (int a = 0; a < grid.dim(); ++a) pts(count, a) = c[a] - c0[a];
        ++count;
      }
      if (count < 2) {
        votes.push_back(0);
        continue;
      }
      Eigen::MatrixXd block = pts.topRows(count);
      Eigen::RowVectorXd mean = block.colwise().mean();
      block.rowwise() -= mean;
      Eigen::MatrixXd cov = block.adjoint() * block / count;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      int dim = 0;
      for (int a = 0; a < grid.dim(); ++a)
        if (std::sqrt(std::max(0.0, es.eigenvalues()(a))) > 0.8 * grid.min_spacing()) ++dim;
      votes.push_back(dim);
    }
    std::sort(votes.begin(), votes.end());
    s.estimated_dim = votes.empty() ? 0 : votes[votes.size() / 2];
  }
  return strata;
}

namespace {

// Unit directions spanning the locally fitted tangent space of a degenerate
// band near one point. The fit runs over a sample taken on an energy window
// wider than the working one, so a band clipped to a thin energy shell
// still shows its true direction.
std::vector<Eigen::VectorXd> local_tangent_dirs(const SigmaSample& wide, const Coord& c0,
                                                double lambda0, int mu, double radius,
                                                double lam_tol) {
  const Grid& grid = *wide.grid;
  std::vector<Eigen::VectorXd> dirs;
  Eigen::MatrixXd pts(static_cast<int>(wide.triples.size()), grid.dim());
  int count = 0;
  for (const SigmaTriple& t : wide.triples) {
    if (t.multiplicity != mu) continue;
    if (std::abs(t.lambda - lambda0) > lam_tol) continue;
    const Coord c = grid.coord(t.node);
    if (grid.distance(c, c0) > radius) continue;
    for (int a = 0; a < grid.dim(); ++a) pts(count, a) = c[a] - c0[a];
    ++count;
  }
  if (count < 2) return dirs;
  Eigen::MatrixXd block = pts.topRows(count);
  Eigen::RowVectorXd mean = block.colwise().mean();
  block.rowwise() -= mean;
  Eigen::MatrixXd cov = block.adjoint() * block / count;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int a = 0; a < grid.dim(); ++a)
    if (std::sqrt(std::max(0.0, es.eigenvalues()(a))) > 0.8 * grid.min_spacing())
      dirs.push_back(es.eigenvectors().col(a));
  return dirs;
}

}  // namespace

ThresholdSet detect_thresholds(const MatrixPolynomialFamily& fam, const SigmaSample& sample,
                               const std::vector<Stratum>& strata, double grad_tol, double lip) {
  const Grid& grid = *sample.grid;
  std::vector<MatrixPolynomialFamily> dfam;
  for (int a = 0; a < grid.dim(); ++a) dfam.push_back(fam.derivative(a));
  MatrixField h = sample_family(fam, sample.grid);
  std::vector<MatrixField> dh;
  for (int a = 0; a < grid.dim(); ++a) dh.push_back(sample_family(dfam[static_cast<size_t>(a)], sample.grid));

  // widened sample so clipped degenerate bands expose their tangents
  const double dilation = 3.5 * std::max(lip, 1.0) * grid.min_spacing();
  const Interval wide_window{sample.window.lo - dilation, sample.window.hi + dilation};
  const SigmaSample wide = sample_sigma(fam, sample.grid, wide_window, sample.cluster_tol);
  const double patch_radius = 3.2 * grid.min_spacing();
  const double patch_lam_tol = std::max(lip, 1.0) * (patch_radius + grid.min_spacing());

  struct Flagged {
    double lambda;
    double grad;
    int stratum;
    Coord point;
  };
  std::vector<Flagged> flagged;

  for (const Stratum& s : strata) {
    for (size_t mi = 0; mi < s.members.size(); ++mi) {
      const SigmaTriple& t = sample.triples[static_cast<size_t>(s.members[mi])];
      const SpectralDecomposition d = eigen_decompose(h.at(t.node), sample.cluster_tol);
      if (t.cluster_index >= static_cast<int>(d.clusters.size())) continue;
      const Matrix& pi = d.projectors[static_cast<size_t>(t.cluster_index)];
      const int mu = t.multiplicity;
      // Hellmann-Feynman: gradient of the cluster mean is Tr(pi dH)/mu.
      Eigen::VectorXd grad(grid.dim());
      for (int a = 0; a < grid.dim(); ++a)
        grad(a) = (pi * dh[static_cast<size_t>(a)].at(t.node)).trace().real() / mu;

      double measure;
      if (mu == 1) {
        // simple bands live on full-dimensional sheets: criticality of the
        // energy projection is criticality of the eigenvalue itself
        measure = grad.norm();
      } else {
        // degenerate bands sit on lower-dimensional sets; only tangential
        // variation counts for the rank of the energy projection
        const auto dirs = local_tangent_dirs(wide, grid.coord(t.node), t.lambda, mu, patch_radius,
                                             patch_lam_tol);
        if (dirs.empty()) {
          measure = grad.norm();
        } else {
          double sq = 0.0;
          for (const auto& dir : dirs) {
            const double c = grad.dot(dir);
            sq += c * c;
          }
          measure = std::sqrt(sq);
        }
      }
      if (measure < grad_tol)
        flagged.push_back({t.lambda, measure, s.id, grid.coord(t.node)});
    }
  }

  // Deduplicate: keep the flattest representative within 2 lip h in energy.
  std::sort(flagged.begin(), flagged.end(),
            [](const Flagged& a, const Flagged& b) { return a.lambda < b.lambda; });
  ThresholdSet out;
  const double dedupe = 2.0 * lip * grid.min_spacing();
  size_t i = 0;
  while (i < flagged.size()) {
    size_t j = i;
    size_t best = i;
    while (j < flagged.size() && flagged[j].lambda - flagged[i].lambda < dedupe) {
      if (flagged[j].grad < flagged[best].grad) best = j;
      ++j;
    }
    out.values.push_back(flagged[best].lambda);
    out.stratum_ids.push_back(flagged[best].stratum);
    out.points.push_back(flagged[best].point);
    i = j;
  }
  return out;
}

void write_strata_csv(const std::string& path, const SigmaSample& sample,
                      const std::vector<Stratum>& strata) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot open " + path);
  const Grid& grid = *sample.grid;
  f << "k1";
  for (int a = 1; a < grid.dim(); ++a) f << ",k" << (a + 1);
  f << ",lambda,mu,stratum_id\n";
  f.precision(17);
  for (const Stratum& s : strata) {
    for (int m : s.members) {
      const SigmaTriple& t = sample.triples[static_cast<size_t>(m)];
      const Coord c = grid.coord(t.node);
      f << c[0];
      for (int a = 1; a < grid.dim(); ++a) f << ',' << c[a];
      f << ',' << t.lambda << ',' << t.multiplicity << ',' << s.id << '\n';
    }
  }
}

}  // namespace fibm

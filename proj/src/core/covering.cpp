#include "core/covering.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/profiles.hpp"
#include "core/util.hpp"

namespace fibm {

SpectralFieldPtr build_spectral_field(const MatrixField& h, double cluster_tol) {
  auto data = std::make_shared<SpectralFieldData>();
  data->grid = h.grid();
  data->cluster_tol = cluster_tol;
  data->decomp.resize(static_cast<size_t>(h.size()));
  for_each_index(h.size(), [&](std::int64_t node) {
    data->decomp[static_cast<size_t>(node)] = eigen_decompose(h.at(node), cluster_tol);
  });
  return data;
}

Matrix window_projector(const Covering& cov, const Window& w, const SpectralDecomposition& d) {
  if (w.branch_mode) {
    const int nc = static_cast<int>(d.clusters.size());
    if (w.branch_order >= nc)
      fail(ErrorCode::BoundaryCollision, "branch window: fewer clusters than branch order");
    return d.projectors[static_cast<size_t>(w.branch_order)];
  }
  return interval_projector(d, w.J, cov.cluster_tol);
}

MaskedField window_projector_field(const Covering& cov, int window_index,
                                   const SpectralFieldData& spec) {
  const Window& w = cov.windows[static_cast<size_t>(window_index)];
  const Region& r = cov.regions[static_cast<size_t>(w.region)];
  MaskedField out;
  out.field = MatrixField(cov.grid, spec.at(0).fiber_dim());
  out.mask.assign(static_cast<size_t>(cov.grid->num_nodes()), 0);
  for (std::int64_t node : r.valid_nodes) {
    const SpectralDecomposition& d = spec.at(node);
    Matrix p;
    try {
      p = window_projector(cov, w, d);
    } catch (const Error&) {
      continue;  // node outside the window's structural validity
    }
    if (w.branch_mode && d.clusters[static_cast<size_t>(w.branch_order)].count != w.rank) continue;
    if (!w.branch_mode) {
      const int rank = static_cast<int>(std::lround(p.trace().real()));
      if (rank != w.rank) continue;
    }
    out.field.at(node) = p;
    out.mask[static_cast<size_t>(node)] = 1;
  }
  return out;
}

namespace {

std::vector<std::int64_t> nodes_in_ball(const Grid& grid, const Coord& center, double radius) {
  std::vector<std::int64_t> nodes;
  for (std::int64_t i = 0; i < grid.num_nodes(); ++i)
    if (grid.distance(grid.coord(i), center) <= radius) nodes.push_back(i);
  return nodes;
}

double boundary_distance(const Grid& grid, const Coord& k) {
  if (grid.spec().kind == DomainSpec::Kind::Torus) return 1e30;
  double d = 1e30;
  for (int a = 0; a < grid.dim(); ++a) {
    d = std::min(d, k[a] - grid.spec().bounds[a][0]);
    d = std::min(d, grid.spec().bounds[a][1] - k[a]);
  }
  return d;
}

struct BallCheckResult {
  bool ok = false;
  std::string reason;
  std::vector<Window> windows;
};

// Validity of one candidate ball: per-cluster energy windows keep constant
// rank down to the inner interval, no foreign eigenvalue enters the working
// interval outside the windows, projector motion stays Nagy-small and the
// escape direction is uniformly positive on the compressed derivative.
// Everything is checked on nodes and on +h/2 midpoints inside the ball.
BallCheckResult check_ball(const MatrixPolynomialFamily& fam,
                           const std::vector<MatrixPolynomialFamily>& dfam, const Grid& grid,
                           const Coord& k0, double radius, double pad, const Interval& I,
                           const Interval& Itilde, double cluster_tol, double lip,
                           const CoveringOptions& opts) {
  BallCheckResult res;
  const int mu = fam.fiber_dim();

  auto eval_matrix = [&](const MatrixPolynomialFamily& f, const Coord& k) {
    std::vector<double> vals;
    f.eval(k, vals);
    Matrix m(mu, mu);
    for (int i = 0; i < mu; ++i)
      for (int j = 0; j < mu; ++j) m(i, j) = vals[static_cast<size_t>(i) * mu + j];
    return m;
  };
  auto decompose_at = [&](const Coord& k) { return eigen_decompose(eval_matrix(fam, k), cluster_tol); };

  const SpectralDecomposition d0 = decompose_at(k0);

  // eigenvalue speed per anchor cluster (Hellmann-Feynman, exact)
  std::vector<double> speeds(d0.clusters.size(), 0.5);
  for (size_t c = 0; c < d0.clusters.size(); ++c) {
    double sq = 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
      const double g = (d0.projectors[c] * eval_matrix(dfam[static_cast<size_t>(a)], k0))
                           .trace()
                           .real() /
                       d0.clusters[c].count;
      sq += g * g;
    }
    speeds[c] = std::max(0.5, std::sqrt(sq));
  }

  // Window candidates: anchor clusters within reach of the closed working
  // interval, with neighbors merged whenever the gap is too small to keep
  // separate windows rank-constant over a ball of this radius.
  struct Cand {
    double lo, hi;  // eigenvalue run covered by the window
    int rank;
    double speed;
    double rho;
    double mid() const { return 0.5 * (lo + hi); }
  };
  const double reach = 1.2 * lip * (radius + pad);
  std::vector<Cand> cands;
  for (size_t c = 0; c < d0.clusters.size(); ++c) {
    const double m = d0.clusters[c].mean;
    if (m < I.lo - reach || m > I.hi + reach) continue;
    if (m <= Itilde.lo || m >= Itilde.hi) continue;  // caught later if it matters
    const double sp = speeds[c];
    if (!cands.empty() &&
        m - cands.back().hi < 3.5 * std::max(sp, cands.back().speed) * radius) {
      cands.back().hi = m;
      cands.back().rank += d0.clusters[c].count;
      cands.back().speed = std::max(cands.back().speed, sp);
    } else {
      cands.push_back({m, m, d0.clusters[c].count, sp, 0.0});
    }
  }
  if (cands.empty()) {
    res.reason = "anchor has no spectrum in the working interval";
    return res;
  }
  for (size_t c = 0; c < cands.size(); ++c) {
    double gap = 1e30;
    // distance to any anchor cluster outside this window's run
    for (const auto& cl : d0.clusters) {
      if (cl.mean >= cands[c].lo - 1e-14 && cl.mean <= cands[c].hi + 1e-14) continue;
      gap = std::min(gap, cl.mean < cands[c].lo ? cands[c].lo - cl.mean : cl.mean - cands[c].hi);
    }
    double rho = std::min(gap / 2.2, 0.9 * std::min(cands[c].mid() - Itilde.lo,
                                                    Itilde.hi - cands[c].mid()));
    const double need = (0.5 * (cands[c].hi - cands[c].lo) + cands[c].speed * radius) / 0.72;
    if (rho <= std::max(4.0 * cluster_tol, need)) {
      res.reason = "no admissible energy window at the anchor";
      return res;
    }
    cands[c].rho = rho;
  }

  // sample coordinates: nodes in the ball plus +h/2 midpoints; the stencil
  // pad outside is handled pointwise by the window field masks
  std::vector<Coord> samples;
  for (std::int64_t node : nodes_in_ball(grid, k0, radius)) {
    const Coord c = grid.coord(node);
    samples.push_back(c);
    for (int a = 0; a < grid.dim(); ++a) {
      Coord m = c;
      m[a] += 0.5 * grid.spacing(a);
      if (grid.distance(m, k0) <= radius) samples.push_back(m);
    }
  }
  if (samples.size() < 2) {
    res.reason = "ball contains too few samples";
    return res;
  }
  std::vector<SpectralDecomposition> sdec(samples.size());
  std::vector<std::vector<Matrix>> sdh(samples.size());
  for_each_index(static_cast<std::int64_t>(samples.size()), [&](std::int64_t s) {
    sdec[static_cast<size_t>(s)] = decompose_at(samples[static_cast<size_t>(s)]);
    for (int a = 0; a < grid.dim(); ++a)
      sdh[static_cast<size_t>(s)].push_back(
          eval_matrix(dfam[static_cast<size_t>(a)], samples[static_cast<size_t>(s)]));
  });

  for (const Cand& cand : cands) {
    const Interval J{cand.mid() - cand.rho, cand.mid() + cand.rho};
    const Interval Jp{cand.mid() - 0.8 * cand.rho, cand.mid() + 0.8 * cand.rho};
    const double btol = cand.rho / 16.0;
    const Matrix pi0 = interval_projector(d0, J, cluster_tol);

    Eigen::VectorXd grad0(grid.dim());
    for (int a = 0; a < grid.dim(); ++a)
      grad0(a) = (pi0 * eval_matrix(dfam[static_cast<size_t>(a)], k0)).trace().real() / cand.rank;
    if (grad0.norm() < opts.escape_grad_floor) {
      res.reason = "flat escape direction at the anchor (near-critical energy)";
      return res;
    }

    for (size_t s = 0; s < samples.size(); ++s) {
      const SpectralDecomposition& d = sdec[s];
      int in_Jp = 0;
      for (double ev : d.eigenvalues) {
        if (std::abs(ev - J.lo) < btol || std::abs(ev - J.hi) < btol) {
          res.reason = "eigenvalue touches a window boundary";
          return res;
        }
        if (J.contains(ev)) {
          if (!Jp.contains(ev)) {
            res.reason = "eigenvalue escaped the inner window";
            return res;
          }
          ++in_Jp;
        }
      }
      if (in_Jp != cand.rank) {
        res.reason = "window rank is not constant over the ball";
        return res;
      }
      Matrix pi;
      try {
        pi = interval_projector(d, J, cluster_tol);
      } catch (const Error& e) {
        res.reason = e.what();
        return res;
      }
      if (spectral_norm(pi - pi0) > opts.frame_gap) {
        res.reason = "projector moves too much for a frame";
        return res;
      }

      // escape positivity on the compressed coefficient derivative
      Eigen::VectorXd grad(grid.dim());
      for (int a = 0; a < grid.dim(); ++a)
        grad(a) = (pi * sdh[s][static_cast<size_t>(a)]).trace().real() / cand.rank;
      const double g2 = grad.squaredNorm();
      if (g2 < opts.escape_grad_floor * opts.escape_grad_floor) {
        res.reason = "escape direction degenerates inside the ball";
        return res;
      }
      Matrix xdh = Matrix::Zero(mu, mu);
      for (int a = 0; a < grid.dim(); ++a) xdh += (grad(a) / g2) * sdh[s][static_cast<size_t>(a)];
      Eigen::SelfAdjointEigenSolver<Matrix> es(pi);
      Matrix basis(mu, cand.rank);
      int col = 0;
      for (int i = 0; i < mu; ++i)
        if (es.eigenvalues()(i) > 0.5) basis.col(col++) = es.eigenvectors().col(i);
      if (col != cand.rank) {
        res.reason = "projector rank drifted";
        return res;
      }
      const double mineig = min_eigenvalue_hermitian((basis.adjoint() * xdh * basis).eval());
      if (mineig < 0.5 - 1e-8) {
        res.reason = "escape positivity fails (min eig " + std::to_string(mineig) + ")";
        return res;
      }
    }

    Window w;
    w.branch_mode = false;
    w.J = J;
    w.Jprime = Jp;
    w.rank = cand.rank;
    res.windows.push_back(w);
  }

  // no eigenvalue in the closed working interval outside the inner windows
  for (size_t s = 0; s < samples.size(); ++s) {
    for (double ev : sdec[s].eigenvalues) {
      if (ev < I.lo || ev > I.hi) continue;
      bool inside = false;
      for (const Window& w : res.windows) inside = inside || w.Jprime.contains(ev);
      if (!inside) {
        res.reason = "working-interval eigenvalue not captured by any window";
        return res;
      }
    }
  }

  res.ok = true;
  return res;
}

int stratum_of_triple(const std::vector<Stratum>& strata, const SigmaSample& sample,
                      std::int64_t node, double lambda) {
  for (const Stratum& s : strata)
    for (int m : s.members) {
      const SigmaTriple& t = sample.triples[static_cast<size_t>(m)];
      if (t.node == node && std::abs(t.lambda - lambda) < 1e-9) return s.id;
    }
  return -1;
}

}  // namespace

Covering build_covering(const MatrixPolynomialFamily& fam, GridPtr grid,
                        const SigmaSample& sample, const std::vector<Stratum>& strata,
                        const ThresholdSet& thresholds, const Interval& I, const Interval& Itilde,
                        const CoveringOptions& opts) {
  for (double tau : thresholds.values)
    if (Itilde.contains(tau))
      fail(ErrorCode::ThresholdInInterval,
           "threshold " + std::to_string(tau) + " lies inside the working interval");
  if (!(I.lo >= Itilde.lo && I.hi <= Itilde.hi))
    fail(ErrorCode::InvalidArgument, "I must be contained in Itilde");

  Covering cov;
  cov.grid = grid;
  cov.I = I;
  cov.Itilde = Itilde;
  cov.cluster_tol = std::min(kDefaultClusterTol, sample.cluster_tol);

  std::vector<MatrixPolynomialFamily> dfam;
  for (int a = 0; a < grid->dim(); ++a) dfam.push_back(fam.derivative(a));
  const double lip = estimate_eigenvalue_lipschitz(fam, *grid);

  const double h = grid->min_spacing();
  const double margin = opts.boundary_margin > 0.0 ? opts.boundary_margin : 4.0 * h;
  const double pad = 2.5 * h;

  // must-cover triples: energies in the closed working interval, nodes
  // away from the box boundary (bump supports must stay interior)
  std::vector<int> to_cover;
  for (size_t i = 0; i < sample.triples.size(); ++i) {
    const SigmaTriple& t = sample.triples[i];
    if (t.lambda < I.lo || t.lambda > I.hi) continue;
    if (boundary_distance(*grid, grid->coord(t.node)) < margin) continue;
    to_cover.push_back(static_cast<int>(i));
  }
  std::vector<char> covered(sample.triples.size(), 0);

  auto first_uncovered = [&]() -> int {
    for (int idx : to_cover)
      if (!covered[static_cast<size_t>(idx)]) return idx;
    return -1;
  };

  while (true) {
    const int seed = first_uncovered();
    if (seed < 0) break;
    const SigmaTriple& t = sample.triples[static_cast<size_t>(seed)];
    const Coord k0 = grid->coord(t.node);

    double r = opts.initial_radius;
    if (r <= 0.0) {
      r = 0.0;
      for (int a = 0; a < grid->dim(); ++a) r = std::max(r, 0.1 * grid->spec().length(a));
    }
    r = std::min(r, boundary_distance(*grid, k0) - 1.5 * h);
    if (r <= 2.0 * h)
      fail(ErrorCode::NoConvergence, "no admissible ball radius at the boundary-adjacent seed");

    BallCheckResult ok;
    const double r_floor = 1.5 * h;
    int level = 0;
    for (; level <= opts.max_halvings; ++level) {
      ok = check_ball(fam, dfam, *grid, k0, r, pad, I, Itilde, cov.cluster_tol, lip, opts);
      if (ok.ok) break;
      const double next = 0.8 * r;  // narrow admissible bands need a slow schedule
      if (next >= r_floor) {
        r = next;
      } else if (r > r_floor * 1.0001) {
        r = r_floor;
      } else {
        break;
      }
    }
    if (!ok.ok)
      fail(ErrorCode::NoConvergence,
           "ball refinement failed at node (" + std::to_string(k0[0]) + "," +
               std::to_string(k0[1]) + "): " + ok.reason);

    Region reg;
    reg.kind = Region::Kind::Ball;
    reg.center = k0;
    reg.radius = r;
    reg.valid_mask.assign(static_cast<size_t>(grid->num_nodes()), 0);
    reg.valid_nodes = nodes_in_ball(*grid, k0, r + pad);
    for (std::int64_t node : reg.valid_nodes) reg.valid_mask[static_cast<size_t>(node)] = 1;
    const int m = cov.num_regions();
    cov.regions.push_back(reg);
    cov.region_windows.emplace_back();
    for (size_t n = 0; n < ok.windows.size(); ++n) {
      Window w = ok.windows[n];
      w.region = m;
      w.index_in_region = static_cast<int>(n);
      w.anchor_node = t.node;
      w.stratum_id = stratum_of_triple(strata, sample, t.node, w.J.mid());
      cov.region_windows[static_cast<size_t>(m)].push_back(static_cast<int>(cov.windows.size()));
      cov.windows.push_back(w);
    }

    // mark coverage inside the inner radius
    const double rc = cov.cover_frac * cov.bump_frac * r;
    for (int idx : to_cover) {
      if (covered[static_cast<size_t>(idx)]) continue;
      const SigmaTriple& u = sample.triples[static_cast<size_t>(idx)];
      if (grid->distance(grid->coord(u.node), k0) > rc) continue;
      for (int wi : cov.region_windows[static_cast<size_t>(m)]) {
        if (cov.windows[static_cast<size_t>(wi)].Jprime.contains(u.lambda)) {
          covered[static_cast<size_t>(idx)] = 1;
          break;
        }
      }
    }
    if (!covered[static_cast<size_t>(seed)])
      fail(ErrorCode::Internal, "accepted ball does not cover its own seed");
  }
  return cov;
}

Covering analytic_covering(int model_id, GridPtr grid, const Interval& I, const Interval& Itilde,
                           const SpectralFieldData& spec) {
  Covering cov;
  cov.grid = grid;
  cov.I = I;
  cov.Itilde = Itilde;
  cov.analytic = true;
  cov.model_id = model_id;

  double lo = 1e30, hi = -1e30;
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    const auto& evs = spec.at(node).eigenvalues;
    lo = std::min(lo, evs.front());
    hi = std::max(hi, evs.back());
  }

  const std::int64_t all = grid->num_nodes();
  auto make_region = [&](int profile, const std::function<bool(const Coord&)>& member) {
    Region r;
    r.kind = Region::Kind::Slab;
    r.axis = 0;
    r.profile = profile;
    r.valid_mask.assign(static_cast<size_t>(all), 0);
    for (std::int64_t node = 0; node < all; ++node) {
      if (!member(grid->coord(node))) continue;
      r.valid_mask[static_cast<size_t>(node)] = 1;
      r.valid_nodes.push_back(node);
    }
    return r;
  };

  // slab 0: the full-rank window around the band crossing
  cov.regions.push_back(make_region(0, [](const Coord&) { return true; }));
  cov.region_windows.emplace_back();
  {
    Window w;
    w.region = 0;
    w.index_in_region = 0;
    w.branch_mode = false;
    w.J = {lo - 1.0, hi + 1.0};
    w.Jprime = {lo - 0.5, hi + 0.5};
    w.rank = spec.at(0).fiber_dim();
    cov.region_windows[0].push_back(static_cast<int>(cov.windows.size()));
    cov.windows.push_back(w);
  }

  // slabs +-: one branch window per spectral order, valid strictly on
  // their own side of the crossing where the branch clusters separate
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    cov.regions.push_back(
        make_region(side + 1, [sign](const Coord& k) { return sign * k[0] > 0.0; }));
    const int m = cov.num_regions() - 1;
    cov.region_windows.emplace_back();
    for (int order = 0; order < 2; ++order) {
      Window w;
      w.region = m;
      w.index_in_region = order;
      w.branch_mode = true;
      w.branch_order = order;
      w.rank = 1;
      cov.region_windows[static_cast<size_t>(m)].push_back(static_cast<int>(cov.windows.size()));
      cov.windows.push_back(w);
    }
  }
  return cov;
}

BumpSystem::BumpSystem(const Covering& cov, std::shared_ptr<const ClosedFormModel> model)
    : cov_(&cov), model_(std::move(model)) {
  if (cov.analytic && !model_)
    fail(ErrorCode::InvalidArgument, "analytic covering needs its closed-form model");
}

double BumpSystem::raw_bump(int m, const Coord& k) const {
  const Region& r = cov_->regions[static_cast<size_t>(m)];
  const double t = cov_->grid->distance(k, r.center) / (cov_->bump_frac * r.radius);
  return Mollifier::value(t);
}

double BumpSystem::raw_bump_radial_deriv(int m, double t) const {
  const Region& r = cov_->regions[static_cast<size_t>(m)];
  return Mollifier::deriv(t) / (cov_->bump_frac * r.radius);
}

double BumpSystem::g(int m, const Coord& k) const {
  const Region& r = cov_->regions[static_cast<size_t>(m)];
  if (r.kind == Region::Kind::Slab) {
    const double x = k[static_cast<size_t>(r.axis)];
    switch (r.profile) {
      case 0: return model_->g0(x);
      case 1: return model_->gp(x);
      default: return model_->gm(x);
    }
  }
  const double phi = raw_bump(m, k);
  if (phi == 0.0) return 0.0;
  double sum = 0.0;
  for (int j = 0; j < cov_->num_regions(); ++j) {
    const double p = raw_bump(j, k);
    sum += p * p;
  }
  return phi / std::sqrt(sum);
}

std::array<double, kMaxDim> BumpSystem::grad_g(int m, const Coord& k) const {
  std::array<double, kMaxDim> grad{};
  const Region& r = cov_->regions[static_cast<size_t>(m)];
  if (r.kind == Region::Kind::Slab) {
    const double x = k[static_cast<size_t>(r.axis)];
    double d = 0.0;
    switch (r.profile) {
      case 0: d = model_->dg0(x); break;
      case 1: d = model_->dgp(x); break;
      default: d = model_->dgm(x); break;
    }
    grad[static_cast<size_t>(r.axis)] = d;
    return grad;
  }
  // normalized mollifier: quotient rule over the sum of squares
  const int dim = cov_->grid->dim();
  const double phi = raw_bump(m, k);
  if (phi == 0.0) return grad;
  double sum = 0.0;
  std::array<double, kMaxDim> dsum{};
  for (int j = 0; j < cov_->num_regions(); ++j) {
    const Region& rj = cov_->regions[static_cast<size_t>(j)];
    const double dist = cov_->grid->distance(k, rj.center);
    const double t = dist / (cov_->bump_frac * rj.radius);
    const double p = Mollifier::value(t);
    sum += p * p;
    if (p == 0.0 || dist == 0.0) continue;
    const double dp = raw_bump_radial_deriv(j, t);
    for (int a = 0; a < dim; ++a)
      dsum[static_cast<size_t>(a)] += 2.0 * p * dp * (k[static_cast<size_t>(a)] - rj.center[static_cast<size_t>(a)]) / dist;
  }
  const double dist_m = cov_->grid->distance(k, r.center);
  const double t_m = dist_m / (cov_->bump_frac * r.radius);
  const double dphi = raw_bump_radial_deriv(m, t_m);
  const double inv = 1.0 / std::sqrt(sum);
  for (int a = 0; a < dim; ++a) {
    double dphi_a = 0.0;
    if (dist_m > 0.0)
      dphi_a = dphi * (k[static_cast<size_t>(a)] - r.center[static_cast<size_t>(a)]) / dist_m;
    grad[static_cast<size_t>(a)] =
        dphi_a * inv - 0.5 * phi * dsum[static_cast<size_t>(a)] * inv * inv * inv;
  }
  return grad;
}

double BumpSystem::chi(int window_index, double lambda) const {
  const Window& w = cov_->windows[static_cast<size_t>(window_index)];
  if (w.branch_mode) return 1.0;  // branch sheets carry the wide cutoff
  const double wl = w.Jprime.lo - w.J.lo;
  const double wr = w.J.hi - w.Jprime.hi;
  return SmoothStep::value((lambda - w.J.lo) / wl) *
         SmoothStep::value((w.J.hi - lambda) / wr);
}

double BumpSystem::support_indicator(int m, const Coord& k) const {
  const Region& r = cov_->regions[static_cast<size_t>(m)];
  if (r.kind == Region::Kind::Slab) {
    // 1 wherever the slab bump is nonzero, fading just outside it
    const double x = k[static_cast<size_t>(r.axis)];
    if (r.profile == 0) return 1.0 - SmoothStep::value((std::abs(x) - 0.49) / 0.0075);
    const double s = r.profile == 1 ? x : -x;
    return SmoothStep::value((s - 0.2) / 0.045);
  }
  const double t = cov_->grid->distance(k, r.center) / r.radius;
  return 1.0 - SmoothStep::value((t - cov_->bump_frac) / (0.97 - cov_->bump_frac));
}

PartitionReport verify_partition(const BumpSystem& bumps, const SigmaSample& sample,
                                 const Interval& I) {
  const Covering& cov = bumps.covering();
  const Grid& grid = *cov.grid;
  PartitionReport rep;

  for (const SigmaTriple& t : sample.triples) {
    if (t.lambda < I.lo || t.lambda > I.hi) continue;
    const Coord k = grid.coord(t.node);
    // only points actually owned by the covering are graded
    bool owned = false;
    if (cov.analytic) {
      owned = true;
    } else {
      for (int m = 0; m < cov.num_regions(); ++m) {
        const Region& r = cov.regions[static_cast<size_t>(m)];
        if (grid.distance(k, r.center) <= cov.cover_frac * cov.bump_frac * r.radius) owned = true;
      }
    }
    if (!owned) continue;

    double sum_g = 0.0, sum_gchi = 0.0, raw = 0.0;
    for (int m = 0; m < cov.num_regions(); ++m) {
      const double gm = bumps.g(m, k);
      sum_g += gm * gm;
      for (int wi : cov.region_windows[static_cast<size_t>(m)]) {
        const Window& w = cov.windows[static_cast<size_t>(wi)];
        double c;
        if (w.branch_mode) {
          // a branch cylinder contains the point iff this is its cluster
          c = (t.multiplicity == w.rank && t.cluster_index == w.branch_order) ? 1.0 : 0.0;
        } else {
          c = bumps.chi(wi, t.lambda);
        }
        sum_gchi += gm * gm * c * c;
      }
      raw += gm * gm;
    }
    rep.max_g_defect = std::max(rep.max_g_defect, std::abs(sum_g - 1.0));
    rep.max_sigma_defect = std::max(rep.max_sigma_defect, std::abs(sum_gchi - 1.0));
    rep.min_raw_sum = std::min(rep.min_raw_sum, raw);
    if (raw < 1e-8)
      fail(ErrorCode::CoverageGap, "uncovered shell sample at node " + std::to_string(t.node));
  }
  return rep;
}

WindowCache::WindowCache(const Covering& cov, const SpectralFieldData& spec)
    : cov_(&cov), spec_(&spec) {
  entries_.resize(cov.windows.size());
  for (size_t wi = 0; wi < cov.windows.size(); ++wi) {
    const Window& w = cov.windows[wi];
    const Region& r = cov.regions[static_cast<size_t>(w.region)];
    Entry& e = entries_[wi];
    e.nodes = r.valid_nodes;
    e.proj.resize(e.nodes.size());
    e.valid.assign(e.nodes.size(), 0);
    for (size_t i = 0; i < e.nodes.size(); ++i) {
      const SpectralDecomposition& d = spec.at(e.nodes[i]);
      Matrix p;
      try {
        p = window_projector(cov, w, d);
      } catch (const Error&) {
        continue;
      }
      if (w.branch_mode) {
        if (d.clusters[static_cast<size_t>(w.branch_order)].count != w.rank) continue;
      } else if (static_cast<int>(std::lround(p.trace().real())) != w.rank) {
        continue;
      }
      e.proj[i] = std::move(p);
      e.valid[i] = 1;
    }
  }
}

const Matrix* WindowCache::projector(int window_index, std::int64_t node) const {
  const Entry& e = entries_[static_cast<size_t>(window_index)];
  const auto it = std::lower_bound(e.nodes.begin(), e.nodes.end(), node);
  if (it == e.nodes.end() || *it != node) return nullptr;
  const size_t i = static_cast<size_t>(it - e.nodes.begin());
  return e.valid[i] ? &e.proj[i] : nullptr;
}

const std::vector<std::int64_t>& WindowCache::nodes(int window_index) const {
  return entries_[static_cast<size_t>(window_index)].nodes;
}

IncidenceData classify_incidence(const WindowCache& cache, double tol) {
  const Covering& cov = cache.covering();
  IncidenceData data;
  const int nw = static_cast<int>(cov.windows.size());

  auto regions_overlap = [&](int ma, int mb) {
    const Region& a = cov.regions[static_cast<size_t>(ma)];
    const Region& b = cov.regions[static_cast<size_t>(mb)];
    if (a.kind == Region::Kind::Slab || b.kind == Region::Kind::Slab) return true;
    return cov.grid->distance(a.center, b.center) < a.radius + b.radius + 3.0 * cov.grid->min_spacing();
  };

  for (int i = 0; i < nw; ++i) {
    for (int j = i + 1; j < nw; ++j) {
      const Window& wi = cov.windows[static_cast<size_t>(i)];
      const Window& wj = cov.windows[static_cast<size_t>(j)];
      if (wi.region == wj.region) continue;
      if (!regions_overlap(wi.region, wj.region)) continue;

      bool sigma_meets = false;
      double defect_ij = 0.0;  // || Pi Pj - Pj || when rank_i >= rank_j
      double defect_ji = 0.0;
      double same_defect = 0.0;
      std::int64_t worst_node = -1;
      bool any_shared = false;
      const auto& nodes_i = cache.nodes(i);
      const auto& nodes_j = cache.nodes(j);
      const auto& small = nodes_i.size() < nodes_j.size() ? nodes_i : nodes_j;
      for (std::int64_t node : small) {
        const Matrix* pi = cache.projector(i, node);
        const Matrix* pj = cache.projector(j, node);
        if (!pi || !pj) continue;
        any_shared = true;
        const Matrix prod = (*pi) * (*pj);
        if (spectral_norm(prod) > 0.5) sigma_meets = true;
        const double dij = spectral_norm(prod - *pj);
        const double dji = spectral_norm(prod - *pi);
        const double ds = spectral_norm(*pi - *pj);
        if (std::max(dij, dji) > std::max(defect_ij, defect_ji)) worst_node = node;
        defect_ij = std::max(defect_ij, dij);
        defect_ji = std::max(defect_ji, dji);
        same_defect = std::max(same_defect, ds);
      }
      if (!any_shared || !sigma_meets) continue;

      IncidencePair pair;
      if (wi.rank == wj.rank) {
        if (same_defect > tol)
          fail(ErrorCode::AbsorptionViolation,
               "equal-rank windows disagree near node " + std::to_string(worst_node));
        pair.deeper = i;
        pair.shallower = j;
        pair.same_stratum = true;
        pair.absorption_defect = same_defect;
      } else {
        const bool i_deeper = wi.rank > wj.rank;
        const double defect = i_deeper ? defect_ij : defect_ji;
        if (defect > tol)
          fail(ErrorCode::AbsorptionViolation,
               "rank absorption fails near node " + std::to_string(worst_node) + " (defect " +
                   std::to_string(defect) + ")");
        pair.deeper = i_deeper ? i : j;
        pair.shallower = i_deeper ? j : i;
        pair.absorption_defect = defect;
      }
      data.pairs.push_back(pair);
    }
  }

  // maximal intersecting families per node and spectral cluster, deepest
  // first; windows present at a node are found through the pair overlaps
  std::set<std::vector<int>> families;
  std::vector<std::vector<int>> windows_at;  // lazy per-node window lists
  {
    std::map<std::int64_t, std::vector<int>> at;
    for (int i = 0; i < nw; ++i)
      for (std::int64_t node : cache.nodes(i))
        if (cache.projector(i, node)) at[node].push_back(i);
    for (const auto& [node, wins] : at) {
      if (wins.size() < 2) continue;
      const SpectralDecomposition& d = cache.spectral().at(node);
      for (size_t c = 0; c < d.clusters.size(); ++c) {
        std::vector<int> fam;
        for (int i : wins) {
          const Matrix* pi = cache.projector(i, node);
          if ((*pi * d.projectors[c]).trace().real() > 0.5 * d.clusters[c].count)
            fam.push_back(i);
        }
        if (fam.size() >= 2) {
          std::sort(fam.begin(), fam.end(), [&](int a, int b) {
            const int ra = cov.windows[static_cast<size_t>(a)].rank;
            const int rb = cov.windows[static_cast<size_t>(b)].rank;
            return ra != rb ? ra > rb : a < b;
          });
          families.insert(fam);
        }
      }
    }
  }
  for (const auto& f : families) data.orderings.push_back(f);
  return data;
}

ThetaFamily build_theta_family(const Covering& cov, const BumpSystem& bumps, int m) {
  ThetaFamily fam;
  const Grid& grid = *cov.grid;
  const Region& rm = cov.regions[static_cast<size_t>(m)];

  if (cov.analytic) {
    // the slab construction keeps the closed-form split: the crossing slab
    // splits into {plain, glued-with-+, glued-with--}, branch slabs stay whole
    auto model = std::make_shared<ClosedFormModel>(cov.model_id);
    if (m == 0) {
      ScalarField w0(cov.grid), wp(cov.grid), wm(cov.grid);
      for (std::int64_t node = 0; node < grid.num_nodes(); ++node) {
        const Coord k = grid.coord(node);
        const double t1 = model->th1(k[0]);
        const double t0 = model->th0(k[0]);
        w0.at(node) = t0 * t0;
        wp.at(node) = k[0] > 0.0 ? t1 * t1 : 0.0;
        wm.at(node) = k[0] < 0.0 ? t1 * t1 : 0.0;
      }
      fam.alphas = {{0}, {0, 1}, {0, 2}};
      fam.weights = {std::move(w0), std::move(wp), std::move(wm)};
    } else {
      fam.alphas = {{m}};
      fam.weights = {ScalarField(cov.grid, 1.0)};
    }
    return fam;
  }

  // overlapping neighbor regions of m
  std::vector<int> neighbors;
  for (int j = 0; j < cov.num_regions(); ++j) {
    if (j == m) continue;
    const Region& rj = cov.regions[static_cast<size_t>(j)];
    if (grid.distance(rm.center, rj.center) < rm.radius + rj.radius) neighbors.push_back(j);
  }
  const int nn = static_cast<int>(neighbors.size());
  if (nn > 16) fail(ErrorCode::CostGuard, "overlap degree too large for subset enumeration");

  // psi_alpha = prod_{j in alpha} s_j * prod_{j notin alpha} (1 - s_j);
  // summing over all subsets gives exactly 1, so the normalized squares
  // form the required partition on omega_m.
  std::vector<std::vector<int>> alphas;
  std::vector<ScalarField> raw;
  for (int bits = 0; bits < (1 << nn); ++bits) {
    std::vector<int> alpha{m};
    for (int b = 0; b < nn; ++b)
      if (bits & (1 << b)) alpha.push_back(neighbors[static_cast<size_t>(b)]);
    std::sort(alpha.begin(), alpha.end());
    ScalarField psi(cov.grid, 0.0);
    bool nonzero = false;
    for (std::int64_t node : rm.valid_nodes) {
      const Coord k = grid.coord(node);
      double v = 1.0;
      for (int b = 0; b < nn; ++b) {
        const double s = bumps.support_indicator(neighbors[static_cast<size_t>(b)], k);
        v *= (bits & (1 << b)) ? s : (1.0 - s);
        if (v == 0.0) break;
      }
      psi.at(node) = v;
      if (v != 0.0) nonzero = true;
    }
    if (!nonzero) continue;
    alphas.push_back(std::move(alpha));
    raw.push_back(std::move(psi));
  }

  // normalize the squares
  fam.alphas = alphas;
  fam.weights.assign(raw.size(), ScalarField(cov.grid, 0.0));
  for (std::int64_t node : rm.valid_nodes) {
    double sum = 0.0;
    for (const auto& p : raw) sum += p.at(node) * p.at(node);
    if (sum < 1e-16)
      fail(ErrorCode::PartitionGap, "theta partition vanishes at node " + std::to_string(node));
    double total = 0.0;
    for (size_t a = 0; a < raw.size(); ++a) {
      fam.weights[a].at(node) = raw[a].at(node) * raw[a].at(node) / sum;
      total += fam.weights[a].at(node);
    }
    fam.max_partition_defect = std::max(fam.max_partition_defect, std::abs(total - 1.0));
  }
  return fam;
}

}  // namespace fibm

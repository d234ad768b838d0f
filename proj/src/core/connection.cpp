#include "core/connection.hpp"

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>

#include "core/util.hpp"

namespace fibm {

Connection trivial_connection(GridPtr grid, int fiber_dim) {
  Connection c;
  c.grid = grid;
  c.fiber_dim = fiber_dim;
  for (int a = 0; a < grid->dim(); ++a) c.coeff[static_cast<size_t>(a)] = MatrixField(grid, fiber_dim);
  c.mask.assign(static_cast<size_t>(grid->num_nodes()), 1);
  return c;
}

Connection adiabatic_connection(const Connection& base, const std::vector<MatrixField>& family,
                                const std::vector<char>& mask, DiffScheme scheme) {
  GridPtr grid = base.grid;
  const int mu = base.fiber_dim;

  Connection out;
  out.grid = grid;
  out.fiber_dim = mu;
  out.mask.assign(static_cast<size_t>(grid->num_nodes()), 0);

  // completeness of the family where it is defined
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    if (!mask[static_cast<size_t>(node)] || !base.mask[static_cast<size_t>(node)]) continue;
    Matrix sum = Matrix::Zero(mu, mu);
    for (const auto& p : family) sum += p.at(node);
    if (spectral_norm(sum - Matrix::Identity(mu, mu)) > 1e-10)
      fail(ErrorCode::IncompleteFamily,
           "projector family does not sum to the identity at node " + std::to_string(node));
  }

  std::vector<MatrixField> dfam;
  std::vector<std::vector<char>> dmask(family.size() * static_cast<size_t>(grid->dim()));
  for (size_t n = 0; n < family.size(); ++n)
    for (int a = 0; a < grid->dim(); ++a)
      dfam.push_back(masked_derivative(family[n], mask, a, scheme,
                                       &dmask[n * static_cast<size_t>(grid->dim()) + static_cast<size_t>(a)]));

  for (int a = 0; a < grid->dim(); ++a) out.coeff[static_cast<size_t>(a)] = MatrixField(grid, mu);

  double defect = 0.0;
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    if (!mask[static_cast<size_t>(node)] || !base.mask[static_cast<size_t>(node)]) continue;
    bool ok = true;
    for (size_t n = 0; n < family.size() && ok; ++n)
      for (int a = 0; a < grid->dim() && ok; ++a)
        ok = dmask[n * static_cast<size_t>(grid->dim()) + static_cast<size_t>(a)][static_cast<size_t>(node)] != 0;
    if (!ok) continue;
    for (int a = 0; a < grid->dim(); ++a) {
      Matrix l = base.L(a, node);
      for (size_t n = 0; n < family.size(); ++n) {
        const Matrix& pi = family[n].at(node);
        const Matrix dpi = dfam[n * static_cast<size_t>(grid->dim()) + static_cast<size_t>(a)].at(node);
        l -= (dpi + base.L(a, node) * pi - pi * base.L(a, node)) * pi;
      }
      const Matrix skew = 0.5 * (l - l.adjoint().eval());
      defect = std::max(defect, spectral_norm(l - skew));
      out.coeff[static_cast<size_t>(a)].at(node) = skew;
    }
    out.mask[static_cast<size_t>(node)] = 1;
  }
  out.skew_defect = defect;
  return out;
}

ProjectorBasis projector_basis(const std::vector<MatrixField>& generators, const MatrixField& unit,
                               const std::vector<char>& mask, double tol) {
  GridPtr grid = unit.grid();
  const int mu = unit.fiber_dim();
  const int ng = static_cast<int>(generators.size());
  if (ng > 16) fail(ErrorCode::CostGuard, "too many generators for subset enumeration");

  // commutation and domination by the unit
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    if (!mask[static_cast<size_t>(node)]) continue;
    for (int i = 0; i < ng; ++i) {
      const Matrix& a = generators[static_cast<size_t>(i)].at(node);
      for (int j = i + 1; j < ng; ++j) {
        const Matrix& b = generators[static_cast<size_t>(j)].at(node);
        if (spectral_norm(a * b - b * a) > tol)
          fail(ErrorCode::NonCommuting, "generators " + std::to_string(i) + "," +
                                            std::to_string(j) + " fail to commute at node " +
                                            std::to_string(node));
      }
      if (spectral_norm(unit.at(node) * a - a) > tol)
        fail(ErrorCode::NonCommuting,
             "generator " + std::to_string(i) + " is not dominated by the unit");
    }
  }

  ProjectorBasis basis;
  basis.mask = mask;
  std::vector<int> atom_bits;
  for (int bits = 0; bits < (1 << ng); ++bits) {
    MatrixField atom(grid, mu);
    double maxnorm = 0.0;
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
      if (!mask[static_cast<size_t>(node)]) continue;
      Matrix p = unit.at(node);
      for (int i = 0; i < ng; ++i) {
        const Matrix& gi = generators[static_cast<size_t>(i)].at(node);
        p = (bits & (1 << i)) ? (p * gi).eval() : (p * (unit.at(node) - gi)).eval();
      }
      atom.at(node) = p;
      maxnorm = std::max(maxnorm, spectral_norm(p));
    }
    if (maxnorm < 0.5) continue;  // projector fields are 0 or norm 1
    basis.atoms.push_back(std::move(atom));
    atom_bits.push_back(bits);
  }

  basis.coefficients.assign(static_cast<size_t>(ng), {});
  for (int i = 0; i < ng; ++i)
    for (size_t a = 0; a < basis.atoms.size(); ++a)
      basis.coefficients[static_cast<size_t>(i)].push_back((atom_bits[a] & (1 << i)) ? 1 : 0);
  return basis;
}

Connection alpha_connection(const Connection& base, const ProjectorBasis& basis, DiffScheme scheme) {
  GridPtr grid = base.grid;
  const int mu = base.fiber_dim;
  // complete the atom family by the complement of its sum where nonzero
  std::vector<MatrixField> family = basis.atoms;
  MatrixField comp(grid, mu);
  double comp_norm = 0.0;
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    if (!basis.mask[static_cast<size_t>(node)]) continue;
    Matrix sum = Matrix::Zero(mu, mu);
    for (const auto& a : basis.atoms) sum += a.at(node);
    comp.at(node) = Matrix::Identity(mu, mu) - sum;
    comp_norm = std::max(comp_norm, spectral_norm(comp.at(node)));
  }
  if (comp_norm > 0.5) family.push_back(std::move(comp));
  return adiabatic_connection(base, family, basis.mask, scheme);
}

namespace {

// atoms of all windows of the given regions, as masked global fields
ProjectorBasis atoms_of_regions(const Covering& cov, const SpectralFieldData& spec,
                                const std::vector<int>& regions) {
  GridPtr grid = cov.grid;
  const int mu = spec.at(0).fiber_dim();
  std::vector<MatrixField> gens;
  std::vector<char> mask(static_cast<size_t>(grid->num_nodes()), 1);
  for (int m : regions) {
    for (int wi : cov.region_windows[static_cast<size_t>(m)]) {
      MaskedField f = window_projector_field(cov, wi, spec);
      gens.push_back(std::move(f.field));
      for (size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && f.mask[i];
    }
  }
  MatrixField unit(grid, mu);
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node)
    unit.at(node) = Matrix::Identity(mu, mu);
  return projector_basis(gens, unit, mask);
}

}  // namespace

Connection region_connection(const Covering& cov, const SpectralFieldData& spec, int m,
                             DiffScheme scheme) {
  Connection base = trivial_connection(cov.grid, spec.at(0).fiber_dim());
  const ProjectorBasis basis = atoms_of_regions(cov, spec, {m});
  return alpha_connection(base, basis, scheme);
}

Connection glue_modified_connection(const Covering& cov, const BumpSystem& bumps,
                                    const SpectralFieldData& spec, int m, DiffScheme scheme) {
  GridPtr grid = cov.grid;
  const int mu = spec.at(0).fiber_dim();
  const ThetaFamily theta = build_theta_family(cov, bumps, m);
  if (theta.max_partition_defect > 1e-8)
    fail(ErrorCode::PartitionGap, "theta partition defect " + std::to_string(theta.max_partition_defect));

  Connection base = trivial_connection(grid, mu);
  std::vector<Connection> parts;
  for (const auto& alpha : theta.alphas) {
    const ProjectorBasis basis = atoms_of_regions(cov, spec, alpha);
    parts.push_back(alpha_connection(base, basis, scheme));
  }

  Connection out;
  out.grid = grid;
  out.fiber_dim = mu;
  for (int a = 0; a < grid->dim(); ++a) out.coeff[static_cast<size_t>(a)] = MatrixField(grid, mu);
  out.mask.assign(static_cast<size_t>(grid->num_nodes()), 0);

  const Region& rm = cov.regions[static_cast<size_t>(m)];
  for (std::int64_t node : rm.valid_nodes) {
    bool ok = true;
    for (size_t a = 0; a < parts.size() && ok; ++a)
      if (theta.weights[a].at(node) > 1e-14 && !parts[a].mask[static_cast<size_t>(node)]) ok = false;
    if (!ok) continue;
    for (int ax = 0; ax < grid->dim(); ++ax) {
      Matrix l = Matrix::Zero(mu, mu);
      for (size_t a = 0; a < parts.size(); ++a) {
        const double w = theta.weights[a].at(node);
        if (w > 1e-14) l += w * parts[a].L(ax, node);
      }
      out.coeff[static_cast<size_t>(ax)].at(node) = l;
    }
    out.mask[static_cast<size_t>(node)] = 1;
    out.skew_defect = std::max(out.skew_defect,
                               parts.empty() ? 0.0 : parts.front().skew_defect);
  }
  for (const auto& p : parts) out.skew_defect = std::max(out.skew_defect, p.skew_defect);
  return out;
}

namespace {

// window-membership signatures of the spectral clusters at one node;
// each distinct signature carries the sum of its cluster projectors
using AtomMap = std::map<std::uint32_t, Matrix>;

std::optional<AtomMap> atoms_at(const WindowCache& cache, const std::vector<int>& windows,
                                std::int64_t node) {
  const SpectralDecomposition& d = cache.spectral().at(node);
  std::vector<const Matrix*> wp(windows.size());
  for (size_t i = 0; i < windows.size(); ++i) {
    wp[i] = cache.projector(windows[i], node);
    if (!wp[i]) return std::nullopt;
  }
  AtomMap atoms;
  for (size_t c = 0; c < d.clusters.size(); ++c) {
    std::uint32_t sig = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
      const double overlap = ((*wp[i]) * d.projectors[c]).trace().real();
      if (overlap > 0.5 * d.clusters[c].count) sig |= (1u << i);
    }
    auto [it, inserted] = atoms.try_emplace(sig, d.projectors[c]);
    if (!inserted) it->second += d.projectors[c];
  }
  return atoms;
}

}  // namespace

RegionConnectionEvaluator::RegionConnectionEvaluator(const WindowCache& cache,
                                                     const BumpSystem& bumps, int region,
                                                     bool modified, DiffScheme scheme) {
  const Covering& cov = cache.covering();
  grid_ = cov.grid;
  region_ = region;
  mu_ = cache.spectral().at(0).fiber_dim();
  dim_ = grid_->dim();
  nodes_ = cov.regions[static_cast<size_t>(region)].valid_nodes;
  valid_.assign(nodes_.size(), 0);
  coeff_.assign(nodes_.size() * static_cast<size_t>(dim_), Matrix::Zero(mu_, mu_));

  // alpha sets with their weight evaluators
  std::vector<std::vector<int>> alphas;           // region index sets (contain region_)
  std::vector<std::function<double(std::int64_t)>> weight;

  const ThetaFamily theta = modified ? build_theta_family(cov, bumps, region) : ThetaFamily{};
  if (modified) {
    theta_defect_ = theta.max_partition_defect;
    for (size_t a = 0; a < theta.alphas.size(); ++a) {
      alphas.push_back(theta.alphas[a]);
      const ScalarField* w = &theta.weights[a];
      weight.emplace_back([w](std::int64_t node) { return w->at(node); });
    }
  } else {
    alphas.push_back({region});
    weight.emplace_back([](std::int64_t) { return 1.0; });
  }

  // window lists per alpha
  std::vector<std::vector<int>> alpha_windows(alphas.size());
  for (size_t a = 0; a < alphas.size(); ++a)
    for (int m : alphas[a])
      for (int wi : cov.region_windows[static_cast<size_t>(m)])
        alpha_windows[a].push_back(wi);

  for (size_t i = 0; i < nodes_.size(); ++i) {
    const std::int64_t node = nodes_[i];
    bool ok = true;
    std::vector<Matrix> l(static_cast<size_t>(dim_), Matrix::Zero(mu_, mu_));
    for (size_t a = 0; a < alphas.size() && ok; ++a) {
      const double w = weight[a](node);
      if (w <= 1e-14) continue;
      const auto atoms = atoms_at(cache, alpha_windows[a], node);
      if (!atoms) {
        ok = false;
        break;
      }
      for (int ax = 0; ax < dim_ && ok; ++ax) {
        Matrix la = Matrix::Zero(mu_, mu_);
        for (const auto& [sig, atom] : *atoms) {
          // derivative of this atom's field along the axis
          auto getter = [&](std::int64_t nb) -> std::optional<Matrix> {
            const auto nb_atoms = atoms_at(cache, alpha_windows[a], nb);
            if (!nb_atoms) return std::nullopt;
            const auto it = nb_atoms->find(sig);
            if (it == nb_atoms->end()) return std::nullopt;
            return it->second;
          };
          const auto d = local_derivative(*grid_, node, ax, scheme, getter);
          if (!d) {
            ok = false;
            break;
          }
          la -= (*d) * atom;
        }
        if (ok) l[static_cast<size_t>(ax)] += w * la;
      }
    }
    if (!ok) continue;
    for (int ax = 0; ax < dim_; ++ax) {
      const Matrix skew = 0.5 * (l[static_cast<size_t>(ax)] - l[static_cast<size_t>(ax)].adjoint().eval());
      skew_defect_ = std::max(skew_defect_, spectral_norm(l[static_cast<size_t>(ax)] - skew));
      coeff_[i * static_cast<size_t>(dim_) + static_cast<size_t>(ax)] = skew;
    }
    valid_[i] = 1;
  }
}

std::optional<size_t> RegionConnectionEvaluator::index_of(std::int64_t node) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end() || *it != node) return std::nullopt;
  return static_cast<size_t>(it - nodes_.begin());
}

bool RegionConnectionEvaluator::valid(std::int64_t node) const {
  const auto i = index_of(node);
  return i && valid_[*i];
}

const Matrix& RegionConnectionEvaluator::coeff(int axis, std::int64_t node) const {
  const auto i = index_of(node);
  if (!i || !valid_[*i])
    fail(ErrorCode::Internal, "connection queried outside its region at node " + std::to_string(node));
  return coeff_[*i * static_cast<size_t>(dim_) + static_cast<size_t>(axis)];
}

double RegionConnectionEvaluator::annihilation_defect(
    const std::vector<std::int64_t>& where, const std::function<const Matrix*(std::int64_t)>& p,
    DiffScheme scheme) const {
  double defect = 0.0;
  for (std::int64_t node : where) {
    const auto i = index_of(node);
    if (!i || !valid_[*i]) continue;
    const Matrix* pq = p(node);
    if (!pq) continue;
    const Matrix pv_copy = *pq;  // the getter may reuse the callback's storage
    const Matrix* pv = &pv_copy;
    for (int ax = 0; ax < dim_; ++ax) {
      auto getter = [&](std::int64_t nb) -> std::optional<Matrix> {
        const Matrix* v = p(nb);
        if (!v) return std::nullopt;
        return *v;
      };
      const auto d = local_derivative(*grid_, node, ax, scheme, getter);
      if (!d) continue;
      const Matrix& l = coeff_[*i * static_cast<size_t>(dim_) + static_cast<size_t>(ax)];
      defect = std::max(defect, spectral_norm(*d + l * (*pv) - (*pv) * l));
    }
  }
  return defect;
}

MatrixField curvature(const Connection& conn, int i, int j, DiffScheme scheme,
                      std::vector<char>* out_mask) {
  if (i == j) fail(ErrorCode::InvalidArgument, "curvature needs two distinct axes");
  if (i < 0 || j < 0 || i >= conn.grid->dim() || j >= conn.grid->dim())
    fail(ErrorCode::InvalidArgument, "curvature axis out of range");
  std::vector<char> mi, mj;
  const MatrixField dLj = masked_derivative(conn.coeff[static_cast<size_t>(j)], conn.mask, i, scheme, &mi);
  const MatrixField dLi = masked_derivative(conn.coeff[static_cast<size_t>(i)], conn.mask, j, scheme, &mj);
  MatrixField r(conn.grid, conn.fiber_dim);
  if (out_mask) out_mask->assign(static_cast<size_t>(conn.grid->num_nodes()), 0);
  for (std::int64_t node = 0; node < conn.grid->num_nodes(); ++node) {
    if (!mi[static_cast<size_t>(node)] || !mj[static_cast<size_t>(node)]) continue;
    const Matrix& li = conn.L(i, node);
    const Matrix& lj = conn.L(j, node);
    r.at(node) = dLj.at(node) - dLi.at(node) + li * lj - lj * li;
    if (out_mask) (*out_mask)[static_cast<size_t>(node)] = 1;
  }
  return r;
}

double annihilation_defect(const Connection& conn, const MatrixField& p,
                           const std::vector<char>& where, DiffScheme scheme) {
  double defect = 0.0;
  for (int a = 0; a < conn.grid->dim(); ++a) {
    std::vector<char> dm;
    const MatrixField dp = masked_derivative(p, conn.mask, a, scheme, &dm);
    for (std::int64_t node = 0; node < conn.grid->num_nodes(); ++node) {
      if (!where[static_cast<size_t>(node)] || !dm[static_cast<size_t>(node)]) continue;
      const Matrix& l = conn.L(a, node);
      const Matrix v = dp.at(node) + l * p.at(node) - p.at(node) * l;
      defect = std::max(defect, spectral_norm(v));
    }
  }
  return defect;
}

}  // namespace fibm

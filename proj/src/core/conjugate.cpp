#include "core/conjugate.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "core/util.hpp"

namespace fibm {

VectorFieldData escape_field(const MatrixField& projector, const std::vector<char>& mask,
                             const std::vector<MatrixField>& dh, int rank, double grad_floor,
                             DiffScheme scheme, const std::vector<char>* positivity_where) {
  GridPtr grid = projector.grid();
  const int dim = grid->dim();
  const int mu = projector.fiber_dim();

  VectorFieldData x;
  x.grid = grid;
  for (int a = 0; a < dim; ++a) x.comp[static_cast<size_t>(a)] = ScalarField(grid);
  x.divergence = ScalarField(grid);
  x.mask.assign(static_cast<size_t>(grid->num_nodes()), 0);
  x.min_compressed_derivative = 1e30;

  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    if (!mask[static_cast<size_t>(node)]) continue;
    const Matrix& pi = projector.at(node);
    Eigen::VectorXd grad(dim);
    for (int a = 0; a < dim; ++a)
      grad(a) = (pi * dh[static_cast<size_t>(a)].at(node)).trace().real() / rank;
    const double g2 = grad.squaredNorm();
    if (g2 < grad_floor * grad_floor)
      fail(ErrorCode::FlatDirection,
           "escape gradient below floor at node " + std::to_string(node) +
               " (|grad| = " + std::to_string(std::sqrt(g2)) + ")");
    for (int a = 0; a < dim; ++a) x.comp[static_cast<size_t>(a)].at(node) = grad(a) / g2;
    x.mask[static_cast<size_t>(node)] = 1;

    const bool check_here =
        positivity_where == nullptr || (*positivity_where)[static_cast<size_t>(node)];
    if (check_here) {
      Matrix xdh = Matrix::Zero(mu, mu);
      for (int a = 0; a < dim; ++a) xdh += (grad(a) / g2) * dh[static_cast<size_t>(a)].at(node);
      Eigen::SelfAdjointEigenSolver<Matrix> es(pi);
      Matrix basis(mu, rank);
      int col = 0;
      for (int i = 0; i < mu; ++i)
        if (es.eigenvalues()(i) > 0.5 && col < rank) basis.col(col++) = es.eigenvectors().col(i);
      if (col == rank) {
        const double mineig = min_eigenvalue_hermitian((basis.adjoint() * xdh * basis).eval());
        x.min_compressed_derivative = std::min(x.min_compressed_derivative, mineig);
      }
    }
  }

  // divergence of the components over the masked set
  ScalarField div(grid);
  std::vector<char> div_mask = x.mask;
  for (int a = 0; a < dim; ++a) {
    // scalar masked derivative through a 1x1 matrix field
    MatrixField tmp(grid, 1);
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node)
      tmp.at(node)(0, 0) = x.comp[static_cast<size_t>(a)].at(node);
    std::vector<char> dm;
    const MatrixField d = masked_derivative(tmp, x.mask, a, scheme, &dm);
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
      if (!dm[static_cast<size_t>(node)]) {
        div_mask[static_cast<size_t>(node)] = 0;
        continue;
      }
      div.at(node) += d.at(node)(0, 0).real();
    }
  }
  x.divergence = div;
  for (size_t i = 0; i < x.mask.size(); ++i) x.mask[i] = x.mask[i] && div_mask[i];
  return x;
}

FirstOrderOperator FirstOrderOperator::zero(GridPtr grid, int fiber_dim) {
  FirstOrderOperator d;
  d.grid = grid;
  d.fiber_dim = fiber_dim;
  for (int a = 0; a < grid->dim(); ++a) d.principal[static_cast<size_t>(a)] = MatrixField(grid, fiber_dim);
  d.zeroth = MatrixField(grid, fiber_dim);
  return d;
}

double FirstOrderOperator::max_principal_norm() const {
  double m = 0.0;
  for (int a = 0; a < grid->dim(); ++a) m = std::max(m, principal[static_cast<size_t>(a)].max_norm());
  return m;
}

double FirstOrderOperator::max_zeroth_norm() const { return zeroth.max_norm(); }

std::vector<char> FirstOrderOperator::support(double tol) const {
  std::vector<char> s(static_cast<size_t>(grid->num_nodes()), 0);
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    double m = spectral_norm(zeroth.at(node));
    for (int a = 0; a < grid->dim(); ++a)
      m = std::max(m, spectral_norm(principal[static_cast<size_t>(a)].at(node)));
    if (m > tol) s[static_cast<size_t>(node)] = 1;
  }
  return s;
}

std::optional<size_t> WindowEscape::index_of(std::int64_t node) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
  if (it == nodes.end() || *it != node) return std::nullopt;
  return static_cast<size_t>(it - nodes.begin());
}

WindowEscape window_escape(const WindowCache& cache, int window_index,
                           const std::vector<MatrixField>& dh, const BumpSystem& bumps,
                           double grad_floor, DiffScheme scheme) {
  const Covering& cov = cache.covering();
  const Grid& grid = *cov.grid;
  const Window& w = cov.windows[static_cast<size_t>(window_index)];
  const int dim = grid.dim();
  const int mu = cache.spectral().at(0).fiber_dim();

  WindowEscape esc;
  esc.nodes = cache.nodes(window_index);
  esc.comp.assign(esc.nodes.size(), {});
  esc.divergence.assign(esc.nodes.size(), 0.0);
  esc.valid.assign(esc.nodes.size(), 0);

  // components from the Hellmann-Feynman trace formula
  std::vector<char> has_x(esc.nodes.size(), 0);
  for (size_t i = 0; i < esc.nodes.size(); ++i) {
    const std::int64_t node = esc.nodes[i];
    const Matrix* pi = cache.projector(window_index, node);
    if (!pi) continue;
    Eigen::VectorXd grad(dim);
    for (int a = 0; a < dim; ++a)
      grad(a) = ((*pi) * dh[static_cast<size_t>(a)].at(node)).trace().real() / w.rank;
    const double g2 = grad.squaredNorm();
    if (g2 < grad_floor * grad_floor)
      fail(ErrorCode::FlatDirection,
           "escape gradient below floor at node " + std::to_string(node) +
               " (|grad| = " + std::to_string(std::sqrt(g2)) + ")");
    for (int a = 0; a < dim; ++a) esc.comp[i][static_cast<size_t>(a)] = grad(a) / g2;
    has_x[i] = 1;

    // compressed positivity inside the bump support
    if (bumps.g(w.region, grid.coord(node)) != 0.0) {
      Matrix xdh = Matrix::Zero(mu, mu);
      for (int a = 0; a < dim; ++a)
        xdh += (grad(a) / g2) * dh[static_cast<size_t>(a)].at(node);
      Eigen::SelfAdjointEigenSolver<Matrix> es(*pi);
      Matrix basis(mu, w.rank);
      int col = 0;
      for (int c = 0; c < mu; ++c)
        if (es.eigenvalues()(c) > 0.5 && col < w.rank) basis.col(col++) = es.eigenvectors().col(c);
      if (col == w.rank)
        esc.min_compressed_derivative =
            std::min(esc.min_compressed_derivative,
                     min_eigenvalue_hermitian((basis.adjoint() * xdh * basis).eval()));
    }
  }

  // discrete divergence over the node list
  for (size_t i = 0; i < esc.nodes.size(); ++i) {
    if (!has_x[i]) continue;
    double div = 0.0;
    bool ok = true;
    for (int a = 0; a < dim && ok; ++a) {
      auto getter = [&](std::int64_t nb) -> std::optional<Matrix> {
        const auto j = esc.index_of(nb);
        if (!j || !has_x[*j]) return std::nullopt;
        Matrix m1x1(1, 1);
        m1x1(0, 0) = esc.comp[*j][static_cast<size_t>(a)];
        return m1x1;
      };
      const auto d = local_derivative(grid, esc.nodes[i], a, scheme, getter);
      if (!d) {
        ok = false;
        break;
      }
      div += (*d)(0, 0).real();
    }
    if (!ok) continue;
    esc.divergence[i] = div;
    esc.valid[i] = 1;
  }
  return esc;
}

FirstOrderOperator assemble_conjugate(const AssemblyInputs& in, DiffScheme scheme) {
  const Covering& cov = in.cache->covering();
  GridPtr grid = cov.grid;
  const int mu = in.cache->spectral().at(0).fiber_dim();
  const int dim = grid->dim();

  FirstOrderOperator out = FirstOrderOperator::zero(grid, mu);

  for (size_t wi = 0; wi < cov.windows.size(); ++wi) {
    const Window& w = cov.windows[wi];
    const int m = w.region;
    const RegionConnectionEvaluator& conn = (*in.connections)[static_cast<size_t>(m)];
    const WindowEscape& esc = (*in.escapes)[wi];

    for (std::int64_t node : in.cache->nodes(static_cast<int>(wi))) {
      const Coord k = grid->coord(node);
      const double g = in.bumps->g(m, k);
      if (g == 0.0) continue;
      const Matrix* pi = in.cache->projector(static_cast<int>(wi), node);
      const auto ei = esc.index_of(node);
      if (!pi || !ei || !esc.valid[*ei] || !conn.valid(node))
        fail(ErrorCode::Internal,
             "bump support leaks outside the validated region at node " + std::to_string(node));

      const auto dg = in.bumps->grad_g(m, k);
      const double g2 = g * g;

      Matrix b = Matrix::Zero(mu, mu);
      for (int a = 0; a < dim; ++a) {
        const double xa = esc.comp[*ei][static_cast<size_t>(a)];
        // principal: -g^2 X_a pi
        out.principal[static_cast<size_t>(a)].at(node) -= g2 * xa * pi[0];
        // zeroth pieces: pi dpi, pi L pi, bump gradient
        auto getter = [&](std::int64_t nb) -> std::optional<Matrix> {
          const Matrix* v = in.cache->projector(static_cast<int>(wi), nb);
          if (!v) return std::nullopt;
          return *v;
        };
        const auto dpi = local_derivative(*grid, node, a, scheme, getter);
        if (!dpi)
          fail(ErrorCode::Internal, "projector derivative missing inside a bump support");
        b += g2 * xa * ((*pi) * (*dpi));
        b += g2 * xa * ((*pi) * conn.coeff(a, node) * (*pi));
        b += g * dg[static_cast<size_t>(a)] * xa * (*pi);
      }
      b += 0.5 * g2 * esc.divergence[*ei] * (*pi);
      out.zeroth.at(node) -= b;
    }
  }
  return out;
}

FirstOrderOperator commutator_with_multiplication(const MatrixField& h,
                                                  const std::vector<MatrixField>& dh,
                                                  const FirstOrderOperator& d) {
  GridPtr grid = d.grid;
  FirstOrderOperator out = FirstOrderOperator::zero(grid, d.fiber_dim);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    const Matrix& hv = h.at(node);
    Matrix b = hv * d.zeroth.at(node) - d.zeroth.at(node) * hv;
    for (int a = 0; a < grid->dim(); ++a) {
      const Matrix& aa = d.principal[static_cast<size_t>(a)].at(node);
      out.principal[static_cast<size_t>(a)].at(node) = hv * aa - aa * hv;
      b -= aa * dh[static_cast<size_t>(a)].at(node);
    }
    out.zeroth.at(node) = b;
  });
  return out;
}

BracketResult bracket(const FirstOrderOperator& d1, const FirstOrderOperator& d2,
                      DiffScheme scheme) {
  GridPtr grid = d1.grid;
  const int dim = grid->dim();
  BracketResult res;
  res.op = FirstOrderOperator::zero(grid, d1.fiber_dim);

  std::vector<MatrixField> dA1v(static_cast<size_t>(dim * dim)), dA2v(static_cast<size_t>(dim * dim));
  std::vector<MatrixField> dB1(static_cast<size_t>(dim)), dB2(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      dA1v[static_cast<size_t>(i * dim + j)] =
          discrete_derivative(d1.principal[static_cast<size_t>(j)], i, scheme);
      dA2v[static_cast<size_t>(i * dim + j)] =
          discrete_derivative(d2.principal[static_cast<size_t>(j)], i, scheme);
    }
    dB1[static_cast<size_t>(i)] = discrete_derivative(d1.zeroth, i, scheme);
    dB2[static_cast<size_t>(i)] = discrete_derivative(d2.zeroth, i, scheme);
  }

  std::vector<double> residuals(static_cast<size_t>(grid->num_nodes()), 0.0);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    const Matrix& b1 = d1.zeroth.at(node);
    const Matrix& b2 = d2.zeroth.at(node);
    // second-order residual: symmetrized commutator of principal parts
    double r = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        const Matrix& a1i = d1.principal[static_cast<size_t>(i)].at(node);
        const Matrix& a1j = d1.principal[static_cast<size_t>(j)].at(node);
        const Matrix& a2i = d2.principal[static_cast<size_t>(i)].at(node);
        const Matrix& a2j = d2.principal[static_cast<size_t>(j)].at(node);
        const Matrix sym = 0.5 * (a1i * a2j - a2j * a1i + a1j * a2i - a2i * a1j);
        r = std::max(r, spectral_norm(sym));
      }
    residuals[static_cast<size_t>(node)] = r;

    for (int j = 0; j < dim; ++j) {
      Matrix pj = Matrix::Zero(d1.fiber_dim, d1.fiber_dim);
      for (int i = 0; i < dim; ++i) {
        pj += d1.principal[static_cast<size_t>(i)].at(node) * dA2v[static_cast<size_t>(i * dim + j)].at(node);
        pj -= d2.principal[static_cast<size_t>(i)].at(node) * dA1v[static_cast<size_t>(i * dim + j)].at(node);
      }
      const Matrix& a1j = d1.principal[static_cast<size_t>(j)].at(node);
      const Matrix& a2j = d2.principal[static_cast<size_t>(j)].at(node);
      pj += a1j * b2 - b2 * a1j;
      pj -= a2j * b1 - b1 * a2j;
      res.op.principal[static_cast<size_t>(j)].at(node) = pj;
    }
    Matrix z = b1 * b2 - b2 * b1;
    for (int i = 0; i < dim; ++i) {
      z += d1.principal[static_cast<size_t>(i)].at(node) * dB2[static_cast<size_t>(i)].at(node);
      z -= d2.principal[static_cast<size_t>(i)].at(node) * dB1[static_cast<size_t>(i)].at(node);
    }
    res.op.zeroth.at(node) = z;
  });

  for (std::int64_t node = 0; node < grid->num_nodes(); ++node)
    if (residuals[static_cast<size_t>(node)] > res.second_order_residual) {
      res.second_order_residual = residuals[static_cast<size_t>(node)];
      res.worst_node = node;
    }
  return res;
}

FirstOrderOperator bracket_checked(const FirstOrderOperator& d1, const FirstOrderOperator& d2,
                                   DiffScheme scheme, double comm_tol) {
  BracketResult r = bracket(d1, d2, scheme);
  if (r.second_order_residual > comm_tol)
    fail(ErrorCode::NonCommutingPrincipal,
         "principal parts fail to commute (residual " + std::to_string(r.second_order_residual) +
             " at node " + std::to_string(r.worst_node) + ")");
  return std::move(r.op);
}

std::vector<CommutatorReport> iterated_ad(const FirstOrderOperator& d, const MatrixField& h,
                                          const std::vector<MatrixField>& dh, int j_max,
                                          DiffScheme scheme, double comm_tol) {
  if (j_max > 6) fail(ErrorCode::CostGuard, "iterated commutator order capped at 6");
  std::vector<CommutatorReport> reports;
  FirstOrderOperator current = commutator_with_multiplication(h, dh, d);
  for (int j = 1; j <= j_max; ++j) {
    CommutatorReport rep;
    rep.order = j;
    rep.principal_residual = current.max_principal_norm();
    rep.zeroth_norm = current.max_zeroth_norm();
    rep.op = current;
    if (j == j_max) {
      reports.push_back(std::move(rep));
      break;
    }
    BracketResult br = bracket(d, current, scheme);
    rep.second_order_residual = br.second_order_residual;
    // a genuinely non-commuting principal pair means the next order is no
    // longer a first-order operator; report and stop instead of guessing
    rep.left_first_order_class = br.second_order_residual > comm_tol;
    const bool stop = rep.left_first_order_class;
    reports.push_back(std::move(rep));
    if (stop) break;
    current = std::move(br.op);
  }
  return reports;
}

FirstOrderOperator formal_adjoint(const FirstOrderOperator& d, DiffScheme scheme) {
  GridPtr grid = d.grid;
  FirstOrderOperator out = FirstOrderOperator::zero(grid, d.fiber_dim);
  std::vector<MatrixField> dAdj(static_cast<size_t>(grid->dim()));
  for (int a = 0; a < grid->dim(); ++a) {
    MatrixField adjA(grid, d.fiber_dim);
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node)
      adjA.at(node) = d.principal[static_cast<size_t>(a)].at(node).adjoint();
    out.principal[static_cast<size_t>(a)] = adjA;
    out.principal[static_cast<size_t>(a)] *= -1.0;
    dAdj[static_cast<size_t>(a)] = discrete_derivative(adjA, a, scheme);
  }
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    Matrix b = d.zeroth.at(node).adjoint();
    for (int a = 0; a < grid->dim(); ++a) b -= dAdj[static_cast<size_t>(a)].at(node);
    out.zeroth.at(node) = b;
  }
  return out;
}

double antisymmetry_defect(const FirstOrderOperator& d, DiffScheme scheme) {
  const FirstOrderOperator adj = formal_adjoint(d, scheme);
  double defect = 0.0;
  for (std::int64_t node = 0; node < d.grid->num_nodes(); ++node) {
    for (int a = 0; a < d.grid->dim(); ++a)
      defect = std::max(defect, spectral_norm(adj.principal[static_cast<size_t>(a)].at(node) +
                                              d.principal[static_cast<size_t>(a)].at(node)));
    defect = std::max(defect, spectral_norm(adj.zeroth.at(node) + d.zeroth.at(node)));
  }
  return defect;
}

}  // namespace fibm

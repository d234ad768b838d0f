#include "core/fields.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "core/util.hpp"

namespace fibm {

MatrixField::MatrixField(GridPtr grid, int fiber_dim)
    : grid_(std::move(grid)), mu_(fiber_dim) {
  values_.assign(static_cast<size_t>(grid_->num_nodes()), Matrix::Zero(mu_, mu_));
}

double MatrixField::max_norm() const {
  const std::int64_t n = size();
  std::vector<double> norms(static_cast<size_t>(n), 0.0);
  for_each_index(n, [&](std::int64_t i) { norms[static_cast<size_t>(i)] = spectral_norm(values_[static_cast<size_t>(i)]); });
  double m = 0.0;
  for (double v : norms) m = std::max(m, v);
  return m;
}

double MatrixField::max_hermitian_defect() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, spectral_norm(v - v.adjoint().eval()));
  return m;
}

MatrixField& MatrixField::operator+=(const MatrixField& o) {
  for (size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

MatrixField& MatrixField::operator-=(const MatrixField& o) {
  for (size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

MatrixField& MatrixField::operator*=(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

ScalarField::ScalarField(GridPtr grid, double value) : grid_(std::move(grid)) {
  values_.assign(static_cast<size_t>(grid_->num_nodes()), value);
}

MatrixField sample_family(const MatrixPolynomialFamily& fam, GridPtr grid) {
  if (fam.dim() != grid->dim())
    fail(ErrorCode::DimensionMismatch, "family dimension " + std::to_string(fam.dim()) +
                                           " does not match grid dimension " +
                                           std::to_string(grid->dim()));
  const int mu = fam.fiber_dim();
  MatrixField out(grid, mu);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    std::vector<double> vals;
    fam.eval(grid->coord(node), vals);
    Matrix& m = out.at(node);
    for (int i = 0; i < mu; ++i)
      for (int j = 0; j < mu; ++j) m(i, j) = vals[static_cast<size_t>(i) * mu + j];
  });
  return out;
}

MatrixField sample_matrix_function(GridPtr grid, int fiber_dim,
                                   const std::function<Matrix(const Coord&)>& f) {
  MatrixField out(grid, fiber_dim);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) { out.at(node) = f(grid->coord(node)); });
  return out;
}

ScalarField sample_scalar_function(GridPtr grid, const std::function<double(const Coord&)>& f) {
  ScalarField out(grid);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) { out.at(node) = f(grid->coord(node)); });
  return out;
}

namespace {

// Stencil offsets/weights (divided by h) for one node along one axis.
// i is the axis index of the node, n the axis length.
struct Stencil {
  int count = 0;
  std::array<int, 5> off{};
  std::array<double, 5> w{};
};

Stencil stencil_for(std::int64_t i, int n, bool periodic, DiffScheme scheme) {
  Stencil s;
  auto set = [&s](std::initializer_list<std::pair<int, double>> taps) {
    s.count = 0;
    for (auto [o, w] : taps) {
      s.off[s.count] = o;
      s.w[s.count] = w;
      ++s.count;
    }
  };
  if (scheme == DiffScheme::Central4) {
    if (periodic || (i >= 2 && i <= n - 3)) {
      set({{-2, 1.0 / 12}, {-1, -8.0 / 12}, {1, 8.0 / 12}, {2, -1.0 / 12}});
      return s;
    }
    // fall through to the second-order edge handling below
  }
  if (periodic || (i >= 1 && i <= n - 2)) {
    set({{-1, -0.5}, {1, 0.5}});
  } else if (i == 0) {
    set({{0, -1.5}, {1, 2.0}, {2, -0.5}});
  } else {
    set({{-2, 0.5}, {-1, -2.0}, {0, 1.5}});
  }
  return s;
}

}  // namespace

MatrixField discrete_derivative(const MatrixField& f, int axis, DiffScheme scheme) {
  GridPtr grid = f.grid();
  if (axis < 0 || axis >= grid->dim()) fail(ErrorCode::InvalidArgument, "derivative axis out of range");
  const bool periodic = grid->spec().kind == DomainSpec::Kind::Torus;
  const int n = grid->nodes_per_axis();
  const double inv_h = 1.0 / grid->spacing(axis);
  MatrixField out(grid, f.fiber_dim());
  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    const MultiIndex mi = grid->unravel(node);
    const Stencil s = stencil_for(mi[axis], n, periodic, scheme);
    Matrix acc = Matrix::Zero(f.fiber_dim(), f.fiber_dim());
    for (int t = 0; t < s.count; ++t) {
      MultiIndex mj = mi;
      std::int64_t j = mj[axis] + s.off[t];
      if (periodic) j = ((j % n) + n) % n;
      mj[axis] = j;
      acc += s.w[t] * f.at(grid->ravel(mj));
    }
    out.at(node) = acc * inv_h;
  });
  return out;
}

ScalarField discrete_derivative(const ScalarField& f, int axis, DiffScheme scheme) {
  GridPtr grid = f.grid();
  const bool periodic = grid->spec().kind == DomainSpec::Kind::Torus;
  const int n = grid->nodes_per_axis();
  const double inv_h = 1.0 / grid->spacing(axis);
  ScalarField out(grid);
  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    const MultiIndex mi = grid->unravel(node);
    const Stencil s = stencil_for(mi[axis], n, periodic, scheme);
    double acc = 0.0;
    for (int t = 0; t < s.count; ++t) {
      MultiIndex mj = mi;
      std::int64_t j = mj[axis] + s.off[t];
      if (periodic) j = ((j % n) + n) % n;
      mj[axis] = j;
      acc += s.w[t] * f.at(grid->ravel(mj));
    }
    out.at(node) = acc * inv_h;
  });
  return out;
}

MatrixField masked_derivative(const MatrixField& f, const std::vector<char>& mask, int axis,
                              DiffScheme scheme, std::vector<char>* out_mask) {
  GridPtr grid = f.grid();
  const bool periodic = grid->spec().kind == DomainSpec::Kind::Torus;
  const int n = grid->nodes_per_axis();
  const double inv_h = 1.0 / grid->spacing(axis);
  MatrixField out(grid, f.fiber_dim());
  if (out_mask) out_mask->assign(static_cast<size_t>(grid->num_nodes()), 0);

  auto valid = [&](const MultiIndex& mi, int off) -> std::optional<std::int64_t> {
    std::int64_t j = mi[axis] + off;
    if (periodic)
      j = ((j % n) + n) % n;
    else if (j < 0 || j >= n)
      return std::nullopt;
    MultiIndex mj = mi;
    mj[axis] = j;
    const std::int64_t node = grid->ravel(mj);
    if (!mask[static_cast<size_t>(node)]) return std::nullopt;
    return node;
  };

  for_each_index(grid->num_nodes(), [&](std::int64_t node) {
    if (!mask[static_cast<size_t>(node)]) return;
    const MultiIndex mi = grid->unravel(node);
    const int mu = f.fiber_dim();
    Matrix acc = Matrix::Zero(mu, mu);
    bool ok = false;
    const auto m2 = valid(mi, -2), m1 = valid(mi, -1), p1 = valid(mi, 1), p2 = valid(mi, 2);
    if (scheme == DiffScheme::Central4 && m2 && m1 && p1 && p2) {
      acc = (f.at(*m2) - f.at(*p2)) / 12.0 + (f.at(*p1) - f.at(*m1)) * (8.0 / 12.0);
      ok = true;
    } else if (m1 && p1) {
      acc = 0.5 * (f.at(*p1) - f.at(*m1));
      ok = true;
    } else if (p1 && p2) {
      acc = -1.5 * f.at(node) + 2.0 * f.at(*p1) - 0.5 * f.at(*p2);
      ok = true;
    } else if (m1 && m2) {
      acc = 1.5 * f.at(node) - 2.0 * f.at(*m1) + 0.5 * f.at(*m2);
      ok = true;
    }
    if (ok) {
      out.at(node) = acc * inv_h;
      if (out_mask) (*out_mask)[static_cast<size_t>(node)] = 1;
    }
  });
  return out;
}

double spectral_norm(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

double min_eigenvalue_hermitian(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace fibm

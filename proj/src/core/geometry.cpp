#include "core/geometry.hpp"

#include <cmath>
#include <limits>

namespace fibm {

DomainSpec DomainSpec::box(const std::vector<std::array<double, 2>>& axes) {
  DomainSpec s;
  s.kind = Kind::Box;
  s.dim = static_cast<int>(axes.size());
  for (size_t i = 0; i < axes.size() && i < kMaxDim; ++i) s.bounds[i] = axes[i];
  s.validate();
  return s;
}

DomainSpec DomainSpec::torus(const std::vector<double>& periods) {
  DomainSpec s;
  s.kind = Kind::Torus;
  s.dim = static_cast<int>(periods.size());
  for (size_t i = 0; i < periods.size() && i < kMaxDim; ++i) s.bounds[i] = {0.0, periods[i]};
  s.validate();
  return s;
}

void DomainSpec::validate() const {
  if (dim < 1 || dim > kMaxDim)
    fail(ErrorCode::InvalidArgument, "domain dimension must be 1..3, got " + std::to_string(dim));
  for (int a = 0; a < dim; ++a) {
    if (!(bounds[a][1] > bounds[a][0]))
      fail(ErrorCode::InvalidArgument, "degenerate bounds on axis " + std::to_string(a));
  }
}

Grid::Grid(DomainSpec spec, int nodes_per_axis) : spec_(spec), n_(nodes_per_axis) {
  spec_.validate();
  if (n_ < 4) fail(ErrorCode::InvalidArgument, "grid needs at least 4 nodes per axis");
  total_ = 1;
  for (int a = 0; a < spec_.dim; ++a) {
    const double len = spec_.length(a);
    h_[a] = (spec_.kind == DomainSpec::Kind::Box) ? len / (n_ - 1) : len / n_;
    stride_[a] = total_;
    total_ *= n_;
  }
}

double Grid::min_spacing() const {
  double m = std::numeric_limits<double>::max();
  for (int a = 0; a < dim(); ++a) m = std::min(m, h_[a]);
  return m;
}

double Grid::coord(int axis, std::int64_t i) const {
  return spec_.bounds[axis][0] + static_cast<double>(i) * h_[axis];
}

Coord Grid::coord(std::int64_t node) const {
  const MultiIndex mi = unravel(node);
  Coord c{};
  for (int a = 0; a < dim(); ++a) c[a] = coord(a, mi[a]);
  return c;
}

MultiIndex Grid::unravel(std::int64_t node) const {
  MultiIndex mi{};
  for (int a = 0; a < dim(); ++a) {
    mi[a] = node % n_;
    node /= n_;
  }
  return mi;
}

std::int64_t Grid::ravel(const MultiIndex& mi) const {
  std::int64_t node = 0;
  for (int a = 0; a < dim(); ++a) node += mi[a] * stride_[a];
  return node;
}

std::optional<std::int64_t> Grid::neighbor(std::int64_t node, int axis, int step) const {
  MultiIndex mi = unravel(node);
  std::int64_t j = mi[axis] + step;
  if (spec_.kind == DomainSpec::Kind::Torus) {
    j = ((j % n_) + n_) % n_;
  } else if (j < 0 || j >= n_) {
    return std::nullopt;
  }
  mi[axis] = j;
  return ravel(mi);
}

double Grid::distance(const Coord& a, const Coord& b) const {
  double s = 0.0;
  for (int ax = 0; ax < dim(); ++ax) {
    double d = std::abs(a[ax] - b[ax]);
    if (spec_.kind == DomainSpec::Kind::Torus) {
      const double L = spec_.length(ax);
      d = std::fmod(d, L);
      d = std::min(d, L - d);
    }
    s += d * d;
  }
  return std::sqrt(s);
}

int Grid::boundary_depth(std::int64_t node) const {
  if (spec_.kind == DomainSpec::Kind::Torus) return n_;
  const MultiIndex mi = unravel(node);
  std::int64_t depth = n_;
  for (int a = 0; a < dim(); ++a)
    depth = std::min({depth, mi[a], static_cast<std::int64_t>(n_) - 1 - mi[a]});
  return static_cast<int>(depth);
}

GridPtr build_grid(const DomainSpec& spec, int nodes_per_axis) {
  return std::make_shared<const Grid>(spec, nodes_per_axis);
}

}  // namespace fibm

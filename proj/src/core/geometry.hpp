#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "core/errors.hpp"

namespace fibm {

inline constexpr int kMaxDim = 3;

using Coord = std::array<double, kMaxDim>;
using MultiIndex = std::array<std::int64_t, kMaxDim>;

// Base manifold: an axis-aligned box in R^d or a flat torus, d <= 3.
struct DomainSpec {
  enum class Kind { Box, Torus };

  Kind kind = Kind::Box;
  int dim = 2;
  // Box: per-axis [lo, hi]. Torus: [0, period) stored as lo=0, hi=period.
  std::array<std::array<double, 2>, kMaxDim> bounds{};

  static DomainSpec box(const std::vector<std::array<double, 2>>& axes);
  static DomainSpec torus(const std::vector<double>& periods);

  double length(int axis) const { return bounds[axis][1] - bounds[axis][0]; }
  void validate() const;
};

// Uniform tensor grid over a DomainSpec. Box grids include both endpoints
// (n nodes, n-1 cells per axis); torus grids identify node n with node 0.
class Grid {
 public:
  Grid(DomainSpec spec, int nodes_per_axis);

  const DomainSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  int nodes_per_axis() const { return n_; }
  double spacing(int axis) const { return h_[axis]; }
  double min_spacing() const;
  std::int64_t num_nodes() const { return total_; }

  Coord coord(std::int64_t node) const;
  double coord(int axis, std::int64_t i) const;
  MultiIndex unravel(std::int64_t node) const;
  std::int64_t ravel(const MultiIndex& mi) const;

  // Neighboring node along an axis; empty at box edges, wraps on a torus.
  std::optional<std::int64_t> neighbor(std::int64_t node, int axis, int step) const;

  // Distance respecting torus wrap-around.
  double distance(const Coord& a, const Coord& b) const;

  // Layers of nodes from the nearest box edge (large value on a torus).
  int boundary_depth(std::int64_t node) const;

 private:
  DomainSpec spec_;
  int n_;
  std::array<double, kMaxDim> h_{};
  std::array<std::int64_t, kMaxDim> stride_{};
  std::int64_t total_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr build_grid(const DomainSpec& spec, int nodes_per_axis);

}  // namespace fibm

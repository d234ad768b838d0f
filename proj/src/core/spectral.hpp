#pragma once

#include <vector>

#include "core/fields.hpp"

namespace fibm {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x > lo && x < hi; }
  bool inside(const Interval& outer, double margin = 0.0) const {
    return lo >= outer.lo + margin && hi <= outer.hi - margin;
  }
};

struct Cluster {
  int first = 0;      // index of first eigenvalue in the cluster
  int count = 0;      // multiplicity
  double mean = 0.0;  // cluster mean eigenvalue
};

// Pointwise spectral data of one hermitian fiber matrix: ascending
// eigenvalues, gap-based clusters and one orthogonal projector per cluster.
struct SpectralDecomposition {
  std::vector<double> eigenvalues;
  std::vector<Cluster> clusters;
  std::vector<Matrix> projectors;  // one per cluster
  Matrix eigenvectors;             // columns, ascending eigenvalue order

  int fiber_dim() const { return static_cast<int>(eigenvalues.size()); }
  int cluster_of_eigenvalue(int eig_index) const;
};

inline constexpr double kDefaultClusterTol = 1e-8;

SpectralDecomposition eigen_decompose(const Matrix& h, double cluster_tol = kDefaultClusterTol,
                                      double hermitian_tol = 1e-10);

// Sum of cluster projectors with mean inside J. Any eigenvalue within
// cluster_tol of an endpoint of J is a boundary collision.
Matrix interval_projector(const SpectralDecomposition& d, const Interval& J,
                          double cluster_tol = kDefaultClusterTol);

// Quadrature cross-check of the interval projector: trapezoid rule on a
// circle of center mid(J) and radius 0.75*|J| around the eigenvalue group.
Matrix contour_projector(const Matrix& h, const Interval& J, int quadrature_nodes = 64);

// Nagy intertwiner of two orthogonal projectors with ||P2-P1|| < 1:
//   W = (1-(P2-P1)^2)^{-1/2} [P2 P1 + (1-P2)(1-P1)],  W P1 W* = P2.
Matrix nagy_unitary(const Matrix& p1, const Matrix& p2, double gap_tol = 1e-8);

// Per-node isometries trivializing a projector subbundle over a set of
// nodes, anchored at a base node. W(k) columns span ran pi(k).
struct FrameField {
  std::int64_t anchor_node = -1;
  int rank = 0;
  std::vector<std::int64_t> nodes;
  std::vector<Matrix> isometries;  // fiber_dim x rank, aligned with nodes

  const Matrix& at_node(std::int64_t node) const;
};

FrameField local_frame(const std::vector<std::int64_t>& nodes,
                       const std::vector<Matrix>& projectors, std::int64_t anchor_node);

// Reduced hamiltonian over the frame nodes: Htilde(k) = W(k)* H(k) W(k).
struct ReducedHamiltonian {
  std::vector<std::int64_t> nodes;
  std::vector<Matrix> values;  // rank x rank hermitian
};

ReducedHamiltonian reduce_hamiltonian(const MatrixField& h, const FrameField& frame);

}  // namespace fibm

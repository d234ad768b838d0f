#include "core/spectral.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace fibm {

int SpectralDecomposition::cluster_of_eigenvalue(int eig_index) const {
  for (size_t c = 0; c < clusters.size(); ++c)
    if (eig_index >= clusters[c].first && eig_index < clusters[c].first + clusters[c].count)
      return static_cast<int>(c);
  return -1;
}

SpectralDecomposition eigen_decompose(const Matrix& h, double cluster_tol, double hermitian_tol) {
  if (cluster_tol <= 0.0) fail(ErrorCode::InvalidArgument, "cluster_tol must be positive");
  const double defect = spectral_norm(h - h.adjoint().eval());
  if (defect > hermitian_tol)
    fail(ErrorCode::NonHermitian, "matrix hermitian defect " + std::to_string(defect));

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.adjoint().eval()));
  SpectralDecomposition d;
  const int mu = static_cast<int>(h.rows());
  d.eigenvalues.resize(static_cast<size_t>(mu));
  for (int i = 0; i < mu; ++i) d.eigenvalues[static_cast<size_t>(i)] = es.eigenvalues()(i);
  d.eigenvectors = es.eigenvectors();

  // merge adjacent eigenvalues whose gap is below cluster_tol
  int start = 0;
  for (int i = 1; i <= mu; ++i) {
    if (i == mu || d.eigenvalues[static_cast<size_t>(i)] - d.eigenvalues[static_cast<size_t>(i - 1)] >= cluster_tol) {
      Cluster c;
      c.first = start;
      c.count = i - start;
      double sum = 0.0;
      for (int j = start; j < i; ++j) sum += d.eigenvalues[static_cast<size_t>(j)];
      c.mean = sum / c.count;
      d.clusters.push_back(c);
      Matrix p = Matrix::Zero(mu, mu);
      for (int j = start; j < i; ++j) p += d.eigenvectors.col(j) * d.eigenvectors.col(j).adjoint();
      d.projectors.push_back(std::move(p));
      start = i;
    }
  }
  return d;
}

Matrix interval_projector(const SpectralDecomposition& d, const Interval& J, double cluster_tol) {
  for (double ev : d.eigenvalues) {
    if (std::abs(ev - J.lo) < cluster_tol || std::abs(ev - J.hi) < cluster_tol)
      fail(ErrorCode::BoundaryCollision,
           "eigenvalue " + std::to_string(ev) + " collides with the boundary of (" +
               std::to_string(J.lo) + "," + std::to_string(J.hi) + ")");
  }
  const int mu = d.fiber_dim();
  Matrix p = Matrix::Zero(mu, mu);
  for (size_t c = 0; c < d.clusters.size(); ++c)
    if (J.contains(d.clusters[c].mean)) p += d.projectors[c];
  return p;
}

Matrix contour_projector(const Matrix& h, const Interval& J, int quadrature_nodes) {
  const double r = 0.75 * J.width();
  const std::complex<double> center(J.mid(), 0.0);
  const int mu = static_cast<int>(h.rows());
  Matrix acc = Matrix::Zero(mu, mu);
  // trapezoid rule is spectrally accurate for this periodic integrand
  for (int q = 0; q < quadrature_nodes; ++q) {
    const double t = 2.0 * std::numbers::pi * q / quadrature_nodes;
    const std::complex<double> z = center + std::complex<double>(r * std::cos(t), r * std::sin(t));
    const std::complex<double> dz(-r * std::sin(t), r * std::cos(t));
    Matrix res = (z * Matrix::Identity(mu, mu) - h).partialPivLu().solve(Matrix::Identity(mu, mu));
    acc += dz * res;
  }
  acc *= std::complex<double>(0.0, -1.0) / (2.0 * std::numbers::pi) * (2.0 * std::numbers::pi / quadrature_nodes);
  return acc;
}

Matrix nagy_unitary(const Matrix& p1, const Matrix& p2, double gap_tol) {
  const Matrix r = p2 - p1;
  const double gap = spectral_norm(r);
  if (gap >= 1.0 - gap_tol)
    fail(ErrorCode::NagyGap, "projector distance " + std::to_string(gap) + " >= 1");
  const int mu = static_cast<int>(p1.rows());
  const Matrix one = Matrix::Identity(mu, mu);
  Eigen::SelfAdjointEigenSolver<Matrix> es(one - r * r);
  Matrix inv_sqrt = Matrix::Zero(mu, mu);
  for (int i = 0; i < mu; ++i)
    inv_sqrt += (1.0 / std::sqrt(es.eigenvalues()(i))) * es.eigenvectors().col(i) *
                es.eigenvectors().col(i).adjoint();
  return inv_sqrt * (p2 * p1 + (one - p2) * (one - p1));
}

const Matrix& FrameField::at_node(std::int64_t node) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i] == node) return isometries[i];
  fail(ErrorCode::InvalidArgument, "node " + std::to_string(node) + " not in frame");
}

FrameField local_frame(const std::vector<std::int64_t>& nodes,
                       const std::vector<Matrix>& projectors, std::int64_t anchor_node) {
  if (nodes.size() != projectors.size() || nodes.empty())
    fail(ErrorCode::InvalidArgument, "local_frame needs one projector per node");
  size_t anchor_pos = nodes.size();
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i] == anchor_node) anchor_pos = i;
  if (anchor_pos == nodes.size())
    fail(ErrorCode::InvalidArgument, "anchor node must be one of the frame nodes");

  const Matrix& p0 = projectors[anchor_pos];
  // orthonormal basis of ran p0 from its top eigenvectors
  Eigen::SelfAdjointEigenSolver<Matrix> es(p0);
  const int mu = static_cast<int>(p0.rows());
  int rank = 0;
  for (int i = 0; i < mu; ++i)
    if (es.eigenvalues()(i) > 0.5) ++rank;
  Matrix basis(mu, rank);
  int col = 0;
  for (int i = 0; i < mu; ++i)
    if (es.eigenvalues()(i) > 0.5) basis.col(col++) = es.eigenvectors().col(i);

  FrameField frame;
  frame.anchor_node = anchor_node;
  frame.rank = rank;
  frame.nodes = nodes;
  frame.isometries.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    try {
      const Matrix w = nagy_unitary(p0, projectors[i]);
      frame.isometries[i] = w * basis;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NagyGap)
        fail(ErrorCode::NagyGap,
             "frame failed at node " + std::to_string(nodes[i]) + ": " + e.what());
      throw;
    }
  }
  return frame;
}

ReducedHamiltonian reduce_hamiltonian(const MatrixField& h, const FrameField& frame) {
  ReducedHamiltonian red;
  red.nodes = frame.nodes;
  red.values.resize(frame.nodes.size());
  for (size_t i = 0; i < frame.nodes.size(); ++i) {
    const Matrix& w = frame.isometries[i];
    red.values[i] = w.adjoint() * h.at(frame.nodes[i]) * w;
  }
  return red;
}

}  // namespace fibm

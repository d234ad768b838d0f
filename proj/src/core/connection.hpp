#pragma once

#include "core/covering.hpp"
#include "core/local_stencil.hpp"

namespace fibm {

// Unitary connection stored as its coefficient one-form relative to the
// flat derivative: nabla_i = d_i + L_i with L_i(k) anti-hermitian. Storing
// differences keeps gluing and comparison additive.
struct Connection {
  GridPtr grid;
  int fiber_dim = 0;
  std::array<MatrixField, kMaxDim> coeff;
  std::vector<char> mask;
  double skew_defect = 0.0;  // removed by symmetrization, reported

  const Matrix& L(int axis, std::int64_t node) const { return coeff[static_cast<size_t>(axis)].at(node); }
};

Connection trivial_connection(GridPtr grid, int fiber_dim);

// Compression of a base connection onto a complete orthogonal family:
// L_i <- L_i - sum_n (d_i pi_n + [L_i, pi_n]) pi_n, which annihilates every
// member of the family. Derivatives of the projector fields are discrete.
Connection adiabatic_connection(const Connection& base, const std::vector<MatrixField>& family,
                                const std::vector<char>& mask, DiffScheme scheme);

// Basis of the commutative projector algebra generated by a family with a
// common unit: all nonzero subset products of generators and complements.
struct ProjectorBasis {
  std::vector<MatrixField> atoms;
  std::vector<char> mask;
  std::vector<std::vector<int>> coefficients;  // generator -> 0/1 per atom
};
ProjectorBasis projector_basis(const std::vector<MatrixField>& generators, const MatrixField& unit,
                               const std::vector<char>& mask, double tol = 1e-10);

// Block compression of the base connection over the basis atoms (completed
// by the complement of their sum).
Connection alpha_connection(const Connection& base, const ProjectorBasis& basis, DiffScheme scheme);

// The two connections actually consumed by the conjugate-operator assembly
// over one covering region: the plain block-adiabatic one and the glued
// modification that also annihilates every overlap product.
Connection region_connection(const Covering& cov, const SpectralFieldData& spec, int m,
                             DiffScheme scheme);
Connection glue_modified_connection(const Covering& cov, const BumpSystem& bumps,
                                    const SpectralFieldData& spec, int m, DiffScheme scheme);

// Node-local equivalent of the two connections above, computed over the
// region's valid nodes only. Ball coverings produce hundreds of small
// regions; working node lists keeps the assembly linear in covered nodes.
// Atoms of the overlap algebras are built per node by grouping spectral
// clusters by their window-membership signature, which on commuting
// spectral projectors is exactly the subset-product basis.
class RegionConnectionEvaluator {
 public:
  RegionConnectionEvaluator(const WindowCache& cache, const BumpSystem& bumps, int region,
                            bool modified, DiffScheme scheme);

  int region() const { return region_; }
  bool valid(std::int64_t node) const;
  const Matrix& coeff(int axis, std::int64_t node) const;
  double skew_defect() const { return skew_defect_; }
  double theta_partition_defect() const { return theta_defect_; }

  // discrete defect of nabla(P) = dP + [L, P] over the given nodes
  double annihilation_defect(const std::vector<std::int64_t>& where,
                             const std::function<const Matrix*(std::int64_t)>& p,
                             DiffScheme scheme) const;

 private:
  std::optional<size_t> index_of(std::int64_t node) const;
  GridPtr grid_;
  int region_ = 0;
  int mu_ = 0;
  int dim_ = 0;
  std::vector<std::int64_t> nodes_;
  std::vector<char> valid_;
  std::vector<Matrix> coeff_;  // nodes x dim
  double skew_defect_ = 0.0;
  double theta_defect_ = 0.0;
};

// R_ij = d_i L_j - d_j L_i + [L_i, L_j] (flat reference derivative).
MatrixField curvature(const Connection& conn, int i, int j, DiffScheme scheme,
                      std::vector<char>* out_mask = nullptr);

// Discrete defect of nabla(P) = dP + [L, P] over a node set; P is any
// matrix field (typically a product of window projectors).
double annihilation_defect(const Connection& conn, const MatrixField& p,
                           const std::vector<char>& where, DiffScheme scheme);

}  // namespace fibm

#pragma once

#include "core/connection.hpp"

namespace fibm {

// Escape direction for one spectral block: X = grad(mbar)/|grad(mbar)|^2
// with mbar the block mean energy, so X differentiates the block spectrum
// with unit speed. Gradients come from the Hellmann-Feynman trace formula
// (exact); only the divergence is discrete.
struct VectorFieldData {
  GridPtr grid;
  std::array<ScalarField, kMaxDim> comp;
  ScalarField divergence;
  std::vector<char> mask;
  double min_compressed_derivative = 0.0;  // min eig of the compressed X.dH
};

VectorFieldData escape_field(const MatrixField& projector, const std::vector<char>& mask,
                             const std::vector<MatrixField>& dh, int rank, double grad_floor,
                             DiffScheme scheme, const std::vector<char>* positivity_where = nullptr);

// First-order differential operator sum_i A_i(k) d_i + B(k) with matrix
// coefficient fields; the common shape of the conjugate generators and of
// every commutator in the calculus.
struct FirstOrderOperator {
  GridPtr grid;
  int fiber_dim = 0;
  std::array<MatrixField, kMaxDim> principal;
  MatrixField zeroth;

  static FirstOrderOperator zero(GridPtr grid, int fiber_dim);
  double max_principal_norm() const;
  double max_zeroth_norm() const;
  std::vector<char> support(double tol = 0.0) const;
};

// Escape data of one covering window over its region's node list.
struct WindowEscape {
  std::vector<std::int64_t> nodes;  // sorted, aligned with the window cache
  std::vector<std::array<double, kMaxDim>> comp;
  std::vector<double> divergence;
  std::vector<char> valid;
  double min_compressed_derivative = 1e30;

  std::optional<size_t> index_of(std::int64_t node) const;
};

// Escape field of one window: Hellmann-Feynman gradients of the block mean,
// discrete divergence, and the compressed positivity graded inside the
// window's bump support.
WindowEscape window_escape(const WindowCache& cache, int window_index,
                           const std::vector<MatrixField>& dh, const BumpSystem& bumps,
                           double grad_floor, DiffScheme scheme);

struct AssemblyInputs {
  const WindowCache* cache = nullptr;
  const BumpSystem* bumps = nullptr;
  const std::vector<MatrixField>* dh = nullptr;  // exact dH fields
  const std::vector<RegionConnectionEvaluator>* connections = nullptr;  // per region
  const std::vector<WindowEscape>* escapes = nullptr;                   // per window
};

// The generator i A_I (naive connections) or i A~_I (modified):
//   -i A = sum_{m,n} g_m [ pi nabla_X pi + (div X / 2) pi ] g_m.
FirstOrderOperator assemble_conjugate(const AssemblyInputs& in, DiffScheme scheme);

// Coefficient-level commutator [H, D] of a multiplication operator with
// exact derivatives against a first-order operator.
FirstOrderOperator commutator_with_multiplication(const MatrixField& h,
                                                  const std::vector<MatrixField>& dh,
                                                  const FirstOrderOperator& d);

// Coefficient-level bracket [D1, D2]. Valid as a first-order operator only
// when the principal parts commute; the symmetrized second-order residual
// is always computed and reported.
struct BracketResult {
  FirstOrderOperator op;
  double second_order_residual = 0.0;
  std::int64_t worst_node = -1;
};
BracketResult bracket(const FirstOrderOperator& d1, const FirstOrderOperator& d2,
                      DiffScheme scheme);
FirstOrderOperator bracket_checked(const FirstOrderOperator& d1, const FirstOrderOperator& d2,
                                   DiffScheme scheme, double comm_tol);

// Iterated commutators ad^j: ad^1 = [H, D], ad^{j+1} = [D, ad^j].
struct CommutatorReport {
  int order = 0;
  double principal_residual = 0.0;
  double zeroth_norm = 0.0;
  double second_order_residual = 0.0;
  bool left_first_order_class = false;
  FirstOrderOperator op;
};
std::vector<CommutatorReport> iterated_ad(const FirstOrderOperator& d, const MatrixField& h,
                                          const std::vector<MatrixField>& dh, int j_max,
                                          DiffScheme scheme, double comm_tol = 1e-6);

// Formal adjoint with the flat density: (sum A_i d_i + B)^* =
// sum (-A_i^*) d_i + B^* - sum d_i A_i^*.
FirstOrderOperator formal_adjoint(const FirstOrderOperator& d, DiffScheme scheme);

// Coefficient-level defect of D^* = -D (the generator of a symmetric
// operator); decays O(h^2) for the assembled conjugates.
double antisymmetry_defect(const FirstOrderOperator& d, DiffScheme scheme);

}  // namespace fibm

#pragma once

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "core/geometry.hpp"
#include "core/polynomial.hpp"

namespace fibm {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

enum class DiffScheme { Central2, Central4 };

// Sampled realization of a k-dependent matrix object: one fiber_dim x
// fiber_dim complex matrix per grid node.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(GridPtr grid, int fiber_dim);

  GridPtr grid() const { return grid_; }
  int fiber_dim() const { return mu_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  Matrix& at(std::int64_t node) { return values_[static_cast<size_t>(node)]; }
  const Matrix& at(std::int64_t node) const { return values_[static_cast<size_t>(node)]; }

  double max_norm() const;            // sup over nodes of spectral norm
  double max_hermitian_defect() const;

  MatrixField& operator+=(const MatrixField& o);
  MatrixField& operator-=(const MatrixField& o);
  MatrixField& operator*=(double s);

 private:
  GridPtr grid_;
  int mu_ = 0;
  std::vector<Matrix> values_;
};

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridPtr grid, double value = 0.0);

  GridPtr grid() const { return grid_; }
  double& at(std::int64_t node) { return values_[static_cast<size_t>(node)]; }
  double at(std::int64_t node) const { return values_[static_cast<size_t>(node)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

MatrixField sample_family(const MatrixPolynomialFamily& fam, GridPtr grid);
MatrixField sample_matrix_function(GridPtr grid, int fiber_dim,
                                   const std::function<Matrix(const Coord&)>& f);
ScalarField sample_scalar_function(GridPtr grid, const std::function<double(const Coord&)>& f);

// Nodewise discrete partial derivative. Interior nodes use central stencils;
// box edges fall back to one-sided second-order stencils so edge values stay
// O(h^2) accurate. Torus grids wrap (caller guarantees periodic data).
MatrixField discrete_derivative(const MatrixField& f, int axis,
                                DiffScheme scheme = DiffScheme::Central2);
ScalarField discrete_derivative(const ScalarField& f, int axis,
                                DiffScheme scheme = DiffScheme::Central2);

// Derivative restricted to a node subset: central where the full stencil
// lies in the mask, one-sided otherwise, invalid when no stencil fits.
MatrixField masked_derivative(const MatrixField& f, const std::vector<char>& mask, int axis,
                              DiffScheme scheme, std::vector<char>* out_mask = nullptr);

double spectral_norm(const Matrix& m);
double min_eigenvalue_hermitian(const Matrix& m);

}  // namespace fibm

#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "core/geometry.hpp"

namespace fibm {

// Multivariate polynomial with real coefficients, k in R^d (d <= 3).
// Terms are keyed by exponent tuple; evaluation and differentiation are
// exact, which is what keeps every downstream derivative check honest.
class Polynomial {
 public:
  using Exponents = std::array<int, kMaxDim>;

  Polynomial() = default;
  explicit Polynomial(double constant);

  static Polynomial variable(int axis, int dim);

  int dim() const { return dim_; }
  void set_dim(int d) { dim_ = d; }
  bool is_zero() const { return terms_.empty(); }

  void add_term(const Exponents& e, double coeff);

  double eval(const Coord& k) const;
  Polynomial derivative(int axis) const;

  Polynomial& operator+=(const Polynomial& o);
  Polynomial& operator*=(double s);
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }

  bool same_as(const Polynomial& o, double tol = 0.0) const;

  const std::map<Exponents, double>& terms() const { return terms_; }

 private:
  int dim_ = 0;
  std::map<Exponents, double> terms_;
};

// Exact representation of k -> H0(k): a hermitian fiber_dim x fiber_dim
// matrix of real polynomials. With real coefficients hermitian symmetry
// means entry(i,j) == entry(j,i) as polynomials.
class MatrixPolynomialFamily {
 public:
  MatrixPolynomialFamily(int fiber_dim, int dim);

  int fiber_dim() const { return mu_; }
  int dim() const { return dim_; }

  Polynomial& entry(int i, int j) { return entries_[idx(i, j)]; }
  const Polynomial& entry(int i, int j) const { return entries_[idx(i, j)]; }

  void validate_hermitian() const;

  MatrixPolynomialFamily derivative(int axis) const;

  // Exact evaluation at a point (usable off-grid, e.g. at cell midpoints).
  void eval(const Coord& k, std::vector<double>& out) const;

 private:
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * mu_ + j; }
  int mu_;
  int dim_;
  std::vector<Polynomial> entries_;
};

// Built-in models and the JSON model-definition format.
MatrixPolynomialFamily builtin_family(const std::string& id);
MatrixPolynomialFamily family_from_json(const std::string& json_text);
DomainSpec builtin_domain(const std::string& id);

}  // namespace fibm

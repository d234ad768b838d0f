#pragma once

#include <string>

#include "core/fields.hpp"
#include "core/polynomial.hpp"

namespace fibm {

// Closed forms for the two built-in 2x2 models
//   H0(k) = s(k) Id + k1 C(k2),  C(k2) = [[1, k2], [k2, -1]],
// with s = k2 (model 2) or s = k1^2 + k2^2 + k2 (model 1). Eigenvalue
// branches lambda_pm = s(k) +- k1 sqrt(1+k2^2); the branch projectors
// pi_pm depend on k2 only. For model 2 the full conjugate-operator
// construction is available in closed form and serves as the independent
// oracle for every pipeline stage.
class ClosedFormModel {
 public:
  explicit ClosedFormModel(int id);  // 1 or 2
  int id() const { return id_; }

  // -- fiber data ------------------------------------------------------
  Matrix hamiltonian(const Coord& k) const;
  Matrix d_hamiltonian(int axis, const Coord& k) const;
  double lambda(int branch, const Coord& k) const;  // branch +1 / -1
  std::array<double, 2> grad_lambda(int branch, const Coord& k) const;
  Matrix projector(int branch, const Coord& k) const;
  Matrix d_projector_dk2(int branch, const Coord& k) const;

  // model 1 only: the single critical energy and its base point
  double threshold_energy() const;
  Coord threshold_point() const;

  // -- scalar profiles (model 2 construction) ---------------------------
  // g0^2 + gp^2 + gm^2 = 1 on R, supp g0 in (-1/2,1/2), gp in (1/4,inf),
  // gm mirrored; th0^2 + th1^2 = 1, supp th0 in (-1/4,1/4), th1 = 0 on
  // [-1/8,1/8]. Derivatives are exact.
  double g0(double k1) const;
  double dg0(double k1) const;
  double gp(double k1) const;
  double dgp(double k1) const;
  double gm(double k1) const;
  double dgm(double k1) const;
  double th0(double k1) const;
  double th1(double k1) const;

  // -- escape fields on the branch sheets (model 2) ---------------------
  std::array<double, 2> escape(int branch, const Coord& k) const;  // grad/|grad|^2
  double escape_divergence(int branch, const Coord& k) const;

  // -- conjugate operator coefficients (model 2) -------------------------
  // Operators are the generators i A_I / i A~_I written as
  // sum_i A_i(k) d_i + B(k); mode false = naive, true = modified.
  Matrix conjugate_principal(int axis, const Coord& k, bool modified) const;
  Matrix conjugate_zeroth(const Coord& k, bool modified) const;

  // [H0, iA] as a multiplication operator field.
  Matrix first_commutator(const Coord& k, bool modified) const;

  // Mourre bound and the grid-independent lower bound for the principal
  // part of the naive second commutator (1-d scan on the k2 = 0 slice).
  double mourre_floor() const { return 0.5; }
  double naive_ad2_floor(int scan_points = 100000) const;

  // generic accessors used by tests and the CLI report
  Matrix eval_matrix(const std::string& quantity, const Coord& k) const;
  double eval_scalar(const std::string& quantity, const Coord& k) const;

 private:
  double shift(const Coord& k) const;        // s(k)
  std::array<double, 2> grad_shift(const Coord& k) const;
  int id_;
};

}  // namespace fibm

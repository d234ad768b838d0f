#include "core/oracle.hpp"

#include <cmath>

#include "core/profiles.hpp"

namespace fibm {

namespace {

Matrix coupling(double k2) {
  Matrix c(2, 2);
  c << 1.0, k2, k2, -1.0;
  return c;
}

Matrix coupling_deriv() {
  Matrix c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  return c;
}

// g0^2 on the positive half axis. On the window [0.34, 0.44] it follows the
// level track c_V(x) = (1 - sqrt(1 - 4V/x))/2, which makes the coefficient
// x*c*(1-c) of the naive double commutator exactly flat at its maximum V.
// A flat maximum is what keeps the measured sup over coarse grids at the
// scanned value instead of an alignment-dependent fraction of it.
constexpr double kFloorV = 0.074;

double level_track(double x, double* deriv) {
  const double u = 1.0 - 4.0 * kFloorV / x;
  const double r = std::sqrt(u);
  if (deriv) *deriv = -kFloorV / (x * x * r);
  return 0.5 * (1.0 - r);
}

double g0_squared_half(double x, double* deriv) {
  auto step = [](double t, double* d) {
    if (d) *d = SmoothStep::deriv(t);
    return SmoothStep::value(t);
  };
  double d = 0.0;
  double val;
  if (x <= 0.25) {
    val = 1.0;
  } else if (x < 0.28) {
    double ds;
    const double s = step((x - 0.25) / 0.03, &ds);
    val = 1.0 - 0.54 * s;
    d = -0.54 * ds / 0.03;
  } else if (x < 0.32) {
    double ds;
    const double s = step((x - 0.28) / 0.06, &ds);
    val = 0.46 - 0.14 * s;
    d = -0.14 * ds / 0.06;
  } else if (x < 0.34) {
    double dsi, dw, dtrack;
    const double si = step((x - 0.28) / 0.06, &dsi);
    const double ci = 0.46 - 0.14 * si;
    const double dci = -0.14 * dsi / 0.06;
    const double w = step((x - 0.32) / 0.02, &dw);
    dw /= 0.02;
    const double cv = level_track(x, &dtrack);
    val = (1.0 - w) * ci + w * cv;
    d = -dw * ci + (1.0 - w) * dci + dw * cv + w * dtrack;
  } else if (x < 0.44) {
    val = level_track(x, &d);
  } else {
    double dw, dtrack;
    const double cv = level_track(x, &dtrack);
    const double w = step((x - 0.44) / 0.05, &dw);
    dw /= 0.05;
    val = cv * (1.0 - w);
    d = dtrack * (1.0 - w) - cv * dw;
  }
  if (deriv) *deriv = d;
  return val;
}

double g0_squared(double k1, double* deriv) {
  const double x = std::abs(k1);
  double d;
  const double v = g0_squared_half(x, &d);
  if (deriv) *deriv = (k1 < 0.0 ? -d : d);
  return v;
}

// th1^2 as a function of |k1|: 0 on [0, 1/8], 1 from 0.225 on.
double th1_squared(double k1) {
  return SmoothStep::value((std::abs(k1) - 0.125) / 0.1);
}

double sqrt_or_zero(double v) { return v <= 0.0 ? 0.0 : std::sqrt(v); }

}  // namespace

ClosedFormModel::ClosedFormModel(int id) : id_(id) {
  if (id != 1 && id != 2) fail(ErrorCode::InvalidArgument, "closed-form model id must be 1 or 2");
}

double ClosedFormModel::shift(const Coord& k) const {
  return id_ == 1 ? k[0] * k[0] + k[1] * k[1] + k[1] : k[1];
}

std::array<double, 2> ClosedFormModel::grad_shift(const Coord& k) const {
  if (id_ == 1) return {2.0 * k[0], 2.0 * k[1] + 1.0};
  return {0.0, 1.0};
}

Matrix ClosedFormModel::hamiltonian(const Coord& k) const {
  return shift(k) * Matrix::Identity(2, 2) + k[0] * coupling(k[1]);
}

Matrix ClosedFormModel::d_hamiltonian(int axis, const Coord& k) const {
  const auto gs = grad_shift(k);
  if (axis == 0) return gs[0] * Matrix::Identity(2, 2) + coupling(k[1]);
  return gs[1] * Matrix::Identity(2, 2) + k[0] * coupling_deriv();
}

double ClosedFormModel::lambda(int branch, const Coord& k) const {
  const double s = std::sqrt(1.0 + k[1] * k[1]);
  return shift(k) + branch * k[0] * s;
}

std::array<double, 2> ClosedFormModel::grad_lambda(int branch, const Coord& k) const {
  const double s = std::sqrt(1.0 + k[1] * k[1]);
  const auto gs = grad_shift(k);
  return {gs[0] + branch * s, gs[1] + branch * k[0] * k[1] / s};
}

Matrix ClosedFormModel::projector(int branch, const Coord& k) const {
  const double s = std::sqrt(1.0 + k[1] * k[1]);
  return 0.5 * Matrix::Identity(2, 2) + (branch / (2.0 * s)) * coupling(k[1]);
}

Matrix ClosedFormModel::d_projector_dk2(int branch, const Coord& k) const {
  const double s = std::sqrt(1.0 + k[1] * k[1]);
  const double sp = k[1] / s;
  return (branch / (2.0 * s)) * coupling_deriv() - (branch * sp / (2.0 * s * s)) * coupling(k[1]);
}

double ClosedFormModel::threshold_energy() const {
  if (id_ != 1) fail(ErrorCode::InvalidArgument, "model 2 has no threshold");
  return -0.25;
}

Coord ClosedFormModel::threshold_point() const {
  if (id_ != 1) fail(ErrorCode::InvalidArgument, "model 2 has no threshold");
  return {0.0, -0.5, 0.0};
}

double ClosedFormModel::g0(double k1) const { return sqrt_or_zero(g0_squared(k1, nullptr)); }

double ClosedFormModel::dg0(double k1) const {
  double d;
  const double c = g0_squared(k1, &d);
  if (c <= 0.0) return 0.0;
  return d / (2.0 * std::sqrt(c));
}

double ClosedFormModel::gp(double k1) const {
  if (k1 <= 0.25) return 0.0;
  return sqrt_or_zero(1.0 - g0_squared(k1, nullptr));
}

double ClosedFormModel::dgp(double k1) const {
  if (k1 <= 0.25) return 0.0;
  double d;
  const double c = g0_squared(k1, &d);
  const double v = 1.0 - c;
  if (v <= 0.0) return 0.0;
  return -d / (2.0 * std::sqrt(v));
}

double ClosedFormModel::gm(double k1) const { return gp(-k1); }
double ClosedFormModel::dgm(double k1) const { return -dgp(-k1); }

double ClosedFormModel::th0(double k1) const { return sqrt_or_zero(1.0 - th1_squared(k1)); }
double ClosedFormModel::th1(double k1) const { return sqrt_or_zero(th1_squared(k1)); }

std::array<double, 2> ClosedFormModel::escape(int branch, const Coord& k) const {
  const auto g = grad_lambda(branch, k);
  const double n2 = g[0] * g[0] + g[1] * g[1];
  return {g[0] / n2, g[1] / n2};
}

double ClosedFormModel::escape_divergence(int branch, const Coord& k) const {
  if (id_ != 2) fail(ErrorCode::InvalidArgument, "closed-form escape divergence is model 2 only");
  const double k1 = k[0], k2 = k[1];
  const double s = std::sqrt(1.0 + k2 * k2);
  const double sp = k2 / s;
  const double spp = 1.0 / (s * s * s);
  const double a = 1.0 + branch * k1 * sp;  // second gradient component
  const double G = s * s + a * a;
  const double dG_dk1 = 2.0 * a * branch * sp;
  const double dG_dk2 = 2.0 * s * sp + 2.0 * a * branch * k1 * spp;
  const double d1 = -branch * s * dG_dk1 / (G * G);
  const double d2 = branch * k1 * spp / G - a * dG_dk2 / (G * G);
  return d1 + d2;
}

Matrix ClosedFormModel::conjugate_principal(int axis, const Coord& k, bool /*modified*/) const {
  if (id_ != 2) fail(ErrorCode::InvalidArgument, "closed-form conjugate is model 2 only");
  const double k1 = k[0];
  const double c = g0_squared(k1, nullptr);
  const double sheets = gp(k1) * gp(k1) + gm(k1) * gm(k1);
  Matrix a = Matrix::Zero(2, 2);
  if (axis == 1) a -= c * Matrix::Identity(2, 2);
  for (int branch : {+1, -1}) {
    const auto x = escape(branch, k);
    a -= sheets * x[static_cast<size_t>(axis)] * projector(branch, k);
  }
  return a;
}

Matrix ClosedFormModel::conjugate_zeroth(const Coord& k, bool modified) const {
  if (id_ != 2) fail(ErrorCode::InvalidArgument, "closed-form conjugate is model 2 only");
  const double k1 = k[0];
  double dc;
  const double c = g0_squared(k1, &dc);
  const double sheets = gp(k1) * gp(k1) + gm(k1) * gm(k1);
  // sum over sheets of g dg/dk1 equals -g0 dg0/dk1
  const double gdg = -0.5 * dc;
  Matrix b = Matrix::Zero(2, 2);
  for (int branch : {+1, -1}) {
    const Matrix pi = projector(branch, k);
    const Matrix dpi = d_projector_dk2(branch, k);
    const auto x = escape(branch, k);
    b -= sheets * (x[1] * (pi * dpi) + 0.5 * escape_divergence(branch, k) * pi);
    b -= gdg * x[0] * pi;
  }
  if (modified) {
    const double t1sq = th1_squared(k1);
    for (int branch : {+1, -1}) {
      const Matrix pi = projector(branch, k);
      const Matrix dpi = d_projector_dk2(branch, k);
      b -= c * t1sq * (pi * dpi);
    }
  }
  return b;
}

Matrix ClosedFormModel::first_commutator(const Coord& k, bool modified) const {
  if (id_ != 2) fail(ErrorCode::InvalidArgument, "closed-form commutator is model 2 only");
  const double k1 = k[0], k2 = k[1];
  const double c = g0_squared(k1, nullptr);
  Matrix m = Matrix::Identity(2, 2);
  if (!modified) {
    m += c * k1 * coupling_deriv();
    return m;
  }
  const double t1sq = th1_squared(k1);
  const double t0sq = 1.0 - t1sq;
  const double s = std::sqrt(1.0 + k2 * k2);
  m += k1 * t0sq * c * coupling_deriv();
  m += t1sq * c * (k2 * k1 / s) * (projector(+1, k) - projector(-1, k));
  return m;
}

double ClosedFormModel::naive_ad2_floor(int scan_points) const {
  if (id_ != 2) fail(ErrorCode::InvalidArgument, "naive ad2 floor is model 2 only");
  // principal coefficient of [iA_I, [H0, iA_I]] along k1 on the k2 = 0
  // slice: k1 * g0^2 * (gp^2+gm^2) * (X+_1 - X-_1) / s, spectral norm of
  // the antisymmetric 2x2 carrier is 1.
  double best = 0.0;
  for (int i = 0; i <= scan_points; ++i) {
    const double k1 = 0.25 + 0.25 * static_cast<double>(i) / scan_points;
    const Coord k{k1, 0.0, 0.0};
    const double c = g0_squared(k1, nullptr);
    const double sheets = 1.0 - c;
    const double xdiff = escape(+1, k)[0] - escape(-1, k)[0];
    best = std::max(best, std::abs(k1 * c * sheets * xdiff));
  }
  return best;
}

Matrix ClosedFormModel::eval_matrix(const std::string& q, const Coord& k) const {
  if (q == "H") return hamiltonian(k);
  if (q == "dH1") return d_hamiltonian(0, k);
  if (q == "dH2") return d_hamiltonian(1, k);
  if (q == "pi+") return projector(+1, k);
  if (q == "pi-") return projector(-1, k);
  if (q == "ad1_naive") return first_commutator(k, false);
  if (q == "ad1_modified") return first_commutator(k, true);
  fail(ErrorCode::InvalidArgument, "unknown matrix quantity '" + q + "'");
}

double ClosedFormModel::eval_scalar(const std::string& q, const Coord& k) const {
  if (q == "lambda+") return lambda(+1, k);
  if (q == "lambda-") return lambda(-1, k);
  if (q == "g0") return g0(k[0]);
  if (q == "th0") return th0(k[0]);
  if (q == "th1") return th1(k[0]);
  if (q == "threshold") return threshold_energy();
  fail(ErrorCode::InvalidArgument, "unknown scalar quantity '" + q + "'");
}

}  // namespace fibm

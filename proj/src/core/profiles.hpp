#pragma once

#include <cmath>

namespace fibm {

// C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t).
// Value and first derivative are exact closed forms; bump-function
// derivatives enter zeroth-order operator coefficients, so differencing
// them numerically would waste the O(h^2) budget on profile curvature.
struct SmoothStep {
  static double psi(double t) { return t <= 0.0 ? 0.0 : std::exp(-1.0 / t); }
  static double dpsi(double t) { return t <= 0.0 ? 0.0 : std::exp(-1.0 / t) / (t * t); }

  static double value(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = psi(t), b = psi(1.0 - t);
    return a / (a + b);
  }
  static double deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double a = psi(t), b = psi(1.0 - t);
    const double da = dpsi(t), db = dpsi(1.0 - t);
    const double s = a + b;
    return (da * b + a * db) / (s * s);
  }
};

// Radial mollifier profile exp(-1/(1-t^2)) on |t| < 1.
struct Mollifier {
  static double value(double t) {
    const double u = 1.0 - t * t;
    return u <= 0.0 ? 0.0 : std::exp(-1.0 / u);
  }
  static double deriv(double t) {
    const double u = 1.0 - t * t;
    if (u <= 0.0) return 0.0;
    return std::exp(-1.0 / u) * (-2.0 * t) / (u * u);
  }
};

// Smooth plateau on the line: 1 on [a, b], 0 outside (a - w, b + w).
struct Plateau {
  double a = 0.0, b = 0.0, w = 1.0;
  double value(double x) const {
    return SmoothStep::value((x - (a - w)) / w) * SmoothStep::value(((b + w) - x) / w);
  }
};

}  // namespace fibm

#pragma once

// Closed-form reference values used by the test suites.

#include <cmath>
#include <numbers>

namespace cubeflow::oracle {

/// KR map of p0(x) = 0.5 + x onto the uniform density: the CDF of p0.
inline double affine_T(double x) { return 0.5 * x + 0.5 * x * x; }
inline double affine_dT(double x) { return 0.5 + x; }
inline double affine_T_inv(double y) { return -0.5 + std::sqrt(0.25 + 2.0 * y); }

/// G_t(x) = t T(x) + (1-t) x for the affine case.
inline double affine_G(double x, double t) { return t * affine_T(x) + (1.0 - t) * x; }

/// Inverse of G_t for the affine case from the quadratic t/2 x^2 + (1 - t/2) x - y = 0.
inline double affine_G_inv(double y, double t) {
  if (t == 0.0) return y;
  const double a = 0.5 * t, b = 1.0 - 0.5 * t;
  return (-b + std::sqrt(b * b + 4.0 * a * y)) / (2.0 * a);
}

/// Cosine marginal 1 + a cos(2 pi x) CDF.
inline double cosine_cdf(double x, double a) {
  return x + a * std::sin(2.0 * std::numbers::pi * x) / (2.0 * std::numbers::pi);
}

/// Time-t flow of dx/dt = c x (1 - x).
inline double logistic_flow(double x, double c, double t) {
  const double e = std::exp(c * t);
  return x * e / (1.0 - x + x * e);
}
inline double logistic_flow_derivative(double x, double c, double t) {
  const double e = std::exp(c * t);
  const double den = 1.0 - x + x * e;
  return e / (den * den);
}

/// Squared Hellinger distance (no factor 1/2) between uniform and 0.5 + x.
inline double hellinger2_uniform_affine() {
  return 2.0 - (4.0 / 3.0) * (std::pow(1.5, 1.5) - std::pow(0.5, 1.5));
}

/// Flow-map Lipschitz constant max{e^{dr}, (r e^{3dr} + 2d e^{2dr}) / (2 sqrt(d) r)}.
inline double flow_lipschitz_constant(int d, double r) {
  const double a = std::exp(d * r);
  const double b = (r * std::exp(3.0 * d * r) + 2.0 * d * std::exp(2.0 * d * r)) / (2.0 * std::sqrt(double(d)) * r);
  return std::max(a, b);
}

/// Upper singular-value bound 1 + d M e^{dM}.
inline double singular_value_bound(int d, double M) { return 1.0 + d * M * std::exp(d * M); }

/// Cardinal B-spline of order m: sum_i (-1)^i C(m,i) (x-i)_+^{m-1} / (m-1)!.
inline double cardinal_bspline(int m, double x) {
  double s = 0.0, binom = 1.0, fact = 1.0;
  for (int k = 2; k < m; ++k) fact *= k;
  for (int i = 0; i <= m; ++i) {
    const double u = x - i;
    if (u > 0.0) s += ((i % 2) ? -1.0 : 1.0) * binom * std::pow(u, m - 1);
    binom = binom * (m - i) / (i + 1);
  }
  return s / fact;
}

}  // namespace cubeflow::oracle

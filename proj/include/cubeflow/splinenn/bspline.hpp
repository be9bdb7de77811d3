#pragma once

#include <algorithm>
#include <cmath>

#include "cubeflow/core/autodiff.hpp"

namespace cubeflow {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Cardinal B-spline of order m: sum_{i=0}^m (-1)^i C(m,i) max(0, x-i)^{m-1} / (m-1)!, 0^0 := 0.
/// Supported on [0, m]; templated so the same expression runs on tape variables.
template <class S>
S cardinal_bspline(int m, const S& x) {
  if (value_of(x) <= 0.0 || value_of(x) > m || (m >= 2 && value_of(x) == m)) return S(0.0);
  S acc(0.0);
  for (int i = 0; i <= m; ++i) {
    const double c = ((i % 2) ? -1.0 : 1.0) * binomial(m, i);
    if (value_of(x) - i > 0.0) acc = acc + c * relu_power(S(x - double(i)), m - 1);
  }
  return acc / factorial(m - 1);
}

/// r-th derivative of the cardinal B-spline: D^r B^m(x) = sum_i (-1)^i C(r,i) B^{m-r}(x-i).
/// For r = m-1 this is piecewise constant; r >= m returns 0 (off knots).
template <class S>
S cardinal_bspline_derivative(int m, int r, const S& x) {
  if (r == 0) return cardinal_bspline(m, x);
  if (r >= m) return S(0.0);
  S acc(0.0);
  for (int i = 0; i <= r; ++i) {
    const double c = ((i % 2) ? -1.0 : 1.0) * binomial(r, i);
    acc = acc + c * cardinal_bspline(m - r, S(x - double(i)));
  }
  return acc;
}

/// B^m_{n,j}(x) = B^m(n x - j).
inline double eval_bspline(int m, int n, int j, double x) { return cardinal_bspline(m, n * x - j); }

/// First index j whose B^m_{n,j} may be nonzero at x in [0,1]; the active range is
/// [first, first + m - 1] intersected with [-m+1, n-1].
inline int first_active(int m, int n, double x) {
  const int cell = std::clamp(static_cast<int>(std::floor(n * x)), 0, n - 1);
  return cell - m + 1;
}

}  // namespace cubeflow

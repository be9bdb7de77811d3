#pragma once

#include <cmath>
#include <utility>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

/// Solves g(s) = y for s in [0,1] where g is nondecreasing with g(0) <= y <= g(1).
/// `gd(s)` returns {g(s), g'(s)}. Newton steps are accepted only while they stay inside
/// the current bracket; otherwise the bracket is bisected.
template <class G>
double solve_increasing(G&& gd, double y, double guess, double bracket_tol = 1e-12) {
  double lo = 0.0, hi = 1.0;
  const auto [g0, d0] = gd(0.0);
  const auto [g1, d1] = gd(1.0);
  (void)d0;
  (void)d1;
  if (!(g0 - y <= bracket_tol) || !(g1 - y >= -bracket_tol))
    throw Error(ErrorKind::RootBracketFailure, "no sign change on [0,1] for target " + std::to_string(y));
  if (g0 >= y) return 0.0;
  if (g1 <= y) return 1.0;
  double s = (guess > 0.0 && guess < 1.0) ? guess : 0.5;
  for (int it = 0; it < 200; ++it) {
    const auto [g, dg] = gd(s);
    const double r = g - y;
    if (r == 0.0) return s;
    if (r < 0.0)
      lo = s;
    else
      hi = s;
    double next = s - r / dg;
    if (!(dg > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-16 || hi - lo <= 1e-16) return next;
    s = next;
  }
  return s;
}

}  // namespace cubeflow

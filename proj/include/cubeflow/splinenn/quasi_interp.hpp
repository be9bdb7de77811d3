#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cubeflow/splinenn/bspline.hpp"

namespace cubeflow {

/// Order-m B-splines B^m(n x - j) on [0,1], j in {-m+1, ..., n-1}.
struct BSplineBasis {
  int m = 0;
  int n = 0;
  BSplineBasis(int order, int stretch);
  int first_index() const { return -m + 1; }
  int last_index() const { return n - 1; }
  int size() const { return n + m - 1; }
  double eval(int j, double x) const { return eval_bspline(m, n, j, x); }
  /// r-th derivative in x (chain rule factor n^r included).
  double derivative(int j, int r, double x) const;
  double support_lo(int j) const { return static_cast<double>(j) / n; }
  double support_hi(int j) const { return static_cast<double>(j + m) / n; }
};

/// Boundary extension g~(x) = sum_j alpha_j g(gamma_j x) for x < 0 and
/// g~(1+y) = sum_j alpha_j g(1 + gamma_j y) for y > 0, exact on polynomials of degree <= k.
struct Extension {
  int k = 0;
  int m = 0;
  std::vector<double> gammas;
  std::vector<double> alphas;

  /// Rewrites a point evaluation of the extended function as weighted evaluations inside [0,1].
  std::vector<std::pair<double, double>> fold(double x) const;
  double apply(const std::function<double(double)>& g, double x) const;
};

/// gamma_j = -(j+1)/((k+2) m), alphas from the Vandermonde system sum_j alpha_j gamma_j^r = 1.
Extension build_extension(int k, int m);

/// Local functional lambda_j[f] = sum_s w_s (Ef)((j + u_s)/n): collocation of Ef at the m points
/// u_s = l + (s + 1/2)/m, l = floor((m-1)/2), on one knot interval of B_j's support, keeping the
/// coefficient of B_j. The weights do not depend on n or j.
struct LocalFunctional {
  int m = 0;
  std::vector<double> nodes;    // u_s
  std::vector<double> weights;  // w_s
};

LocalFunctional local_functional(int m);

using CubeFn = std::function<double(std::span<const double>)>;

/// Tensor-product quasi-interpolant Q_n^m[f] on [0,1]^d.
struct QuasiInterpolant {
  int m = 0;
  int n = 0;
  int k = 0;
  int d = 0;
  Extension extension;
  LocalFunctional functional;
  std::vector<double> coefficients;  // over nu in {-m+1..n-1}^d, row-major, last axis fastest

  std::size_t index(std::span<const int> nu) const;
  double operator()(std::span<const double> x) const { return derivative(x, {}); }
  /// Mixed partial with multi-index alpha (empty = value), analytic on each knot cell.
  double derivative(std::span<const double> x, std::span<const int> alpha) const;
};

/// Weighted evaluation points (inside [0,1]) realizing the 1-D functional for index j.
std::vector<std::pair<double, double>> functional_stencil(const Extension& ext, const LocalFunctional& lf, int n,
                                                          int j);

QuasiInterpolant quasi_interpolate(const CubeFn& f, int m, int n, int k, int d);

/// Sup over probes of the |alpha| = r derivative gap between f and Q. Target derivatives come
/// from `df(x, alpha)` when given, otherwise from 4th-order central differences of Ef.
/// Throws KnotProbe if a probe lies within 1e-6 of a knot (in units of 1/n).
double quasi_interp_error(const CubeFn& f, const QuasiInterpolant& qi, int r,
                          const std::vector<std::vector<double>>& probes,
                          const std::function<double(std::span<const double>, std::span<const int>)>& df = {});

/// `per_cell` interior offsets in every knot cell of the n-grid, tensorized over d axes.
std::vector<std::vector<double>> off_knot_probes(int n, int d, int per_cell);

/// Least-squares slope of log(err) against log(n).
double loglog_slope(std::span<const double> n, std::span<const double> err);

}  // namespace cubeflow

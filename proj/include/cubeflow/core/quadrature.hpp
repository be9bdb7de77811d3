#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cubeflow/core/rng.hpp"

namespace cubeflow {

/// Gauss-Legendre rule mapped to [0,1]; tensorized over d axes by `integrate`.
struct QuadratureGrid {
  int nodes_per_axis = 0;
  std::vector<double> nodes;    // strictly increasing, inside (0,1)
  std::vector<double> weights;  // positive, sum to 1

  static QuadratureGrid gauss_legendre(int nodes_per_axis);
  /// 32 nodes/axis for d <= 3, 12 for d in {4,5}.
  static QuadratureGrid default_for_dim(int dim);
};

using CubeFunction = std::function<double(std::span<const double>)>;

/// Maximum dimension handled by tensor quadrature; above it use integrate_monte_carlo.
inline constexpr int kMaxTensorDim = 5;

double integrate(const CubeFunction& f, const QuadratureGrid& grid, int dim);

/// Integral over [0,b] of a 1-D function using the grid rescaled to that interval.
double integrate_interval(const std::function<double(double)>& f, const QuadratureGrid& grid,
                          double a, double b);

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

MonteCarloEstimate integrate_monte_carlo(const CubeFunction& f, int dim, int samples, RngStream rng);

/// Tensor nodes of `grid` in dimension `dim`, row-major with the last axis fastest.
std::vector<std::vector<double>> tensor_nodes(const QuadratureGrid& grid, int dim);

}  // namespace cubeflow

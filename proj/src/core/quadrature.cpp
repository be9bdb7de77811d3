#include "cubeflow/core/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

QuadratureGrid QuadratureGrid::gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "gauss_legendre needs n >= 1");
  QuadratureGrid g;
  g.nodes_per_axis = n;
  g.nodes.resize(static_cast<std::size_t>(n));
  g.weights.resize(static_cast<std::size_t>(n));
  // Newton on P_n in long double, roots of [-1,1] mapped to [0,1].
  for (int i = 0; i < (n + 1) / 2; ++i) {
    long double x = std::cos(std::numbers::pi_v<long double> * (i + 0.75L) / (n + 0.5L));
    long double dp = 0.0L;
    for (int it = 0; it < 100; ++it) {
      long double p0 = 1.0L, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const long double pk = ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0L;
      dp = n * (x * p1 - p0) / (x * x - 1.0L);
      const long double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-19L) break;
    }
    // Recompute derivative at the converged root.
    long double p0 = 1.0L, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const long double pk = ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    if (n == 1) p0 = 1.0L;
    dp = n * (x * p1 - p0) / (x * x - 1.0L);
    const long double w = 1.0L / ((1.0L - x * x) * dp * dp);  // = 2/(...) halved for [0,1]
    const int lo = i, hi = n - 1 - i;
    g.nodes[static_cast<std::size_t>(lo)] = static_cast<double>((1.0L - x) / 2.0L);
    g.nodes[static_cast<std::size_t>(hi)] = static_cast<double>((1.0L + x) / 2.0L);
    g.weights[static_cast<std::size_t>(lo)] = static_cast<double>(w);
    g.weights[static_cast<std::size_t>(hi)] = static_cast<double>(w);
  }
  return g;
}

QuadratureGrid QuadratureGrid::default_for_dim(int dim) {
  return gauss_legendre(dim <= 3 ? 32 : 12);
}

double integrate(const CubeFunction& f, const QuadratureGrid& grid, int dim) {
  if (dim < 1 || dim > kMaxTensorDim) {
    throw Error(ErrorKind::InvalidArgument,
                "tensor quadrature supports 1 <= d <= 5, got " + std::to_string(dim));
  }
  const int n = grid.nodes_per_axis;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  std::vector<double> x(static_cast<std::size_t>(dim));
  long double total = 0.0L;
  while (true) {
    double w = 1.0;
    for (int a = 0; a < dim; ++a) {
      x[static_cast<std::size_t>(a)] = grid.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
      w *= grid.weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    }
    const double v = f(x);
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "integrand not finite at a quadrature node");
    total += static_cast<long double>(w) * v;
    int a = dim - 1;
    while (a >= 0 && ++idx[static_cast<std::size_t>(a)] == n) idx[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  return static_cast<double>(total);
}

double integrate_interval(const std::function<double(double)>& f, const QuadratureGrid& grid,
                          double a, double b) {
  long double total = 0.0L;
  const double len = b - a;
  for (int i = 0; i < grid.nodes_per_axis; ++i) {
    const double v = f(a + len * grid.nodes[static_cast<std::size_t>(i)]);
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "integrand not finite at a quadrature node");
    total += static_cast<long double>(grid.weights[static_cast<std::size_t>(i)]) * v;
  }
  return static_cast<double>(total * len);
}

MonteCarloEstimate integrate_monte_carlo(const CubeFunction& f, int dim, int samples, RngStream rng) {
  if (samples < 2) throw Error(ErrorKind::InvalidArgument, "Monte Carlo needs >= 2 samples");
  std::vector<double> x(static_cast<std::size_t>(dim));
  long double sum = 0.0L, sum2 = 0.0L;
  for (int s = 0; s < samples; ++s) {
    for (double& c : x) c = rng.uniform();
    const double v = f(x);
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "integrand not finite at a Monte Carlo sample");
    sum += v;
    sum2 += static_cast<long double>(v) * v;
  }
  const long double mean = sum / samples;
  const long double var = (sum2 - samples * mean * mean) / (samples - 1);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(std::max(0.0L, var) / samples))};
}

std::vector<std::vector<double>> tensor_nodes(const QuadratureGrid& grid, int dim) {
  std::vector<std::vector<double>> out;
  const int n = grid.nodes_per_axis;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  while (true) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (int a = 0; a < dim; ++a) x[static_cast<std::size_t>(a)] = grid.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    out.push_back(std::move(x));
    int a = dim - 1;
    while (a >= 0 && ++idx[static_cast<std::size_t>(a)] == n) idx[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  return out;
}

}  // namespace cubeflow

#include "cubeflow/core/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/probes.hpp"

namespace cubeflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kAnalyticSmoothness = 16;

double param_or(const std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

}  // namespace

void AnalyticDensity::grad(std::span<const double> x, std::span<double> out) const {
  if (gradient) {
    gradient(x, out);
    return;
  }
  const double h = 1e-6;
  std::vector<double> y(x.begin(), x.end());
  for (int i = 0; i < dim; ++i) {
    const double xi = x[i];
    const double lo = std::max(0.0, xi - h), hi = std::min(1.0, xi + h);
    y[i] = hi;
    const double fp = eval(y);
    y[i] = lo;
    const double fm = eval(y);
    y[i] = xi;
    out[i] = (fp - fm) / (hi - lo);
  }
}

bool AnalyticDensity::is_uniform() const {
  return is_product && std::all_of(marginals.begin(), marginals.end(), [](const Marginal1D& m) { return m.is_uniform; });
}

Marginal1D uniform_marginal() {
  return {"uniform", [](double) { return 1.0; }, [](double) { return 0.0; }, [](double x) { return x; }, true};
}

Marginal1D affine_marginal() {
  return {"affine", [](double x) { return 0.5 + x; }, [](double) { return 1.0; },
          [](double x) { return 0.5 * x + 0.5 * x * x; }, false};
}

Marginal1D cosine_marginal(double a) {
  if (!(std::abs(a) < 1.0)) throw Error(ErrorKind::InvalidArgument, "cosine density needs |a| < 1");
  return {"cosine", [a](double x) { return 1.0 + a * std::cos(kTwoPi * x); },
          [a](double x) { return -a * kTwoPi * std::sin(kTwoPi * x); },
          [a](double x) { return x + a * std::sin(kTwoPi * x) / kTwoPi; }, false};
}

namespace {

struct MarginalBounds {
  double lo, hi, lip;
};

MarginalBounds bounds_of(const Marginal1D& m) {
  if (m.name == "uniform") return {1.0, 1.0, 0.0};
  if (m.name == "affine") return {0.5, 1.5, 1.0};
  // cosine: recover a from pdf(0) = 1 + a
  const double a = m.pdf(0.0) - 1.0;
  return {1.0 - std::abs(a), 1.0 + std::abs(a), std::abs(a) * kTwoPi};
}

}  // namespace

AnalyticDensity product_density(const std::vector<Marginal1D>& marginals, const std::string& name) {
  if (marginals.empty()) throw Error(ErrorKind::InvalidArgument, "product density needs >= 1 marginal");
  AnalyticDensity p;
  p.dim = static_cast<int>(marginals.size());
  if (name.empty()) {
    p.name = "product(";
    for (std::size_t i = 0; i < marginals.size(); ++i) p.name += (i ? "," : "") + marginals[i].name;
    p.name += ")";
  } else {
    p.name = name;
  }
  p.marginals = marginals;
  p.is_product = true;
  p.smoothness_k = kAnalyticSmoothness;
  p.eval = [marginals](std::span<const double> x) {
    double v = 1.0;
    for (std::size_t i = 0; i < marginals.size(); ++i) v *= marginals[i].pdf(x[i]);
    return v;
  };
  p.gradient = [marginals](std::span<const double> x, std::span<double> g) {
    const std::size_t d = marginals.size();
    for (std::size_t i = 0; i < d; ++i) {
      double v = marginals[i].dpdf(x[i]);
      for (std::size_t j = 0; j < d; ++j)
        if (j != i) v *= marginals[j].pdf(x[j]);
      g[i] = v;
    }
  };
  double lo = 1.0, hi = 1.0;
  std::vector<MarginalBounds> b;
  for (const auto& m : marginals) {
    b.push_back(bounds_of(m));
    lo *= b.back().lo;
    hi *= b.back().hi;
  }
  double lip2 = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    double term = b[i].lip;
    for (std::size_t j = 0; j < b.size(); ++j)
      if (j != i) term *= b[j].hi;
    lip2 += term * term;
  }
  p.lower_bound = lo;
  p.upper_bound = hi;
  p.lipschitz = std::sqrt(lip2);
  return p;
}

AnalyticDensity uniform_density(int dim) {
  if (dim < 1) throw Error(ErrorKind::InvalidArgument, "uniform density needs dim >= 1");
  return product_density(std::vector<Marginal1D>(dim, uniform_marginal()), "uniform");
}

AnalyticDensity affine_density() { return product_density({affine_marginal()}, "affine"); }

AnalyticDensity cosine_density(double a) { return product_density({cosine_marginal(a)}, "cosine"); }

AnalyticDensity bilinear_density(double c) {
  if (!(c > -1.0)) throw Error(ErrorKind::InvalidArgument, "bilinear density needs c > -1");
  const auto grid = QuadratureGrid::default_for_dim(2);
  const double z = integrate([c](std::span<const double> x) { return 1.0 + c * x[0] * x[1]; }, grid, 2);
  AnalyticDensity p;
  p.name = "bilinear";
  p.dim = 2;
  p.eval = [c, z](std::span<const double> x) { return (1.0 + c * x[0] * x[1]) / z; };
  p.gradient = [c, z](std::span<const double> x, std::span<double> g) {
    g[0] = c * x[1] / z;
    g[1] = c * x[0] / z;
  };
  p.smoothness_k = kAnalyticSmoothness;
  p.lower_bound = std::min(1.0, 1.0 + c) / z;
  p.upper_bound = std::max(1.0, 1.0 + c) / z;
  p.lipschitz = std::abs(c) * std::sqrt(2.0) / z;
  p.is_product = false;
  return p;
}

AnalyticDensity make_density(const std::string& name, const std::map<std::string, double>& params) {
  if (name == "uniform") return uniform_density(static_cast<int>(param_or(params, "dim", 1)));
  if (name == "affine") return affine_density();
  if (name == "cosine") return cosine_density(param_or(params, "a", 0.5));
  if (name == "affine_product") {
    const int d = static_cast<int>(param_or(params, "dim", 2));
    return product_density(std::vector<Marginal1D>(d, affine_marginal()), "affine_product");
  }
  if (name == "cosine_product") {
    const int d = static_cast<int>(param_or(params, "dim", 2));
    return product_density(std::vector<Marginal1D>(d, cosine_marginal(param_or(params, "a", 0.5))),
                           "cosine_product");
  }
  if (name == "affine_cosine") return product_density({affine_marginal(), cosine_marginal(0.5)}, "affine_cosine");
  if (name == "bilinear") return bilinear_density(param_or(params, "c", 0.5));
  throw Error(ErrorKind::InvalidArgument, "unknown density '" + name + "'");
}

std::vector<std::string> density_registry_names() {
  return {"uniform", "affine", "cosine", "affine_product", "cosine_product", "affine_cosine", "bilinear"};
}

std::vector<AnalyticDensity> density_corpus() {
  return {uniform_density(1), affine_density(), cosine_density(0.5), uniform_density(2),
          make_density("affine_product", {{"dim", 2}}), make_density("affine_cosine"), bilinear_density(0.5)};
}

ValidationReport validate_density(const AnalyticDensity& p, const QuadratureGrid& grid) {
  ValidationReport r;
  if (p.dim <= kMaxTensorDim) {
    r.normalization_residual = integrate(p.eval, grid, p.dim) - 1.0;
  } else {
    r.normalization_residual = integrate_monte_carlo(p.eval, p.dim, 100000, RngStream(0, 0)).value - 1.0;
  }
  auto pts = p.dim <= 3 ? tensor_nodes(grid, p.dim) : halton_points(4096, p.dim);
  auto edge = boundary_grid(p.dim, p.dim <= 3 ? 9 : 3);
  pts.insert(pts.end(), edge.begin(), edge.end());
  r.observed_min = std::numeric_limits<double>::infinity();
  r.observed_max = -std::numeric_limits<double>::infinity();
  for (const auto& x : pts) {
    const double v = p.eval(x);
    r.observed_min = std::min(r.observed_min, v);
    r.observed_max = std::max(r.observed_max, v);
    if (p.is_product) {
      double prod = 1.0;
      for (int i = 0; i < p.dim; ++i) prod *= p.marginals[i].pdf(x[i]);
      r.product_mismatch = std::max(r.product_mismatch, std::abs(prod - v));
    }
  }
  const double tol = 1e-12;
  if (std::abs(r.normalization_residual) > 1e-8) r.failures.push_back("normalization residual exceeds 1e-8");
  if (r.observed_min < p.lower_bound - tol) r.failures.push_back("observed minimum below declared lower_bound");
  if (r.observed_max > p.upper_bound + tol) r.failures.push_back("observed maximum above declared upper_bound");
  if (r.product_mismatch > 1e-12) r.failures.push_back("product density disagrees with its marginals");
  r.pass = r.failures.empty();
  return r;
}

}  // namespace cubeflow

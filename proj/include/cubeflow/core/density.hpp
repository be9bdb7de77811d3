#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cubeflow/core/quadrature.hpp"

namespace cubeflow {

/// Univariate density on [0,1] with its derivative and (optionally) closed-form CDF.
struct Marginal1D {
  std::string name;
  std::function<double(double)> pdf;
  std::function<double(double)> dpdf;
  std::function<double(double)> cdf;  // may be empty
  bool is_uniform = false;
};

/// Density on [0,1]^d with smoothness metadata and declared bounds.
struct AnalyticDensity {
  std::string name;
  int dim = 0;
  std::function<double(std::span<const double>)> eval;
  /// Gradient of the density; empty means finite differences are used.
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  int smoothness_k = 0;
  double lower_bound = 0.0;  // kappa
  double upper_bound = 1.0;  // K
  double lipschitz = 0.0;    // declared upper bound on |rho|_Lip (Euclidean)
  bool is_product = false;
  std::vector<Marginal1D> marginals;  // present iff is_product

  double operator()(std::span<const double> x) const { return eval(x); }
  /// Analytic gradient when available, otherwise central differences (one-sided at faces).
  void grad(std::span<const double> x, std::span<double> out) const;
  bool is_uniform() const;
};

AnalyticDensity uniform_density(int dim);
/// p(x) = 0.5 + x on [0,1].
AnalyticDensity affine_density();
/// p(x) = 1 + a cos(2 pi x); requires |a| < 1.
AnalyticDensity cosine_density(double a = 0.5);
AnalyticDensity product_density(const std::vector<Marginal1D>& marginals, const std::string& name = "");
/// p(x,y) proportional to 1 + c x y, normalized by quadrature.
AnalyticDensity bilinear_density(double c = 0.5);

Marginal1D uniform_marginal();
Marginal1D affine_marginal();
Marginal1D cosine_marginal(double a = 0.5);

/// Builds a density from a registry name and numeric parameters.
/// Names: uniform{dim}, affine, cosine{a}, affine_product{dim}, cosine_product{dim,a},
/// affine_cosine, bilinear{c}.
AnalyticDensity make_density(const std::string& name, const std::map<std::string, double>& params = {});

std::vector<std::string> density_registry_names();

/// Corpus used across test suites (d <= 2).
std::vector<AnalyticDensity> density_corpus();

struct ValidationReport {
  double normalization_residual = 0.0;
  double observed_min = 0.0;
  double observed_max = 0.0;
  double product_mismatch = 0.0;
  bool pass = false;
  std::vector<std::string> failures;
};

ValidationReport validate_density(const AnalyticDensity& p, const QuadratureGrid& grid);

}  // namespace cubeflow

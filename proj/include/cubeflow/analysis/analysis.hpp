#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/density.hpp"
#include "cubeflow/core/quadrature.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/core/velocity_field.hpp"
#include "cubeflow/flow/flow.hpp"
#include "cubeflow/mle/mle.hpp"

namespace cubeflow {

using DensityFn = std::function<double(std::span<const double>)>;

/// h^2 = int (sqrt p - sqrt q)^2 (no 1/2 factor); value = h.
struct HellingerEstimate {
  double value = 0.0;
  double h2 = 0.0;
  std::string method;  // "quadrature" or "monte_carlo"
  double standard_error = 0.0;  // of h2, Monte Carlo only
};

HellingerEstimate hellinger(const DensityFn& p, const DensityFn& q, int dim, const QuadratureGrid& grid);
HellingerEstimate hellinger_monte_carlo(const DensityFn& p, const DensityFn& q, int dim, int samples, RngStream rng);

double linf_density_gap(const DensityFn& p, const DensityFn& q, const std::vector<std::vector<double>>& probes);

/// (T^f)^# rho as a density function.
DensityFn pullback_fn(std::shared_ptr<const VelocityField> f, const AnalyticDensity& rho, const FlowConfig& cfg);

/// eta = 2(k-1-gamma) / (2(k-1-gamma) + d + 1); requires 0 < gamma < k - d/2 - 3/2.
double ck_rate_exponent(int k, int d, double gamma);
/// 2(k-1) / (d+1+2(k-1)).
double nn_rate_exponent(int k, int d);

// ---- bound suite ----

struct SuiteField {
  std::string name;
  std::shared_ptr<const VelocityField> field;
};

struct SuitePair {
  std::string name;
  std::shared_ptr<const VelocityField> f;
  std::shared_ptr<const VelocityField> g;
};

struct BoundCorpus {
  std::string name;
  AnalyticDensity rho;
  std::vector<SuiteField> fields;
  std::vector<SuitePair> pairs;
};

struct BoundSuiteConfig {
  int probes = 128;
  int norm_probes = 256;
  FlowConfig flow;
};

/// One inequality instance lhs <= rhs; margin = rhs - lhs.
struct BoundRow {
  std::string inequality;
  std::string subject;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  bool pass = false;
};

struct BoundSuiteReport {
  std::vector<BoundRow> rows;
  bool pass = false;
};

/// Zero field, logistic pair (1.0, 1.1), straight-line fields of corpus densities and a small
/// cutoff network, for d in {1, 2}.
std::vector<BoundCorpus> default_bound_corpus();

BoundSuiteReport run_bound_suite(const std::vector<BoundCorpus>& corpus, const BoundSuiteConfig& cfg);

nlohmann::json bound_report_to_json(const BoundSuiteReport& r);

// ---- rate experiments ----

struct EstimatorSpec {
  std::string kind = "spline";  // "spline" or "network"
  int order = 3;                // spline order m
  double width_constant = 0.25; // n_x = max(2, round(c n^exponent))
  double exponent = 0.5;
  int n_t = 2;
  int k = 2;  // smoothness used by the network scaling plan
};

struct RateExperimentSpec {
  std::string target = "cosine";
  std::map<std::string, double> target_params;
  EstimatorSpec estimator;
  std::vector<int> n_grid = {250, 500, 1000, 2000};
  int replicates = 5;
  std::uint64_t seed = 0;
  TrainConfig train;
  int quadrature_nodes = 64;
  int bootstrap = 200;
  bool record_time = false;
  bool allow_large = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const RateExperimentSpec& s);
void from_json(const nlohmann::json& j, RateExperimentSpec& s);

struct RateCell {
  int n = 0;
  int replicate = 0;
  double h2 = 0.0;
  double objective = 0.0;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct RateResult {
  RateExperimentSpec spec;
  std::vector<RateCell> cells;
  std::vector<double> mean_h2;  // per n_grid entry
  bool complete = false;
  double slope = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  bool monotone = false;
  double theoretical_slope = 0.0;
};

/// Initial field of the estimator class for sample size n.
std::unique_ptr<ParametricField> make_estimator(const EstimatorSpec& e, int dim, int n, std::uint64_t seed);

RateResult rate_experiment(const RateExperimentSpec& spec);

nlohmann::json rate_result_to_json(const RateResult& r);
/// CSV n,replicate,h2,objective,seconds.
void write_rate_csv(std::ostream& os, const RateResult& r);

}  // namespace cubeflow

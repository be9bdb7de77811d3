#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/cube.hpp"
#include "cubeflow/core/density.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/velocity_field.hpp"
#include "cubeflow/flow/flow.hpp"

namespace cubeflow {

struct Dataset {
  int dim = 0;
  std::vector<CubePoint> points;
  std::string source;
};

/// n draws from p0 by inverse KR pushforward of uniform draws from RngStream(seed, stream).
Dataset sample_dataset(const AnalyticDensity& p0, int n, std::uint64_t seed, std::uint64_t stream = 0);
/// Validates dimensions and membership of D.
Dataset make_dataset(int dim, std::vector<CubePoint> points, std::string source);

struct ObjectiveValue {
  double value = 0.0;  // sum_i [log rho(T(Z_i)) + logdet_i]
  int floor_hits = 0;  // points where rho was floored at kappa
};

/// Per-point log-likelihood log rho(T(Z)) + logdet, with rho floored at its lower bound.
double point_log_likelihood(const VelocityField& f, const AnalyticDensity& rho, const CubePoint& z,
                            const FlowConfig& cfg, bool* floored = nullptr);

ObjectiveValue objective(const VelocityField& f, const Dataset& data, const AnalyticDensity& rho,
                         const FlowConfig& cfg);

struct ObjectiveGradient {
  double value = 0.0;
  std::vector<double> grad;
  int floor_hits = 0;
};

/// Exact gradient of the RK4-discretized objective by reverse accumulation through every stage.
/// Points are processed in chunks of 64 in a fixed order so the sum is independent of threads.
ObjectiveGradient gradient(const ParametricField& f, const Dataset& data, const AnalyticDensity& rho,
                           const FlowConfig& cfg);

/// Max relative error of directional central differences (step h) against the gradient over
/// `directions` random unit directions restricted to trainable parameters.
double directional_gradient_check(const ParametricField& f, const Dataset& data, const AnalyticDensity& rho,
                                  const FlowConfig& cfg, int directions, std::uint64_t seed, double h = 1e-6);

struct TrainConfig {
  std::string optimizer = "adam";
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iterations = 100;
  int batch = 0;  // 0 = full batch
  double norm_ball_r = 0.0;  // <= 0 disables projection
  int norm_probes = 512;     // 0 disables norm measurement
  FlowConfig flow;
  std::uint64_t seed = 0;
  int grad_check_every = 0;  // 0 = never

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Strict: unknown keys are rejected with ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double best_objective = 0.0;
  double grad_norm = 0.0;
  double c1_norm = 0.0;
  double w2inf_norm = 0.0;
  double ms = 0.0;
  double grad_check = -1.0;  // relative FD error when checked, else -1
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  int best_iter = 0;
  double best_objective = 0.0;
  int step_halvings = 0;
  int floor_hits = 0;
};

/// CSV iter,objective,grad_norm,c1_norm,w2inf_norm,ms. `with_time=false` writes ms as 0 for
/// byte-comparable output.
void write_trace_csv(std::ostream& os, const TrainTrace& tr, bool with_time = true);

/// DivergedTraining raised by fit, carrying the rows completed before the failure.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& message, TrainTrace trace)
      : Error(ErrorKind::DivergedTraining, message), trace_(std::move(trace)) {}
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  TrainTrace trace_;
};

struct FitResult {
  std::unique_ptr<ParametricField> field;
  TrainTrace trace;
};

/// Adam ascent on the objective with projection to the r-ball after every step; returns the
/// best-objective iterate.
FitResult fit(const ParametricField& init, const Dataset& data, const AnalyticDensity& rho, const TrainConfig& cfg);

struct ScalingPlan {
  int L = 4;
  long W = 0;
  long S = 0;
  double B = 0.0;
  double exponent = 0.0;
};

/// (d+1)/(d+1+2(k-1)).
double nn_plan_exponent(int k, int d);
/// L = 4, W = S = B = ceil(4 n^{(d+1)/(d+1+2(k-1))}).
ScalingPlan nn_scaling_plan(int n, int k, int d);

}  // namespace cubeflow

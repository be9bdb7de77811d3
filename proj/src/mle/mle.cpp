#include "cubeflow/mle/mle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/json_util.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/fields/fields.hpp"
#include "cubeflow/transport/kr_map.hpp"

namespace cubeflow {

namespace {

constexpr std::size_t kChunk = 64;

FlowConfig likelihood_flow(const FlowConfig& cfg) {
  FlowConfig c = cfg;
  if (c.jacobian_mode == JacobianMode::none) c.jacobian_mode = JacobianMode::full_matrix;
  return c;
}

bool recoverable(ErrorKind k) {
  return k == ErrorKind::TrajectoryEscaped || k == ErrorKind::NonFiniteObjective || k == ErrorKind::NonFiniteValue ||
         k == ErrorKind::HypothesisViolated;
}

}  // namespace

Dataset make_dataset(int dim, std::vector<CubePoint> points, std::string source) {
  for (const auto& p : points)
    if (static_cast<int>(p.dim()) != dim) throw Error(ErrorKind::DimensionMismatch, "dataset point has wrong dimension");
  return Dataset{dim, std::move(points), std::move(source)};
}

Dataset sample_dataset(const AnalyticDensity& p0, int n, std::uint64_t seed, std::uint64_t stream) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "sample size must be nonnegative");
  const TriangularMap T = build_kr_map(p0, uniform_density(p0.dim), default_grid_res(p0.dim));
  RngStream rng(seed, stream);
  const auto u = sample_uniform(rng, n, p0.dim);
  std::vector<CubePoint> pts(u.size());
  parallel_for(u.size(), [&](std::size_t i) { pts[i] = CubePoint::clamped(T.inverse(u[i].coords())); });
  return Dataset{p0.dim, std::move(pts), p0.name + "@seed=" + std::to_string(seed)};
}

double point_log_likelihood(const VelocityField& f, const AnalyticDensity& rho, const CubePoint& z,
                            const FlowConfig& cfg, bool* floored) {
  const auto r = integrate_flow(f, z, likelihood_flow(cfg));
  double v = rho(r.terminal.coords());
  bool fl = false;
  if (!(v >= rho.lower_bound)) {
    if (!(rho.lower_bound > 0.0))
      throw Error(ErrorKind::NonFiniteObjective, "density vanishes at a transported point and has no floor");
    v = rho.lower_bound;
    fl = true;
  }
  if (floored) *floored = fl;
  const double ll = std::log(v) + r.logdet;
  if (!std::isfinite(ll)) throw Error(ErrorKind::NonFiniteObjective, "non-finite log-likelihood");
  return ll;
}

ObjectiveValue objective(const VelocityField& f, const Dataset& data, const AnalyticDensity& rho,
                         const FlowConfig& cfg) {
  const std::size_t n = data.points.size();
  const std::size_t nc = (n + kChunk - 1) / kChunk;
  std::vector<double> part(nc, 0.0);
  std::vector<int> hits(nc, 0);
  parallel_for(nc, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      bool fl = false;
      part[c] += point_log_likelihood(f, rho, data.points[i], cfg, &fl);
      hits[c] += fl;
    }
  });
  ObjectiveValue out;
  for (std::size_t c = 0; c < nc; ++c) {
    out.value += part[c];
    out.floor_hits += hits[c];
  }
  return out;
}

namespace {

// Adds the per-point gradient into g and returns the per-point log-likelihood.
double point_gradient(const ParametricField& f, const AnalyticDensity& rho, const CubePoint& z, const FlowConfig& cfg,
                      std::span<const double> theta0, std::vector<double>& g, bool& floored) {
  using ad::Var;
  auto& tape = ad::Tape::active();
  tape.reset();
  const int d = f.dim();
  const std::size_t P = theta0.size();
  std::vector<Var> theta(P);
  for (std::size_t i = 0; i < P; ++i) theta[i] = Var::input(theta0[i]);
  std::vector<Var> x(d);
  for (int i = 0; i < d; ++i) x[i] = Var(z[i]);
  const bool full = cfg.jacobian_mode == JacobianMode::full_matrix;
  std::vector<Var> J;
  if (full) {
    J.assign(static_cast<std::size_t>(d) * d, Var(0.0));
    for (int i = 0; i < d; ++i) J[i * d + i] = Var(1.0);
  }
  Var logdet(0.0);
  ClampStats stats;
  auto eval = [&](std::span<const Var> xs, double t, std::span<Var> value, std::span<Var> jac) {
    f.eval_ad(theta, xs, Var(t), value, jac);
  };
  rk4_integrate<Var>(eval, d, x, J, logdet, 0.0, 1.0, cfg, stats);
  if (full) logdet = log_determinant<Var>(J, d);

  std::vector<double> y(d), gr(d);
  for (int i = 0; i < d; ++i) y[i] = x[i].value();
  double v = rho(y);
  Var ll = logdet;
  floored = false;
  if (!(v >= rho.lower_bound)) {
    if (!(rho.lower_bound > 0.0))
      throw Error(ErrorKind::NonFiniteObjective, "density vanishes at a transported point and has no floor");
    v = rho.lower_bound;
    floored = true;
    ll = ll + std::log(v);
  } else {
    rho.grad(y, gr);
    Var lr(std::log(v));
    for (int i = 0; i < d; ++i) lr = lr + unary(x[i], 0.0, gr[i] / v);
    ll = ll + lr;
  }
  if (!std::isfinite(ll.value())) throw Error(ErrorKind::NonFiniteObjective, "non-finite log-likelihood");
  if (ll.index() >= 0) {
    const auto& adj = tape.gradient(ll.index());
    for (std::size_t i = 0; i < P; ++i) g[i] += adj[theta[i].index()];
  }
  tape.reset();
  return ll.value();
}

}  // namespace

ObjectiveGradient gradient(const ParametricField& f, const Dataset& data, const AnalyticDensity& rho,
                           const FlowConfig& cfg) {
  const FlowConfig c = likelihood_flow(cfg);
  const std::vector<double> theta = f.params();
  const std::size_t P = theta.size();
  const std::size_t n = data.points.size();
  const std::size_t nc = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> part(nc);
  std::vector<double> val(nc, 0.0);
  std::vector<int> hits(nc, 0);
  parallel_for(nc, [&](std::size_t k) {
    part[k].assign(P, 0.0);
    for (std::size_t i = k * kChunk; i < std::min(n, (k + 1) * kChunk); ++i) {
      bool fl = false;
      val[k] += point_gradient(f, rho, data.points[i], c, theta, part[k], fl);
      hits[k] += fl;
    }
  });
  ObjectiveGradient out;
  out.grad.assign(P, 0.0);
  for (std::size_t k = 0; k < nc; ++k) {
    out.value += val[k];
    out.floor_hits += hits[k];
    for (std::size_t i = 0; i < P; ++i) out.grad[i] += part[k][i];
  }
  const auto mask = f.trainable_mask();
  for (std::size_t i = 0; i < P; ++i)
    if (!mask[i]) out.grad[i] = 0.0;
  return out;
}

double directional_gradient_check(const ParametricField& f, const Dataset& data, const AnalyticDensity& rho,
                                  const FlowConfig& cfg, int directions, std::uint64_t seed, double h) {
  const auto g = gradient(f, data, rho, cfg);
  const auto theta = f.params();
  const auto mask = f.trainable_mask();
  auto probe = f.clone();
  RngStream rng(seed, 0x6772);
  double worst = 0.0;
  for (int k = 0; k < directions; ++k) {
    std::vector<double> v(theta.size(), 0.0);
    double nv = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = rng.normal();
      if (mask[i]) v[i] = r;
      nv += v[i] * v[i];
    }
    nv = std::sqrt(nv);
    if (nv == 0.0) continue;
    double an = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] /= nv;
      an += g.grad[i] * v[i];
    }
    auto at = [&](double s) {
      std::vector<double> th(theta);
      for (std::size_t i = 0; i < th.size(); ++i) th[i] += s * v[i];
      probe->set_params(th);
      return objective(*probe, data, rho, cfg).value;
    };
    const double fd = (at(h) - at(-h)) / (2 * h);
    const double rel = std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

void TrainConfig::validate() const {
  if (optimizer != "adam" && optimizer != "adam_like")
    throw Error(ErrorKind::ConfigError, "optimizer must be \"adam\"");
  if (!(step_size > 0.0)) throw Error(ErrorKind::ConfigError, "step_size must be > 0");
  if (iterations < 1) throw Error(ErrorKind::ConfigError, "iterations must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error(ErrorKind::ConfigError, "betas must lie in [0,1)");
  if (!(eps > 0.0)) throw Error(ErrorKind::ConfigError, "eps must be > 0");
  if (batch < 0 || norm_probes < 0 || grad_check_every < 0)
    throw Error(ErrorKind::ConfigError, "batch, norm_probes and grad_check_every must be >= 0");
  flow.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", c.optimizer},
       {"step_size", c.step_size},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"iterations", c.iterations},
       {"batch", c.batch},
       {"norm_ball_r", c.norm_ball_r},
       {"norm_probes", c.norm_probes},
       {"seed", c.seed},
       {"grad_check_every", c.grad_check_every},
       {"flow",
        {{"n_steps", c.flow.n_steps},
         {"clamp_tol", c.flow.clamp_tol},
         {"jacobian_mode", to_string(c.flow.jacobian_mode)}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& out) {
  using jsonutil::read;
  using jsonutil::reject_unknown;
  TrainConfig c = out;
  reject_unknown(j,
                 {"optimizer", "step_size", "beta1", "beta2", "eps", "iterations", "batch", "norm_ball_r",
                  "norm_probes", "seed", "grad_check_every", "flow"},
                 "train");
  read(j, "optimizer", c.optimizer, "train");
  read(j, "step_size", c.step_size, "train");
  read(j, "beta1", c.beta1, "train");
  read(j, "beta2", c.beta2, "train");
  read(j, "eps", c.eps, "train");
  read(j, "iterations", c.iterations, "train");
  read(j, "batch", c.batch, "train");
  read(j, "norm_ball_r", c.norm_ball_r, "train");
  read(j, "norm_probes", c.norm_probes, "train");
  read(j, "seed", c.seed, "train");
  read(j, "grad_check_every", c.grad_check_every, "train");
  if (j.contains("flow")) {
    const auto& fj = j.at("flow");
    reject_unknown(fj, {"n_steps", "clamp_tol", "jacobian_mode"}, "train.flow");
    read(fj, "n_steps", c.flow.n_steps, "train.flow");
    read(fj, "clamp_tol", c.flow.clamp_tol, "train.flow");
    if (fj.contains("jacobian_mode")) {
      std::string m;
      read(fj, "jacobian_mode", m, "train.flow");
      try {
        c.flow.jacobian_mode = jacobian_mode_from_string(m);
      } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
      }
    }
  }
  c.validate();
  out = c;
}

void write_trace_csv(std::ostream& os, const TrainTrace& tr, bool with_time) {
  os << "iter,objective,grad_norm,c1_norm,w2inf_norm,ms\n" << std::setprecision(17);
  for (const auto& r : tr.rows)
    os << r.iter << ',' << r.objective << ',' << r.grad_norm << ',' << r.c1_norm << ',' << r.w2inf_norm << ','
       << (with_time ? r.ms : 0.0) << '\n';
}

FitResult fit(const ParametricField& init, const Dataset& data, const AnalyticDensity& rho, const TrainConfig& cfg) {
  cfg.validate();
  if (data.dim != init.dim()) throw Error(ErrorKind::DimensionMismatch, "dataset and field dimensions differ");
  using clock = std::chrono::steady_clock;
  auto field = init.clone();
  const auto mask = field->trainable_mask();
  const std::size_t P = field->num_params();
  const std::size_t n = data.points.size();

  FitResult res;
  TrainTrace& tr = res.trace;
  double c1 = 0.0, w2 = 0.0;
  auto measure_and_project = [&]() {
    if (cfg.norm_probes == 0) return;
    const auto rep = measure_field_norms(*field, cfg.norm_probes);
    double s = 1.0;
    if (cfg.norm_ball_r > 0.0) s = project_norm_ball(*field, cfg.norm_ball_r, rep);
    c1 = rep.c1_norm * s;
    w2 = rep.w2inf_norm * s;
  };
  measure_and_project();

  std::vector<double> m(P, 0.0), v(P, 0.0);
  std::vector<double> theta = field->params(), best = theta;
  double step = cfg.step_size;
  double best_obj = -std::numeric_limits<double>::infinity();
  int fails = 0, adam_t = 0;
  std::vector<double> prev = theta;

  auto batch_of = [&](int it) -> Dataset {
    if (cfg.batch == 0 || static_cast<std::size_t>(cfg.batch) >= n) return data;
    RngStream rng = RngStream(cfg.seed, 0x6d62).substream(static_cast<std::uint64_t>(it));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Dataset b{data.dim, {}, data.source};
    for (int i = 0; i < cfg.batch; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * (n - i));
      std::swap(idx[i], idx[std::min(j, n - 1)]);
      b.points.push_back(data.points[idx[i]]);
    }
    return b;
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto t0 = clock::now();
    ObjectiveGradient og;
    bool ok = true;
    try {
      og = gradient(*field, batch_of(it), rho, cfg.flow);
      ok = std::isfinite(og.value);
    } catch (const Error& e) {
      if (!recoverable(e.kind())) throw;
      ok = false;
    }
    if (!ok) {
      if (++fails >= 2) throw TrainingFailure("objective non-finite twice after step halving", tr);
      step *= 0.5;
      tr.step_halvings += 1;
      theta = prev;
      field->set_params(theta);
      measure_and_project();
      continue;
    }
    fails = 0;
    tr.floor_hits += og.floor_hits;
    TraceRow row;
    row.iter = it;
    row.objective = og.value;
    double gn = 0.0;
    for (std::size_t i = 0; i < P; ++i) gn += og.grad[i] * og.grad[i];
    row.grad_norm = std::sqrt(gn);
    row.c1_norm = c1;
    row.w2inf_norm = w2;
    if (og.value > best_obj) {
      best_obj = og.value;
      best = theta;
      tr.best_iter = it;
    }
    row.best_objective = best_obj;
    if (cfg.grad_check_every > 0 && it % cfg.grad_check_every == 0)
      row.grad_check = directional_gradient_check(*field, batch_of(it), rho, cfg.flow, 3, cfg.seed + it);

    prev = theta;
    adam_t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, adam_t), bc2 = 1.0 - std::pow(cfg.beta2, adam_t);
    for (std::size_t i = 0; i < P; ++i) {
      if (!mask[i]) continue;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * og.grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * og.grad[i] * og.grad[i];
      theta[i] += step * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
    field->set_params(theta);
    measure_and_project();
    theta = field->params();
    row.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    tr.rows.push_back(row);
  }

  // final iterate
  try {
    const double last = objective(*field, batch_of(cfg.iterations), rho, cfg.flow).value;
    if (last > best_obj) {
      best_obj = last;
      best = theta;
      tr.best_iter = cfg.iterations;
    }
  } catch (const Error& e) {
    if (!recoverable(e.kind())) throw;
  }
  if (!std::isfinite(best_obj)) throw TrainingFailure("no finite objective during training", tr);
  tr.best_objective = best_obj;
  field->set_params(best);
  res.field = std::move(field);
  return res;
}

double nn_plan_exponent(int k, int d) { return double(d + 1) / double(d + 1 + 2 * (k - 1)); }

ScalingPlan nn_scaling_plan(int n, int k, int d) {
  if (n < 2 || k < 2 || d < 1) throw Error(ErrorKind::InvalidArgument, "scaling plan needs n >= 2, k >= 2, d >= 1");
  ScalingPlan p;
  p.exponent = nn_plan_exponent(k, d);
  const double w = std::ceil(4.0 * std::pow(double(n), p.exponent) - 1e-9);
  p.W = p.S = static_cast<long>(w);
  p.B = w;
  return p;
}

}  // namespace cubeflow

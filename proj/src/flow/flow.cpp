#include "cubeflow/flow/flow.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <limits>

#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"

namespace cubeflow {

const char* to_string(JacobianMode mode) noexcept {
  switch (mode) {
    case JacobianMode::full_matrix: return "full_matrix";
    case JacobianMode::logdet_trace: return "logdet_trace";
    case JacobianMode::none: return "none";
  }
  return "?";
}

JacobianMode jacobian_mode_from_string(const std::string& s) {
  if (s == "full_matrix") return JacobianMode::full_matrix;
  if (s == "logdet_trace") return JacobianMode::logdet_trace;
  if (s == "none") return JacobianMode::none;
  throw Error(ErrorKind::ConfigError, "unknown jacobian_mode '" + s + "'");
}

void FlowConfig::validate() const {
  if (n_steps < 8) throw Error(ErrorKind::InvalidArgument, "n_steps must be >= 8");
  if (!(clamp_tol > 0.0 && clamp_tol <= 1e-8)) throw Error(ErrorKind::InvalidArgument, "clamp_tol must be in (0, 1e-8]");
}

namespace {

FlowResult run(const VelocityField& f, const CubePoint& x0, double t0, double t1, const FlowConfig& cfg) {
  cfg.validate();
  const int d = f.dim();
  if (static_cast<int>(x0.dim()) != d) throw Error(ErrorKind::DimensionMismatch, "point dim != field dim");
  std::vector<double> x = x0.vec(), J;
  double logdet = 0.0;
  if (cfg.jacobian_mode == JacobianMode::full_matrix) {
    J.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) J[i * d + i] = 1.0;
  }
  auto eval = [&f](std::span<const double> xs, double t, std::span<double> v, std::span<double> A) {
    if (A.empty())
      f.eval(xs, t, v);
    else
      f.eval_with_jacobian(xs, t, v, A);
  };
  ClampStats st;
  std::vector<std::pair<double, std::vector<double>>> traj;
  rk4_integrate<double>(eval, d, x, J, logdet, t0, t1, cfg, st, cfg.record_trajectory ? &traj : nullptr);

  FlowResult r;
  r.terminal = CubePoint(std::move(x));
  r.clamp_count = st.count;
  r.max_clamp = st.max_correction;
  if (cfg.jacobian_mode == JacobianMode::full_matrix) {
    r.logdet = log_determinant(J, d);
    r.jacobian = std::move(J);
  } else if (cfg.jacobian_mode == JacobianMode::logdet_trace) {
    r.logdet = logdet;
  } else {
    r.logdet = std::numeric_limits<double>::quiet_NaN();
  }
  for (auto& [t, p] : traj) r.trajectory.emplace_back(t, CubePoint(std::move(p)));
  return r;
}

}  // namespace

FlowResult integrate_flow(const VelocityField& f, const CubePoint& x, double t0, double t1, const FlowConfig& cfg) {
  if (!(0.0 <= t0 && t0 <= t1 && t1 <= 1.0)) throw Error(ErrorKind::InvalidArgument, "need 0 <= t0 <= t1 <= 1");
  return run(f, x, t0, t1, cfg);
}

FlowResult inverse_flow(const VelocityField& f, const CubePoint& y, const FlowConfig& cfg) {
  return run(f, y, 1.0, 0.0, cfg);
}

double pullback_density(const VelocityField& f, const AnalyticDensity& rho, const CubePoint& x, const FlowConfig& cfg) {
  FlowConfig c = cfg;
  if (c.jacobian_mode == JacobianMode::none) c.jacobian_mode = JacobianMode::full_matrix;
  const auto r = integrate_flow(f, x, c);
  return rho(r.terminal.coords()) * std::exp(r.logdet);
}

void write_trajectory_csv(std::ostream& os, const FlowResult& r) {
  const std::size_t d = r.terminal.dim();
  os << "t";
  for (std::size_t i = 0; i < d; ++i) os << ",x" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (const auto& [t, p] : r.trajectory) {
    os << t;
    for (std::size_t i = 0; i < d; ++i) os << ',' << p[i];
    os << '\n';
  }
}

std::vector<double> singular_values(std::span<const double> M, int d) {
  Eigen::MatrixXd A(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) A(a, b) = M[a * d + b];
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

double singular_value_bound(int d, double M) { return 1.0 + d * M * std::exp(d * M); }

double flow_lipschitz_constant(int d, double r) {
  const double a = std::exp(d * r);
  if (r <= 0.0) return a;
  const double b = (r * std::exp(3.0 * d * r) + 2.0 * d * std::exp(2.0 * d * r)) / (2.0 * std::sqrt(double(d)) * r);
  return std::max(a, b);
}

SvAuditReport singular_value_audit(const VelocityField& f, double M, int n_probe, const FlowConfig& cfg) {
  const int d = f.dim();
  FlowConfig c = cfg;
  c.jacobian_mode = JacobianMode::full_matrix;
  const auto probes = halton_points(n_probe, d);
  std::vector<double> hi(probes.size()), lo(probes.size());
  parallel_for(probes.size(), [&](std::size_t k) {
    const auto r = integrate_flow(f, CubePoint(probes[k]), c);
    const auto s = singular_values(*r.jacobian, d);
    hi[k] = s.front();
    lo[k] = s.back();
  });
  SvAuditReport rep;
  rep.probes = n_probe;
  rep.upper_bound = singular_value_bound(d, M);
  rep.lower_bound = 1.0 / rep.upper_bound;
  rep.max_lambda1 = probes.empty() ? 1.0 : *std::max_element(hi.begin(), hi.end());
  rep.min_lambdad = probes.empty() ? 1.0 : *std::min_element(lo.begin(), lo.end());
  rep.pass = rep.max_lambda1 <= rep.upper_bound * (1.0 + 1e-12) && rep.min_lambdad >= rep.lower_bound * (1.0 - 1e-12);
  return rep;
}

LipAuditReport flow_lipschitz_audit(const VelocityField& f, const VelocityField& g, double r, int n_probe,
                                    const FlowConfig& cfg) {
  if (f.dim() != g.dim()) throw Error(ErrorKind::DimensionMismatch, "audit fields differ in dim");
  const int d = f.dim();
  FlowConfig c = cfg;
  c.jacobian_mode = JacobianMode::full_matrix;
  const auto probes = sup_probe_set(d, n_probe, 5);
  std::vector<double> gap(probes.size());
  parallel_for(probes.size(), [&](std::size_t k) {
    const CubePoint x(probes[k]);
    const auto a = integrate_flow(f, x, c), b = integrate_flow(g, x, c);
    double m = sup_distance(a.terminal.coords(), b.terminal.coords());
    for (std::size_t e = 0; e < a.jacobian->size(); ++e) m = std::max(m, std::abs((*a.jacobian)[e] - (*b.jacobian)[e]));
    gap[k] = m;
  });
  LipAuditReport rep;
  rep.probes = static_cast<int>(probes.size());
  rep.map_gap = gap.empty() ? 0.0 : *std::max_element(gap.begin(), gap.end());
  const DifferenceField diff(borrow(f), borrow(g));
  rep.field_gap = c1_sup(diff, sup_probe_set(d + 1, n_probe, 5));
  rep.constant = flow_lipschitz_constant(d, r);
  rep.ratio = rep.field_gap > 0.0 ? rep.map_gap / rep.field_gap : (rep.map_gap > 1e-12 ? INFINITY : 0.0);
  rep.pass = rep.ratio <= rep.constant;
  return rep;
}

}  // namespace cubeflow

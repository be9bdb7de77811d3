#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cubeflow/core/autodiff.hpp"
#include "cubeflow/core/cube.hpp"
#include "cubeflow/core/density.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/velocity_field.hpp"

namespace cubeflow {

/// `none` skips Jacobian propagation entirely (sampling only).
enum class JacobianMode { full_matrix, logdet_trace, none };

const char* to_string(JacobianMode mode) noexcept;
JacobianMode jacobian_mode_from_string(const std::string& s);

struct FlowConfig {
  int n_steps = 64;
  double clamp_tol = 1e-10;
  JacobianMode jacobian_mode = JacobianMode::full_matrix;
  bool record_trajectory = false;

  /// Throws InvalidArgument unless n_steps >= 8 and 0 < clamp_tol <= 1e-8.
  void validate() const;
};

struct FlowResult {
  CubePoint terminal;
  std::optional<std::vector<double>> jacobian;  // row-major d x d
  double logdet = 0.0;
  std::vector<std::pair<double, CubePoint>> trajectory;
  int clamp_count = 0;
  double max_clamp = 0.0;
};

struct ClampStats {
  int count = 0;
  double max_correction = 0.0;
};

namespace detail {

inline double plain(double v) { return v; }
inline double plain(const ad::Var& v) { return v.value(); }

template <class S>
S clamp_unit(const S& v) {
  if (plain(v) < 0.0) return S(0.0);
  if (plain(v) > 1.0) return S(1.0);
  return v;
}

// Projects a post-step coordinate back into [0,1]; excursions beyond 100 clamp_tol are errors.
template <class S>
void project(S& v, double clamp_tol, ClampStats& st) {
  const double x = plain(v);
  if (x >= 0.0 && x <= 1.0) return;
  const double excess = x < 0.0 ? -x : x - 1.0;
  if (!(excess <= 100.0 * clamp_tol))
    throw Error(ErrorKind::TrajectoryEscaped,
                "trajectory left the cube by " + std::to_string(excess) + " (field not admissible?)");
  st.count += 1;
  st.max_correction = std::max(st.max_correction, excess);
  v = S(x < 0.0 ? 0.0 : 1.0);
}

}  // namespace detail

/// Fixed-step classical RK4 from t0 to t1 (t1 < t0 integrates backwards) for the state and,
/// depending on `mode`, the variational equation dJ/dt = A J or d(logdet)/dt = tr A.
/// `eval(x, t, value, jac)` writes f(x,t) and, when jac is non-empty, the spatial Jacobian A.
/// Works for S = double and S = ad::Var so the discrete adjoint is the exact derivative of
/// this recursion.
template <class S, class Eval>
void rk4_integrate(Eval&& eval, int d, std::vector<S>& x, std::vector<S>& J, S& logdet, double t0, double t1,
                   const FlowConfig& cfg, ClampStats& stats,
                   std::vector<std::pair<double, std::vector<double>>>* trajectory = nullptr) {
  const JacobianMode mode = cfg.jacobian_mode;
  const bool need_jac = mode != JacobianMode::none;
  const bool full = mode == JacobianMode::full_matrix;
  const int n = cfg.n_steps;
  const double h = (t1 - t0) / n;
  const std::size_t dd = static_cast<std::size_t>(d) * d;

  std::vector<S> xs(d), k[4], A(need_jac ? dd : 0), Js(full ? dd : 0), K[4];
  for (int s = 0; s < 4; ++s) {
    k[s].assign(d, S(0.0));
    if (full) K[s].assign(dd, S(0.0));
  }
  S l[4] = {S(0.0), S(0.0), S(0.0), S(0.0)};
  static constexpr double c[4] = {0.0, 0.5, 0.5, 1.0};
  static constexpr double w[4] = {1.0, 2.0, 2.0, 1.0};

  if (trajectory) {
    std::vector<double> p(d);
    for (int i = 0; i < d; ++i) p[i] = detail::plain(x[i]);
    trajectory->emplace_back(t0, std::move(p));
  }
  for (int step = 0; step < n; ++step) {
    const double t = t0 + (t1 - t0) * (static_cast<double>(step) / n);
    for (int s = 0; s < 4; ++s) {
      for (int i = 0; i < d; ++i)
        xs[i] = s == 0 ? x[i] : detail::clamp_unit(S(x[i] + (c[s] * h) * k[s - 1][i]));
      eval(std::span<const S>(xs), t + c[s] * h, std::span<S>(k[s]), std::span<S>(A));
      if (!need_jac) continue;
      if (full) {
        for (std::size_t e = 0; e < dd; ++e) Js[e] = s == 0 ? J[e] : S(J[e] + (c[s] * h) * K[s - 1][e]);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            S acc(0.0);
            for (int q = 0; q < d; ++q) acc = acc + A[a * d + q] * Js[q * d + b];
            K[s][a * d + b] = acc;
          }
      } else {
        S tr(0.0);
        for (int a = 0; a < d; ++a) tr = tr + A[a * d + a];
        l[s] = tr;
      }
    }
    for (int i = 0; i < d; ++i) {
      S inc(0.0);
      for (int s = 0; s < 4; ++s) inc = inc + w[s] * k[s][i];
      x[i] = x[i] + (h / 6.0) * inc;
      detail::project(x[i], cfg.clamp_tol, stats);
    }
    if (full) {
      for (std::size_t e = 0; e < dd; ++e) {
        S inc(0.0);
        for (int s = 0; s < 4; ++s) inc = inc + w[s] * K[s][e];
        J[e] = J[e] + (h / 6.0) * inc;
      }
    } else if (need_jac) {
      S inc(0.0);
      for (int s = 0; s < 4; ++s) inc = inc + w[s] * l[s];
      logdet = logdet + (h / 6.0) * inc;
    }
    if (trajectory) {
      std::vector<double> p(d);
      for (int i = 0; i < d; ++i) p[i] = detail::plain(x[i]);
      trajectory->emplace_back(t0 + (t1 - t0) * (static_cast<double>(step + 1) / n), std::move(p));
    }
  }
}

/// log det of a d x d row-major matrix by partial-pivot elimination; throws if det <= 0.
template <class S>
S log_determinant(std::vector<S> M, int d) {
  S acc(0.0);
  int sign = 1;
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int r = col + 1; r < d; ++r)
      if (std::abs(detail::plain(M[r * d + col])) > std::abs(detail::plain(M[piv * d + col]))) piv = r;
    if (detail::plain(M[piv * d + col]) == 0.0) throw Error(ErrorKind::NonFiniteValue, "singular flow Jacobian");
    if (piv != col) {
      for (int c2 = 0; c2 < d; ++c2) std::swap(M[piv * d + c2], M[col * d + c2]);
      sign = -sign;
    }
    const S p = M[col * d + col];
    if (detail::plain(p) < 0.0) sign = -sign;
    using std::log;
    using ad::log;
    using std::abs;
    using ad::abs;
    acc = acc + log(abs(p));
    for (int r = col + 1; r < d; ++r) {
      const S m = M[r * d + col] / p;
      for (int c2 = col; c2 < d; ++c2) M[r * d + c2] = M[r * d + c2] - m * M[col * d + c2];
    }
  }
  if (sign < 0) throw Error(ErrorKind::HypothesisViolated, "flow Jacobian has negative determinant");
  return acc;
}

/// Forward flow from t0 to t1 started at x.
FlowResult integrate_flow(const VelocityField& f, const CubePoint& x, double t0, double t1, const FlowConfig& cfg);
inline FlowResult integrate_flow(const VelocityField& f, const CubePoint& x, const FlowConfig& cfg) {
  return integrate_flow(f, x, 0.0, 1.0, cfg);
}

/// (T^f)^{-1}(y) via the time-reversed ODE. Jacobian and logdet are those of the inverse map,
/// so logdet equals minus the forward logdet at the recovered point.
FlowResult inverse_flow(const VelocityField& f, const CubePoint& y, const FlowConfig& cfg);

/// rho(T^f(x)) det grad T^f(x).
double pullback_density(const VelocityField& f, const AnalyticDensity& rho, const CubePoint& x, const FlowConfig& cfg);

/// CSV with header t,x1,...,xd.
void write_trajectory_csv(std::ostream& os, const FlowResult& r);

struct SvAuditReport {
  double max_lambda1 = 0.0;
  double min_lambdad = 0.0;
  double upper_bound = 0.0;  // 1 + d M e^{dM}
  double lower_bound = 0.0;  // its reciprocal
  int probes = 0;
  bool pass = false;
};

/// Extreme singular values of grad T^f over Halton probes against 1 + d M e^{dM}.
SvAuditReport singular_value_audit(const VelocityField& f, double M, int n_probe, const FlowConfig& cfg);

double singular_value_bound(int d, double M);
/// max{e^{dr}, (r e^{3dr} + 2d e^{2dr}) / (2 sqrt(d) r)}.
double flow_lipschitz_constant(int d, double r);

struct LipAuditReport {
  double map_gap = 0.0;    // ||T^f - T^g||_{C^1(D)} over probes
  double field_gap = 0.0;  // ||f - g||_{C^1(Omega)} over probes
  double ratio = 0.0;
  double constant = 0.0;
  int probes = 0;
  bool pass = false;
};

LipAuditReport flow_lipschitz_audit(const VelocityField& f, const VelocityField& g, double r, int n_probe,
                                    const FlowConfig& cfg);

/// Singular values of a d x d row-major matrix, descending.
std::vector<double> singular_values(std::span<const double> M, int d);

}  // namespace cubeflow

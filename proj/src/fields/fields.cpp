#include "cubeflow/fields/fields.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <type_traits>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/splinenn/bspline.hpp"

namespace cubeflow {

// ---- NetworkField ----

NetworkField::NetworkField(NetworkSpec net) : net_(std::move(net)) {
  check_shapes(net_);
  if (net_.d_in != net_.d_out + 1) throw Error(ErrorKind::DimensionMismatch, "field network needs d_in = d_out + 1");
  if (net_.activation_power < 2) throw Error(ErrorKind::InvalidArgument, "field network needs activation power >= 2");
  theta_ = net_.flat_params();
  net_.audit = audit_network(net_);
}

void NetworkField::eval(std::span<const double> x, double t, std::span<double> out) const {
  const int d = dim();
  std::vector<double> z(x.begin(), x.begin() + d);
  z.push_back(t);
  network_forward<double>(net_, theta_, z, out, {});
}

void NetworkField::eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                                      std::span<double> jac) const {
  const int d = dim();
  std::vector<double> z(x.begin(), x.begin() + d), full(static_cast<std::size_t>(d) * (d + 1));
  z.push_back(t);
  network_forward<double>(net_, theta_, z, out, full);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) jac[j * d + k] = full[j * (d + 1) + k];
}

void NetworkField::jacobian(std::span<const double> x, double t, std::span<double> jac) const {
  std::vector<double> out(dim());
  eval_with_jacobian(x, t, out, jac);
}

std::string NetworkField::describe() const {
  std::ostringstream os;
  os << "relu" << net_.activation_power << "_net(L=" << net_.audit.L << ",W=" << net_.audit.W << ",S=" << net_.audit.S
     << ")";
  return os.str();
}

void NetworkField::set_params(std::span<const double> theta) {
  net_.set_flat_params(theta);
  theta_ = net_.flat_params();
}

void NetworkField::eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
                           std::span<ad::Var> value, std::span<ad::Var> jac) const {
  const int d = dim();
  std::vector<ad::Var> z(x.begin(), x.begin() + d);
  z.push_back(t);
  if (jac.empty()) {
    network_forward<ad::Var>(net_, theta, z, value, {});
    return;
  }
  std::vector<ad::Var> full(static_cast<std::size_t>(d) * (d + 1));
  network_forward<ad::Var>(net_, theta, z, value, full);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) jac[j * d + k] = full[j * (d + 1) + k];
}

void NetworkField::scale_output(double factor) {
  scale_output_layer(net_, factor);
  theta_ = net_.flat_params();
}

// ---- SplineField ----

SplineField::SplineField(int dim, int order, int n_x, int n_t) : dim_(dim), m_(order), n_x_(n_x), n_t_(n_t) {
  if (dim < 1 || dim > 3) throw Error(ErrorKind::InvalidArgument, "spline field supports 1 <= d <= 3");
  if (order < 2) throw Error(ErrorKind::InvalidArgument, "spline field order must be >= 2");
  if (n_x < 1 || n_t < 1) throw Error(ErrorKind::InvalidArgument, "spline resolutions must be >= 1");
  per_comp_ = static_cast<std::size_t>(n_t + order - 1);
  for (int a = 0; a < dim; ++a) per_comp_ *= static_cast<std::size_t>(n_x + order - 1);
  coef_.assign(per_comp_ * dim, 0.0);
}

template <class S>
void SplineField::evaluate(std::span<const S> coef, std::span<const S> x, const S& t, std::span<S> value,
                           std::span<S> jac) const {
  const int d = dim_, m = m_, axes = d + 1;
  const bool want_jac = !jac.empty();
  std::array<std::vector<S>, 4> B, dB;
  std::array<int, 4> first{}, nb{};
  for (int a = 0; a < axes; ++a) {
    const int n = a < d ? n_x_ : n_t_;
    const S z = a < d ? x[a] : t;
    nb[a] = n + m - 1;
    first[a] = first_active(m, n, std::clamp(value_of(z), 0.0, 1.0));
    const S u = double(n) * z;
    B[a].resize(m);
    if (want_jac && a < d) dB[a].resize(m);
    for (int q = 0; q < m; ++q) {
      const S arg = u - double(first[a] + q);
      if constexpr (std::is_same_v<S, ad::Var>) {
        const double av = arg.value();
        B[a][q] = unary(arg, cardinal_bspline(m, av), cardinal_bspline_derivative(m, 1, av));
        if (want_jac && a < d)
          dB[a][q] = unary(arg, n * cardinal_bspline_derivative(m, 1, av), n * cardinal_bspline_derivative(m, 2, av));
      } else {
        B[a][q] = cardinal_bspline(m, arg);
        if (want_jac && a < d) dB[a][q] = double(n) * cardinal_bspline_derivative(m, 1, arg);
      }
    }
  }
  for (int j = 0; j < d; ++j) value[j] = S(0.0);
  if (want_jac)
    for (auto& v : jac) v = S(0.0);

  int combos = 1;
  for (int a = 0; a < axes; ++a) combos *= m;
  std::array<int, 4> q{};
  for (int c = 0; c < combos; ++c) {
    int rem = c;
    std::size_t idx = 0;
    for (int a = axes - 1; a >= 0; --a) {
      q[a] = rem % m;
      rem /= m;
    }
    S prod(1.0);
    for (int a = 0; a < axes; ++a) {
      idx = idx * nb[a] + static_cast<std::size_t>(first[a] + q[a] + m - 1);
      prod = prod * B[a][q[a]];
    }
    std::array<S, 3> dprod;
    if (want_jac) {
      for (int k = 0; k < d; ++k) {
        S p = dB[k][q[k]];
        for (int a = 0; a < axes; ++a)
          if (a != k) p = p * B[a][q[a]];
        dprod[k] = p;
      }
    }
    for (int j = 0; j < d; ++j) {
      const S& cj = coef[j * per_comp_ + idx];
      value[j] = value[j] + cj * prod;
      if (want_jac)
        for (int k = 0; k < d; ++k) jac[j * d + k] = jac[j * d + k] + cj * dprod[k];
    }
  }
}

void SplineField::eval(std::span<const double> x, double t, std::span<double> out) const {
  evaluate<double>(coef_, x, t, out, {});
}

void SplineField::eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                                     std::span<double> jac) const {
  evaluate<double>(coef_, x, t, out, jac);
}

void SplineField::jacobian(std::span<const double> x, double t, std::span<double> jac) const {
  std::vector<double> out(dim_);
  evaluate<double>(coef_, x, t, out, jac);
}

std::string SplineField::describe() const {
  std::ostringstream os;
  os << "spline(m=" << m_ << ",n_x=" << n_x_ << ",n_t=" << n_t_ << ")";
  return os.str();
}

void SplineField::set_params(std::span<const double> theta) {
  if (theta.size() != coef_.size()) throw Error(ErrorKind::DimensionMismatch, "spline coefficient count");
  coef_.assign(theta.begin(), theta.end());
}

void SplineField::eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
                          std::span<ad::Var> value, std::span<ad::Var> jac) const {
  evaluate<ad::Var>(theta, x, t, value, jac);
}

void SplineField::scale_output(double factor) {
  for (double& c : coef_) c *= factor;
}

// ---- CutoffField ----

CutoffField::CutoffField(std::shared_ptr<VelocityField> inner) : inner_(std::move(inner)) {
  if (!inner_) throw Error(ErrorKind::InvalidArgument, "cutoff of a null field");
}

std::shared_ptr<CutoffField> apply_cutoff(std::shared_ptr<VelocityField> inner) {
  return std::make_shared<CutoffField>(std::move(inner));
}

ParametricField& CutoffField::param_inner() const {
  auto* p = dynamic_cast<ParametricField*>(inner_.get());
  if (!p) throw Error(ErrorKind::InvalidArgument, "cutoff inner field is not parametric");
  return *p;
}

void CutoffField::eval(std::span<const double> x, double t, std::span<double> out) const {
  inner_->eval(x, t, out);
  for (int j = 0; j < dim(); ++j) out[j] *= x[j] * (1.0 - x[j]);
}

void CutoffField::eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                                     std::span<double> jac) const {
  const int d = dim();
  inner_->eval_with_jacobian(x, t, out, jac);
  for (int j = 0; j < d; ++j) {
    const double chi = x[j] * (1.0 - x[j]);
    for (int k = 0; k < d; ++k) jac[j * d + k] *= chi;
    jac[j * d + j] += out[j] * (1.0 - 2.0 * x[j]);
    out[j] *= chi;
  }
}

void CutoffField::jacobian(std::span<const double> x, double t, std::span<double> jac) const {
  std::vector<double> out(dim());
  eval_with_jacobian(x, t, out, jac);
}

std::size_t CutoffField::num_params() const { return param_inner().num_params(); }
std::vector<double> CutoffField::params() const { return param_inner().params(); }
void CutoffField::set_params(std::span<const double> theta) { param_inner().set_params(theta); }
std::vector<bool> CutoffField::trainable_mask() const { return param_inner().trainable_mask(); }
void CutoffField::scale_output(double factor) { param_inner().scale_output(factor); }

void CutoffField::eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
                          std::span<ad::Var> value, std::span<ad::Var> jac) const {
  const int d = dim();
  param_inner().eval_ad(theta, x, t, value, jac);
  for (int j = 0; j < d; ++j) {
    const ad::Var chi = x[j] * (1.0 - x[j]);
    if (!jac.empty()) {
      for (int k = 0; k < d; ++k) jac[j * d + k] = jac[j * d + k] * chi;
      jac[j * d + j] = jac[j * d + j] + value[j] * (1.0 - 2.0 * x[j]);
    }
    value[j] = value[j] * chi;
  }
}

std::unique_ptr<ParametricField> CutoffField::clone() const {
  std::shared_ptr<VelocityField> inner = param_inner().clone();
  return std::make_unique<CutoffField>(std::move(inner));
}

void ConstantInner::eval(std::span<const double>, double, std::span<double> out) const {
  std::fill(out.begin(), out.end(), v_);
}

void ConstantInner::jacobian(std::span<const double>, double, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
}

// ---- norms ----

FieldNormReport measure_field_norms(const VelocityField& f, int probes) {
  const int d = f.dim(), D = d + 1;
  const auto pts = sup_probe_set(D, probes, 5);
  const double h = 1e-4, delta = 1e-3;
  std::vector<double> w2(pts.size()), lip(pts.size());
  parallel_for(pts.size(), [&](std::size_t k) {
    std::vector<double> c(pts[k]);
    for (double& v : c) v = std::clamp(v, 2 * h, 1.0 - 2 * h);
    auto F = [&](const std::vector<double>& z, std::vector<double>& out) {
      f.eval(std::span<const double>(z.data(), d), z[d], out);
    };
    std::vector<double> f0(d), fa(d), fb(d), fc(d), fd(d), z(c);
    F(c, f0);
    double m = 0.0;
    for (int a = 0; a < D; ++a) {
      for (int b = a; b < D; ++b) {
        if (a == b) {
          z = c;
          z[a] += h;
          F(z, fa);
          z[a] -= 2 * h;
          F(z, fb);
          for (int j = 0; j < d; ++j) m = std::max(m, std::abs((fa[j] - 2 * f0[j] + fb[j]) / (h * h)));
        } else {
          z = c;
          z[a] += h;
          z[b] += h;
          F(z, fa);
          z[b] -= 2 * h;
          F(z, fb);
          z[a] -= 2 * h;
          F(z, fd);
          z[b] += 2 * h;
          F(z, fc);
          for (int j = 0; j < d; ++j) m = std::max(m, std::abs((fa[j] - fb[j] - fc[j] + fd[j]) / (4 * h * h)));
        }
      }
    }
    w2[k] = m;

    RngStream rng(0x6c6970ULL, k);
    std::vector<double> x(pts[k].begin(), pts[k].begin() + d), y(d), ga(d * d), gb(d * d);
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
      y[i] = std::clamp(x[i] + delta * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
      norm2 += (y[i] - x[i]) * (y[i] - x[i]);
    }
    if (norm2 == 0.0) {
      lip[k] = 0.0;
      return;
    }
    f.jacobian(x, pts[k][d], ga);
    f.jacobian(y, pts[k][d], gb);
    double g = 0.0;
    for (int e = 0; e < d * d; ++e) g = std::max(g, std::abs(ga[e] - gb[e]));
    lip[k] = g / std::sqrt(norm2);
  });
  FieldNormReport rep;
  rep.probe_count = static_cast<int>(pts.size());
  rep.c1_norm = c1_sup(f, pts);
  const double w2max = pts.empty() ? 0.0 : *std::max_element(w2.begin(), w2.end());
  rep.w2inf_norm = std::max(rep.c1_norm, w2max);
  rep.lip_of_gradient = pts.empty() ? 0.0 : *std::max_element(lip.begin(), lip.end());
  return rep;
}

double project_norm_ball(ParametricField& f, double r, const FieldNormReport& report) {
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "norm ball radius must be positive");
  if (report.w2inf_norm <= r) return 1.0;
  const double factor = r / report.w2inf_norm;
  f.scale_output(factor);
  return factor;
}

NetworkSpec project_norm_ball(const NetworkSpec& net, double r, const FieldNormReport& report) {
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "norm ball radius must be positive");
  if (report.w2inf_norm <= r) return net;
  NetworkSpec out = net;
  scale_output_layer(out, r / report.w2inf_norm);
  return out;
}

// ---- serialization ----

nlohmann::json field_to_json(const ParametricField& f) {
  nlohmann::json j;
  j["format"] = "cubeflow.field";
  j["version"] = 1;
  if (auto* n = dynamic_cast<const NetworkField*>(&f)) {
    j["kind"] = "network";
    j["network"] = network_to_json(n->spec());
  } else if (auto* s = dynamic_cast<const SplineField*>(&f)) {
    j["kind"] = "spline";
    j["dim"] = s->dim();
    j["order"] = s->order();
    j["n_x"] = s->n_x();
    j["n_t"] = s->n_t();
    j["coefficients"] = s->params();
  } else if (auto* c = dynamic_cast<const CutoffField*>(&f)) {
    auto* inner = dynamic_cast<const ParametricField*>(&c->inner());
    if (!inner) throw Error(ErrorKind::InvalidArgument, "cannot serialize non-parametric cutoff inner field");
    j["kind"] = "cutoff";
    j["inner"] = field_to_json(*inner);
  } else if (auto* l = dynamic_cast<const LogisticField*>(&f)) {
    j["kind"] = "logistic";
    j["dim"] = l->dim();
    j["c"] = l->rate();
  } else {
    throw Error(ErrorKind::InvalidArgument, "unsupported field type for serialization: " + f.describe());
  }
  return j;
}

std::unique_ptr<ParametricField> field_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cubeflow.field" || j.at("version") != 1)
      throw Error(ErrorKind::ConfigError, "not a version-1 field document");
    const std::string kind = j.at("kind");
    if (kind == "network") return std::make_unique<NetworkField>(network_from_json(j.at("network")));
    if (kind == "spline") {
      auto s = std::make_unique<SplineField>(j.at("dim").get<int>(), j.at("order").get<int>(), j.at("n_x").get<int>(),
                                             j.at("n_t").get<int>());
      s->set_params(j.at("coefficients").get<std::vector<double>>());
      return s;
    }
    if (kind == "cutoff") {
      std::shared_ptr<VelocityField> inner = field_from_json(j.at("inner"));
      return std::make_unique<CutoffField>(std::move(inner));
    }
    if (kind == "logistic") return std::make_unique<LogisticField>(j.at("dim").get<int>(), j.at("c").get<double>());
    throw Error(ErrorKind::ConfigError, "unknown field kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad field document: ") + e.what());
  }
}

}  // namespace cubeflow

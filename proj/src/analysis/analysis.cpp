#include "cubeflow/analysis/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/json_util.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/fields/fields.hpp"
#include "cubeflow/transport/kr_map.hpp"

namespace cubeflow {

// ---- distances ----

namespace {

double root_gap2(double a, double b) {
  if (!(a >= 0.0) || !(b >= 0.0)) throw Error(ErrorKind::NegativeDensity, "density is negative or NaN at a node");
  const double r = std::sqrt(a) - std::sqrt(b);
  return r * r;
}

}  // namespace

HellingerEstimate hellinger(const DensityFn& p, const DensityFn& q, int dim, const QuadratureGrid& grid) {
  const auto nodes = tensor_nodes(grid, dim);
  const int m = grid.nodes_per_axis;
  std::vector<double> part(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    double w = 1.0;
    std::size_t rem = i;
    for (int a = dim - 1; a >= 0; --a) {
      w *= grid.weights[rem % m];
      rem /= m;
    }
    part[i] = w * root_gap2(p(nodes[i]), q(nodes[i]));
  });
  HellingerEstimate e;
  e.h2 = std::accumulate(part.begin(), part.end(), 0.0);
  e.value = std::sqrt(e.h2);
  e.method = "quadrature";
  return e;
}

HellingerEstimate hellinger_monte_carlo(const DensityFn& p, const DensityFn& q, int dim, int samples, RngStream rng) {
  const auto mc = integrate_monte_carlo([&](std::span<const double> x) { return root_gap2(p(x), q(x)); }, dim, samples,
                                        rng);
  HellingerEstimate e;
  e.h2 = mc.value;
  e.value = std::sqrt(std::max(0.0, mc.value));
  e.method = "monte_carlo";
  e.standard_error = mc.standard_error;
  return e;
}

double linf_density_gap(const DensityFn& p, const DensityFn& q, const std::vector<std::vector<double>>& probes) {
  std::vector<double> g(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) { g[i] = std::abs(p(probes[i]) - q(probes[i])); });
  return g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
}

DensityFn pullback_fn(std::shared_ptr<const VelocityField> f, const AnalyticDensity& rho, const FlowConfig& cfg) {
  return [f = std::move(f), rho, cfg](std::span<const double> x) {
    return pullback_density(*f, rho, CubePoint::clamped(std::vector<double>(x.begin(), x.end())), cfg);
  };
}

double ck_rate_exponent(int k, int d, double gamma) {
  const double hi = k - d / 2.0 - 1.5;
  if (!(hi > 0.0)) throw Error(ErrorKind::HypothesisViolated, "gamma window (0, k - d/2 - 3/2) is empty");
  if (!(gamma > 0.0 && gamma < hi)) throw Error(ErrorKind::HypothesisViolated, "gamma outside (0, k - d/2 - 3/2)");
  const double a = 2.0 * (k - 1 - gamma);
  return a / (a + d + 1);
}

double nn_rate_exponent(int k, int d) { return 2.0 * (k - 1) / (d + 1 + 2.0 * (k - 1)); }

// ---- bound suite ----

namespace {

bool holds(double lhs, double rhs) { return lhs <= rhs * (1.0 + 1e-9) + 1e-12; }

void add_row(BoundSuiteReport& r, std::string ineq, std::string subj, double lhs, double rhs) {
  r.rows.push_back({std::move(ineq), std::move(subj), lhs, rhs, rhs - lhs, holds(lhs, rhs)});
}

struct MapProbe {
  std::vector<double> y, J, sv;
  double density = 0.0;
};

std::vector<MapProbe> probe_map(const VelocityField& f, const AnalyticDensity& rho,
                                const std::vector<std::vector<double>>& probes, const FlowConfig& cfg) {
  FlowConfig c = cfg;
  c.jacobian_mode = JacobianMode::full_matrix;
  const int d = f.dim();
  std::vector<MapProbe> out(probes.size());
  parallel_for(probes.size(), [&](std::size_t k) {
    const auto r = integrate_flow(f, CubePoint(probes[k]), c);
    MapProbe& mp = out[k];
    mp.y = r.terminal.vec();
    mp.J = *r.jacobian;
    mp.sv = singular_values(mp.J, d);
    mp.density = rho(mp.y) * std::exp(r.logdet);
  });
  return out;
}

}  // namespace

std::vector<BoundCorpus> default_bound_corpus() {
  auto kr_field = [](const AnalyticDensity& p0, const AnalyticDensity& rho) {
    auto T = std::make_shared<TriangularMap>(build_kr_map(p0, rho, default_grid_res(p0.dim)));
    return std::shared_ptr<const VelocityField>(straight_line_field(std::move(T)));
  };
  auto net = [](int d, std::uint64_t seed) {
    RngStream rng(seed, 0);
    NetworkArch a;
    a.d_in = d + 1;
    a.d_out = d;
    a.L = 2;
    a.W = 6;
    a.B_cap = 5.0;
    NetworkSpec s = init_network(a, rng);
    scale_output_layer(s, 0.5);
    return std::shared_ptr<const VelocityField>(apply_cutoff(std::make_shared<NetworkField>(s)));
  };
  std::vector<BoundCorpus> out;
  for (int d : {1, 2}) {
    const auto zero = std::make_shared<ZeroField>(d);
    const auto l10 = std::make_shared<LogisticField>(d, 1.0), l11 = std::make_shared<LogisticField>(d, 1.1);
    const auto na = net(d, 100 + d), nb = net(d, 200 + d);
    BoundCorpus u{"uniform" + std::to_string(d), uniform_density(d), {}, {}};
    u.fields = {{"zero", zero}, {"logistic1.0", l10}, {"logistic1.1", l11}, {"net_a", na}};
    u.pairs = {{"zero~zero", zero, zero}, {"logistic1.0~logistic1.1", l10, l11}, {"zero~logistic1.0", zero, l10},
               {"net_a~net_b", na, nb}};
    const std::vector<AnalyticDensity> targets =
        d == 1 ? std::vector<AnalyticDensity>{affine_density(), cosine_density(0.5)}
               : std::vector<AnalyticDensity>{bilinear_density(0.5), make_density("affine_product", {{"dim", 2}})};
    for (const auto& p0 : targets) u.fields.push_back({"straight_line:" + p0.name, kr_field(p0, u.rho)});
    out.push_back(std::move(u));

    BoundCorpus nu{"nonuniform" + std::to_string(d), d == 1 ? affine_density() : bilinear_density(0.5), {}, {}};
    nu.fields = {{"zero", zero}, {"logistic1.0", l10}, {"net_b", nb}};
    nu.pairs = {{"logistic1.0~logistic1.1", l10, l11}, {"net_a~net_b", na, nb}};
    out.push_back(std::move(nu));
  }
  return out;
}

BoundSuiteReport run_bound_suite(const std::vector<BoundCorpus>& corpus, const BoundSuiteConfig& cfg) {
  BoundSuiteReport rep;
  for (const auto& c : corpus) {
    const AnalyticDensity& rho = c.rho;
    const int d = rho.dim;
    const auto probes = halton_points(cfg.probes, d);
    const auto xt_probes = sup_probe_set(d + 1, cfg.norm_probes, 5);
    for (const auto& sf : c.fields) {
      const VelocityField& f = *sf.field;
      const std::string subj = c.name + "/" + sf.name;
      const double M = c1_sup(f, xt_probes);
      const double bound = singular_value_bound(d, M);
      const auto mp = probe_map(f, rho, probes, cfg.flow);
      double lam1 = 0.0, lamd = INFINITY, pmin = INFINITY, pmax = 0.0;
      for (const auto& p : mp) {
        lam1 = std::max(lam1, p.sv.front());
        lamd = std::min(lamd, p.sv.back());
        pmin = std::min(pmin, p.density);
        pmax = std::max(pmax, p.density);
      }
      add_row(rep, "singular_value_upper", subj, lam1, bound);
      add_row(rep, "singular_value_lower", subj, 1.0 / bound, lamd);
      add_row(rep, "pullback_lower", subj, rho.lower_bound * std::pow(bound, -d), pmin);
      add_row(rep, "pullback_upper", subj, pmax, rho.upper_bound * std::pow(bound, d));
    }
    for (const auto& pr : c.pairs) {
      const std::string subj = c.name + "/" + pr.name;
      const auto nf = measure_field_norms(*pr.f, cfg.norm_probes), ng = measure_field_norms(*pr.g, cfg.norm_probes);
      const double r = std::max({nf.radius(), ng.c1_norm, 1e-3});
      const auto lip = flow_lipschitz_audit(*pr.f, *pr.g, r, cfg.probes, cfg.flow);
      add_row(rep, "flow_lipschitz", subj, lip.map_gap, lip.constant * lip.field_gap);

      // sup density gap against ||T-G||_{C^1} (|rho|_Lip ||T||_{C^1}^d + C~ d^2 ||rho||_C)
      const auto a = probe_map(*pr.f, rho, probes, cfg.flow), b = probe_map(*pr.g, rho, probes, cfg.flow);
      double gap = 0.0, tg = 0.0, tc1 = 0.0, ctilde = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        gap = std::max(gap, std::abs(a[k].density - b[k].density));
        for (int i = 0; i < d; ++i) {
          tg = std::max(tg, std::abs(a[k].y[i] - b[k].y[i]));
          tc1 = std::max(tc1, std::abs(a[k].y[i]));
        }
        for (std::size_t e = 0; e < a[k].J.size(); ++e) {
          tg = std::max(tg, std::abs(a[k].J[e] - b[k].J[e]));
          tc1 = std::max(tc1, std::abs(a[k].J[e]));
        }
        const auto &lam = a[k].sv, &eta = b[k].sv;
        double s = 0.0, prod = 1.0;
        for (int i = 0; i < d; ++i) {
          s += std::abs(lam[i] - eta[i]) / lam[d - 1];
          prod *= lam[i];
        }
        ctilde = std::max(ctilde, std::exp(s) * prod / std::min(lam[d - 1], eta[d - 1]));
      }
      const double rhs = tg * (rho.lipschitz * std::pow(tc1, d) + ctilde * d * d * rho.upper_bound);
      add_row(rep, "linf_density_stability", subj, gap, rhs);
    }
  }
  rep.pass = std::all_of(rep.rows.begin(), rep.rows.end(), [](const BoundRow& r) { return r.pass; });
  return rep;
}

nlohmann::json bound_report_to_json(const BoundSuiteReport& r) {
  nlohmann::json j;
  j["pass"] = r.pass;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"inequality", row.inequality},
                         {"subject", row.subject},
                         {"lhs", row.lhs},
                         {"rhs", row.rhs},
                         {"margin", row.margin},
                         {"pass", row.pass}});
  return j;
}

// ---- rate experiments ----

void RateExperimentSpec::validate() const {
  if (n_grid.size() < 2) throw Error(ErrorKind::ConfigError, "n_grid needs at least two sizes");
  if (replicates < 3) throw Error(ErrorKind::ConfigError, "replicates must be >= 3");
  for (int n : n_grid)
    if (n < 2) throw Error(ErrorKind::ConfigError, "sample sizes must be >= 2");
  if (!allow_large) {
    if (replicates > 10) throw Error(ErrorKind::ConfigError, "replicates > 10 needs allow_large");
    if (*std::max_element(n_grid.begin(), n_grid.end()) > 4000)
      throw Error(ErrorKind::ConfigError, "n > 4000 needs allow_large");
  }
  if (estimator.kind != "spline" && estimator.kind != "network")
    throw Error(ErrorKind::ConfigError, "estimator.kind must be \"spline\" or \"network\"");
  if (estimator.order < 2 || estimator.n_t < 1 || !(estimator.width_constant > 0.0))
    throw Error(ErrorKind::ConfigError, "estimator needs order >= 2, n_t >= 1, width_constant > 0");
  if (quadrature_nodes < 2 || bootstrap < 0) throw Error(ErrorKind::ConfigError, "bad quadrature_nodes or bootstrap");
  train.validate();
}

void to_json(nlohmann::json& j, const RateExperimentSpec& s) {
  j = {{"target", s.target},
       {"target_params", s.target_params},
       {"estimator",
        {{"kind", s.estimator.kind},
         {"order", s.estimator.order},
         {"width_constant", s.estimator.width_constant},
         {"exponent", s.estimator.exponent},
         {"n_t", s.estimator.n_t},
         {"k", s.estimator.k}}},
       {"n_grid", s.n_grid},
       {"replicates", s.replicates},
       {"seed", s.seed},
       {"train", s.train},
       {"quadrature_nodes", s.quadrature_nodes},
       {"bootstrap", s.bootstrap},
       {"record_time", s.record_time},
       {"allow_large", s.allow_large}};
}

void from_json(const nlohmann::json& j, RateExperimentSpec& out) {
  using jsonutil::read;
  RateExperimentSpec s = out;
  jsonutil::reject_unknown(j,
                           {"target", "target_params", "estimator", "n_grid", "replicates", "seed", "train",
                            "quadrature_nodes", "bootstrap", "record_time", "allow_large"},
                           "rate");
  read(j, "target", s.target, "rate");
  read(j, "target_params", s.target_params, "rate");
  read(j, "n_grid", s.n_grid, "rate");
  read(j, "replicates", s.replicates, "rate");
  read(j, "seed", s.seed, "rate");
  read(j, "quadrature_nodes", s.quadrature_nodes, "rate");
  read(j, "bootstrap", s.bootstrap, "rate");
  read(j, "record_time", s.record_time, "rate");
  read(j, "allow_large", s.allow_large, "rate");
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    jsonutil::reject_unknown(e, {"kind", "order", "width_constant", "exponent", "n_t", "k"}, "rate.estimator");
    read(e, "kind", s.estimator.kind, "rate.estimator");
    read(e, "order", s.estimator.order, "rate.estimator");
    read(e, "width_constant", s.estimator.width_constant, "rate.estimator");
    read(e, "exponent", s.estimator.exponent, "rate.estimator");
    read(e, "n_t", s.estimator.n_t, "rate.estimator");
    read(e, "k", s.estimator.k, "rate.estimator");
  }
  if (j.contains("train")) from_json(j.at("train"), s.train);
  s.validate();
  out = s;
}

std::unique_ptr<ParametricField> make_estimator(const EstimatorSpec& e, int dim, int n, std::uint64_t seed) {
  if (e.kind == "spline") {
    const int nx = std::max(2, static_cast<int>(std::lround(e.width_constant * std::pow(double(n), e.exponent))));
    auto inner = std::make_shared<SplineField>(dim, e.order, nx, e.n_t);
    return std::make_unique<CutoffField>(std::move(inner));
  }
  const ScalingPlan plan = nn_scaling_plan(n, e.k, dim);
  NetworkArch a;
  a.d_in = dim + 1;
  a.d_out = dim;
  a.L = plan.L;
  a.W = static_cast<int>(plan.W);
  a.S_target = plan.S;
  a.B_cap = plan.B;
  a.activation_power = 2;
  RngStream rng(seed, 0x6e6574);
  NetworkSpec net = init_network(a, rng);
  scale_output_layer(net, 0.01);
  return std::make_unique<CutoffField>(std::make_shared<NetworkField>(std::move(net)));
}

namespace {

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

RateResult rate_experiment(const RateExperimentSpec& spec) {
  spec.validate();
  const AnalyticDensity p0 = make_density(spec.target, spec.target_params);
  const int d = p0.dim;
  const AnalyticDensity rho = uniform_density(d);
  const QuadratureGrid grid = QuadratureGrid::gauss_legendre(spec.quadrature_nodes);

  RateResult res;
  res.spec = spec;
  const std::size_t R = spec.replicates, G = spec.n_grid.size();
  res.cells.resize(G * R);
  parallel_for(G * R, [&](std::size_t idx) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    RateCell& cell = res.cells[idx];
    cell.n = spec.n_grid[idx / R];
    cell.replicate = static_cast<int>(idx % R);
    const std::uint64_t stream = (static_cast<std::uint64_t>(cell.n) << 16) | static_cast<std::uint64_t>(cell.replicate);
    try {
      const Dataset data = sample_dataset(p0, cell.n, spec.seed, stream);
      const auto init = make_estimator(spec.estimator, d, cell.n, splitmix64(spec.seed ^ stream));
      TrainConfig tc = spec.train;
      tc.seed = splitmix64(spec.seed + stream);
      auto fr = fit(*init, data, rho, tc);
      cell.objective = fr.trace.best_objective;
      std::shared_ptr<const VelocityField> f(std::move(fr.field));
      cell.h2 = hellinger(pullback_fn(f, rho, tc.flow), [&](std::span<const double> x) { return p0(x); }, d, grid).h2;
      cell.ok = true;
    } catch (const Error& e) {
      cell.error = e.what();
    }
    if (spec.record_time) cell.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  });

  res.complete = std::all_of(res.cells.begin(), res.cells.end(), [](const RateCell& c) { return c.ok; });
  res.theoretical_slope = -nn_rate_exponent(spec.estimator.k, d);
  if (!res.complete) return res;
  std::vector<double> lx(G), ly(G);
  res.mean_h2.assign(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t r = 0; r < R; ++r) res.mean_h2[g] += res.cells[g * R + r].h2 / R;
    lx[g] = std::log(double(spec.n_grid[g]));
    ly[g] = std::log(res.mean_h2[g]);
  }
  res.slope = ols_slope(lx, ly);
  res.monotone = true;
  for (std::size_t g = 1; g < G; ++g) res.monotone = res.monotone && res.mean_h2[g] <= res.mean_h2[g - 1];

  // replicate bootstrap band (2.5%, 97.5%)
  if (spec.bootstrap > 0) {
    RngStream rng(spec.seed, 0x626f6f74);
    std::vector<double> slopes(spec.bootstrap);
    for (int b = 0; b < spec.bootstrap; ++b) {
      std::vector<double> y(G);
      for (std::size_t g = 0; g < G; ++g) {
        double m = 0.0;
        for (std::size_t r = 0; r < R; ++r) m += res.cells[g * R + static_cast<std::size_t>(rng.uniform() * R)].h2 / R;
        y[g] = std::log(m);
      }
      slopes[b] = ols_slope(lx, y);
    }
    std::sort(slopes.begin(), slopes.end());
    res.band_lo = slopes[static_cast<std::size_t>(0.025 * (spec.bootstrap - 1))];
    res.band_hi = slopes[static_cast<std::size_t>(0.975 * (spec.bootstrap - 1))];
  } else {
    res.band_lo = res.band_hi = res.slope;
  }
  return res;
}

nlohmann::json rate_result_to_json(const RateResult& r) {
  nlohmann::json j;
  j["spec"] = r.spec;
  j["complete"] = r.complete;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cj = {{"n", c.n}, {"replicate", c.replicate}, {"ok", c.ok}, {"h2", c.h2}, {"objective", c.objective}};
    if (r.spec.record_time) cj["seconds"] = c.seconds;
    if (!c.ok) cj["error"] = c.error;
    j["cells"].push_back(cj);
  }
  j["mean_h2"] = r.mean_h2;
  j["slope"] = r.slope;
  j["slope_band"] = {r.band_lo, r.band_hi};
  j["monotone"] = r.monotone;
  j["theoretical_slope"] = r.theoretical_slope;
  return j;
}

void write_rate_csv(std::ostream& os, const RateResult& r) {
  os << "n,replicate,h2,objective,seconds\n" << std::setprecision(17);
  for (const auto& c : r.cells)
    os << c.n << ',' << c.replicate << ',' << c.h2 << ',' << c.objective << ',' << c.seconds << '\n';
}

}  // namespace cubeflow

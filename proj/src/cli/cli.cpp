#include "cubeflow/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "cubeflow/analysis/analysis.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/json_util.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/fields/fields.hpp"
#include "cubeflow/mle/mle.hpp"
#include "cubeflow/splinenn/compile.hpp"
#include "cubeflow/splinenn/quasi_interp.hpp"
#include "cubeflow/transport/kr_map.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cubeflow::cli {

using jsonutil::read;
using jsonutil::reject_unknown;

std::vector<std::string> command_names() { return {"kr", "fit", "rate", "verify", "spline", "sample", "eval"}; }

json parse_config_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::ConfigError,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

int locate_key_line(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

void atomic_write(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::IoError, "cannot open " + tmp.string());
    os << contents;
    if (!os) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "rename to " + path.string() + " failed: " + ec.message());
}

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json density_to_json(const std::string& name, const std::map<std::string, double>& params) {
  return {{"name", name}, {"params", params}};
}

struct DensitySpec {
  std::string name = "uniform";
  std::map<std::string, double> params;
};

DensitySpec density_spec(const json& j, const std::string& where) {
  DensitySpec s;
  if (j.is_string()) {
    s.name = j.get<std::string>();
    return s;
  }
  reject_unknown(j, {"name", "params"}, where);
  read(j, "name", s.name, where);
  read(j, "params", s.params, where);
  return s;
}

AnalyticDensity make(const DensitySpec& s) {
  try {
    return make_density(s.name, s.params);
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
}

json spec_json(const DensitySpec& s) { return density_to_json(s.name, s.params); }

}  // namespace

AnalyticDensity density_from_json(const json& j, const std::string& where) { return make(density_spec(j, where)); }

FlowConfig flow_config_from_json(const json& j, const std::string& where) {
  FlowConfig c;
  reject_unknown(j, {"n_steps", "clamp_tol", "jacobian_mode"}, where);
  read(j, "n_steps", c.n_steps, where);
  read(j, "clamp_tol", c.clamp_tol, where);
  if (j.contains("jacobian_mode")) {
    std::string m;
    read(j, "jacobian_mode", m, where);
    try {
      c.jacobian_mode = jacobian_mode_from_string(m);
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, e.what());
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return c;
}

json flow_config_to_json(const FlowConfig& c) {
  return {{"n_steps", c.n_steps}, {"clamp_tol", c.clamp_tol}, {"jacobian_mode", to_string(c.jacobian_mode)}};
}

namespace {

struct Context {
  const json& cfg;
  const GlobalOptions& opt;
  std::ostream& out;
  std::ostream& err;
};

void write_resolved(const fs::path& dir, const json& resolved) { atomic_write(dir / "resolved_config.json", dump(resolved)); }

std::uint64_t seed_of(const json& cfg, const GlobalOptions& opt) {
  if (opt.seed) return *opt.seed;
  std::uint64_t s = 0;
  read(cfg, "seed", s, "config");
  return s;
}

std::shared_ptr<ParametricField> load_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ConfigError, "cannot read field file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return std::shared_ptr<ParametricField>(field_from_json(parse_config_text(ss.str(), path)));
}

// ---- kr ----

int cmd_kr(const Context& c) {
  reject_unknown(c.cfg, {"density", "reference", "grid_res", "residual_nodes", "inverse_probes", "probe_points", "seed"},
                 "kr config");
  if (!c.cfg.contains("density")) throw Error(ErrorKind::ConfigError, "kr config needs \"density\"");
  const DensitySpec ds = density_spec(c.cfg.at("density"), "density");
  const AnalyticDensity p0 = make(ds);
  DensitySpec rs{"uniform", {{"dim", double(p0.dim)}}};
  if (c.cfg.contains("reference")) rs = density_spec(c.cfg.at("reference"), "reference");
  const AnalyticDensity rho = make(rs);
  int res = default_grid_res(p0.dim), nodes = 16, inv = 200;
  read(c.cfg, "grid_res", res, "kr config");
  read(c.cfg, "residual_nodes", nodes, "kr config");
  read(c.cfg, "inverse_probes", inv, "kr config");
  std::vector<std::vector<double>> pts = {std::vector<double>(p0.dim, 0.5)};
  read(c.cfg, "probe_points", pts, "kr config");
  for (const auto& p : pts)
    if (static_cast<int>(p.size()) != p0.dim || !in_cube(p))
      throw Error(ErrorKind::ConfigError, "probe_points must lie in the cube of the density's dimension");

  const TriangularMap T = build_kr_map(p0, rho, res);
  const double residual = kr_pushforward_residual(T, p0, rho, QuadratureGrid::gauss_legendre(nodes));
  double inv_err = 0.0;
  for (const auto& x : halton_points(inv, p0.dim)) {
    const auto y = T.apply(x);
    inv_err = std::max(inv_err, sup_distance(T.inverse(y), x));
  }
  json report = {{"residual", residual}, {"inverse_consistency", inv_err}, {"grid_res", res}};
  report["probes"] = json::array();
  report["assertions"] = json::array();
  const bool analytic = rho.is_uniform() && p0.is_product &&
                        std::all_of(p0.marginals.begin(), p0.marginals.end(), [](const Marginal1D& m) { return bool(m.cdf); });
  for (const auto& x : pts) {
    const auto y = T.apply(x);
    report["probes"].push_back({{"x", x}, {"T", y}});
    if (analytic)
      for (int i = 0; i < p0.dim; ++i) {
        const double expect = p0.marginals[i].cdf(x[i]);
        report["assertions"].push_back({{"name", "T_" + std::to_string(i + 1)},
                                        {"x", x},
                                        {"value", y[i]},
                                        {"expected", expect},
                                        {"pass", std::abs(y[i] - expect) <= 1e-8}});
      }
  }
  fs::create_directories(c.opt.out);
  atomic_write(c.opt.out / "kr_map.json", T.to_json().dump() + "\n");
  atomic_write(c.opt.out / "kr_report.json", dump(report));
  write_resolved(c.opt.out, {{"density", spec_json(ds)},
                             {"reference", spec_json(rs)},
                             {"grid_res", res},
                             {"residual_nodes", nodes},
                             {"inverse_probes", inv},
                             {"probe_points", pts}});
  c.out << "kr: residual " << residual << ", inverse consistency " << inv_err << "\n";
  return kOk;
}

// ---- field classes ----

struct FieldClass {
  std::string kind = "spline";
  int order = 3;
  int n_x = 6;
  int n_t = 2;
  int depth = 2;
  int width = 8;
  long sparsity = -1;
  double weight_bound = 10.0;
  int activation_power = 2;
  double init_scale = 0.01;
  bool cutoff = true;
};

FieldClass field_class(const json& j) {
  FieldClass f;
  reject_unknown(j,
                 {"kind", "order", "n_x", "n_t", "depth", "width", "sparsity", "weight_bound", "activation_power",
                  "init_scale", "cutoff"},
                 "field");
  read(j, "kind", f.kind, "field");
  read(j, "order", f.order, "field");
  read(j, "n_x", f.n_x, "field");
  read(j, "n_t", f.n_t, "field");
  read(j, "depth", f.depth, "field");
  read(j, "width", f.width, "field");
  read(j, "sparsity", f.sparsity, "field");
  read(j, "weight_bound", f.weight_bound, "field");
  read(j, "activation_power", f.activation_power, "field");
  read(j, "init_scale", f.init_scale, "field");
  read(j, "cutoff", f.cutoff, "field");
  if (f.kind != "spline" && f.kind != "network") throw Error(ErrorKind::ConfigError, "field.kind must be spline or network");
  return f;
}

json field_class_json(const FieldClass& f) {
  return {{"kind", f.kind},         {"order", f.order},           {"n_x", f.n_x},
          {"n_t", f.n_t},           {"depth", f.depth},           {"width", f.width},
          {"sparsity", f.sparsity}, {"weight_bound", f.weight_bound}, {"activation_power", f.activation_power},
          {"init_scale", f.init_scale}, {"cutoff", f.cutoff}};
}

std::unique_ptr<ParametricField> build_field(const FieldClass& fc, int d, std::uint64_t seed) {
  std::shared_ptr<ParametricField> inner;
  if (fc.kind == "spline") {
    inner = std::make_shared<SplineField>(d, fc.order, fc.n_x, fc.n_t);
  } else {
    NetworkArch a;
    a.d_in = d + 1;
    a.d_out = d;
    a.L = fc.depth;
    a.W = fc.width;
    a.S_target = fc.sparsity;
    a.B_cap = fc.weight_bound;
    a.activation_power = fc.activation_power;
    RngStream rng(seed, 0x6e6574);
    NetworkSpec net = init_network(a, rng);
    scale_output_layer(net, fc.init_scale);
    inner = std::make_shared<NetworkField>(std::move(net));
  }
  if (!fc.cutoff) return inner->clone();
  return std::make_unique<CutoffField>(inner);
}

std::vector<CubePoint> read_points_csv(const std::string& path, int d) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ConfigError, "cannot read data file " + path);
  std::vector<CubePoint> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (static_cast<int>(v.size()) != d || !in_cube(v))
      throw Error(ErrorKind::ConfigError, path + ":" + std::to_string(lineno) + ": expected a point of [0,1]^" +
                                              std::to_string(d));
    pts.emplace_back(v);
  }
  return pts;
}

std::string points_csv(const std::vector<CubePoint>& pts, int d) {
  std::ostringstream os;
  for (int i = 0; i < d; ++i) os << (i ? "," : "") << "x" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (const auto& p : pts) {
    for (int i = 0; i < d; ++i) os << (i ? "," : "") << p[i];
    os << '\n';
  }
  return os.str();
}

// ---- fit ----

int cmd_fit(const Context& c) {
  reject_unknown(c.cfg, {"density", "reference", "data", "field", "init", "train", "seed", "record_time", "h2_nodes"},
                 "fit config");
  const std::uint64_t seed = seed_of(c.cfg, c.opt);
  std::optional<DensitySpec> ds;
  if (c.cfg.contains("density")) ds = density_spec(c.cfg.at("density"), "density");
  int n = 1000;
  std::string file, init_path;
  std::uint64_t stream = 0;
  int dim = ds ? make(*ds).dim : 0;
  if (c.cfg.contains("data")) {
    const auto& dj = c.cfg.at("data");
    reject_unknown(dj, {"n", "file", "stream", "dim"}, "data");
    read(dj, "n", n, "data");
    read(dj, "file", file, "data");
    read(dj, "stream", stream, "data");
    read(dj, "dim", dim, "data");
  }
  if (!ds && file.empty()) throw Error(ErrorKind::ConfigError, "fit needs a \"density\" to sample from or data.file");
  if (dim < 1) throw Error(ErrorKind::ConfigError, "data.dim is required with a data file and no density");
  DensitySpec rs{"uniform", {{"dim", double(dim)}}};
  if (c.cfg.contains("reference")) rs = density_spec(c.cfg.at("reference"), "reference");
  const AnalyticDensity rho = make(rs);
  FieldClass fc;
  if (c.cfg.contains("field")) fc = field_class(c.cfg.at("field"));
  read(c.cfg, "init", init_path, "fit config");
  TrainConfig tc;
  if (c.cfg.contains("train")) from_json(c.cfg.at("train"), tc);
  tc.seed = seed;
  bool record_time = false;
  int h2_nodes = 64;
  read(c.cfg, "record_time", record_time, "fit config");
  read(c.cfg, "h2_nodes", h2_nodes, "fit config");

  Dataset data = file.empty() ? sample_dataset(make(*ds), n, seed, stream) : make_dataset(dim, read_points_csv(file, dim), file);
  std::unique_ptr<ParametricField> init =
      init_path.empty() ? build_field(fc, dim, seed) : load_field(init_path)->clone();
  if (init->dim() != dim || rho.dim != dim) throw Error(ErrorKind::ConfigError, "field, data and reference dimensions differ");

  json resolved = {{"reference", spec_json(rs)},
                   {"data", {{"n", n}, {"file", file}, {"stream", stream}, {"dim", dim}}},
                   {"field", field_class_json(fc)},
                   {"init", init_path},
                   {"train", tc},
                   {"seed", seed},
                   {"record_time", record_time},
                   {"h2_nodes", h2_nodes}};
  if (ds) resolved["density"] = spec_json(*ds);
  fs::create_directories(c.opt.out);
  write_resolved(c.opt.out, resolved);

  FitResult fr;
  try {
    fr = fit(*init, data, rho, tc);
  } catch (const TrainingFailure& e) {
    std::ostringstream os;
    write_trace_csv(os, e.trace(), record_time);
    atomic_write(c.opt.out / "trace.csv", os.str());
    throw;
  }
  std::ostringstream os;
  write_trace_csv(os, fr.trace, record_time);
  atomic_write(c.opt.out / "trace.csv", os.str());
  atomic_write(c.opt.out / "field.json", dump(field_to_json(*fr.field)));
  json report = {{"best_objective", fr.trace.best_objective},
                 {"best_iter", fr.trace.best_iter},
                 {"mean_log_likelihood", data.points.empty() ? 0.0 : fr.trace.best_objective / data.points.size()},
                 {"step_halvings", fr.trace.step_halvings},
                 {"floor_hits", fr.trace.floor_hits},
                 {"n", data.points.size()}};
  if (ds) {
    const AnalyticDensity p0 = make(*ds);
    std::shared_ptr<const VelocityField> f(fr.field->clone());
    report["h2"] = hellinger(pullback_fn(f, rho, tc.flow), [&](std::span<const double> x) { return p0(x); }, dim,
                             QuadratureGrid::gauss_legendre(h2_nodes))
                       .h2;
  }
  atomic_write(c.opt.out / "fit_report.json", dump(report));
  c.out << "fit: best objective " << fr.trace.best_objective << " at iteration " << fr.trace.best_iter << "\n";
  return kOk;
}

// ---- rate ----

int cmd_rate(const Context& c) {
  json cfg = c.cfg;
  if (c.opt.seed) cfg["seed"] = *c.opt.seed;
  RateExperimentSpec spec;
  from_json(cfg, spec);
  fs::create_directories(c.opt.out);
  write_resolved(c.opt.out, json(spec));
  const RateResult r = rate_experiment(spec);
  atomic_write(c.opt.out / "rate.json", dump(rate_result_to_json(r)));
  std::ostringstream os;
  write_rate_csv(os, r);
  atomic_write(c.opt.out / "rate.csv", os.str());
  c.out << "rate: slope " << r.slope << " (theory " << r.theoretical_slope << "), band [" << r.band_lo << ", "
        << r.band_hi << "], " << (r.monotone ? "monotone" : "not monotone") << "\n";
  return r.complete ? kOk : kRuntimeFailure;
}

// ---- verify ----

int cmd_verify(const Context& c) {
  reject_unknown(c.cfg, {"probes", "norm_probes", "flow", "seed"}, "verify config");
  BoundSuiteConfig bc;
  read(c.cfg, "probes", bc.probes, "verify config");
  read(c.cfg, "norm_probes", bc.norm_probes, "verify config");
  if (c.cfg.contains("flow")) bc.flow = flow_config_from_json(c.cfg.at("flow"), "flow");
  fs::create_directories(c.opt.out);
  write_resolved(c.opt.out, {{"probes", bc.probes}, {"norm_probes", bc.norm_probes}, {"flow", flow_config_to_json(bc.flow)}});
  const auto rep = run_bound_suite(default_bound_corpus(), bc);
  atomic_write(c.opt.out / "verify.json", dump(bound_report_to_json(rep)));
  std::ostringstream t;
  t << std::left << std::setw(26) << "inequality" << std::setw(44) << "subject" << std::setw(16) << "lhs"
    << std::setw(16) << "rhs"
    << "ok\n";
  t << std::setprecision(8);
  for (const auto& row : rep.rows)
    t << std::setw(26) << row.inequality << std::setw(44) << row.subject << std::setw(16) << row.lhs << std::setw(16)
      << row.rhs << (row.pass ? "pass" : "FAIL") << "\n";
  atomic_write(c.opt.out / "verify.txt", t.str());
  const auto fails = std::count_if(rep.rows.begin(), rep.rows.end(), [](const BoundRow& r) { return !r.pass; });
  c.out << "verify: " << rep.rows.size() << " inequalities, " << fails << " failed\n";
  return rep.pass ? kOk : kBoundFailure;
}

// ---- spline ----

struct TestFunction {
  CubeFn f;
  std::function<double(std::span<const double>, std::span<const int>)> df;  // |alpha| <= 1
};

TestFunction test_function(const std::string& name, int k, int d) {
  if (name == "kink") {
    const double e = k + 0.1;
    TestFunction t;
    t.f = [e, d](std::span<const double> x) {
      double p = 1.0;
      for (int a = 0; a < d; ++a) p *= std::pow(std::abs(x[a] - 0.5), e);
      return p;
    };
    t.df = [e, d](std::span<const double> x, std::span<const int> alpha) {
      double p = 1.0;
      for (int a = 0; a < d; ++a) {
        const double u = x[a] - 0.5;
        const int r = alpha.empty() ? 0 : alpha[a];
        p *= r == 0 ? std::pow(std::abs(u), e) : e * std::pow(std::abs(u), e - 1) * (u < 0 ? -1.0 : 1.0);
      }
      return p;
    };
    return t;
  }
  if (name == "sin2pi") {
    return {[d](std::span<const double> x) {
              double p = 1.0;
              for (int a = 0; a < d; ++a) p *= std::sin(2 * std::numbers::pi * x[a]);
              return p;
            },
            {}};
  }
  if (name == "exp") {
    return {[d](std::span<const double> x) {
              double s = 0.0;
              for (int a = 0; a < d; ++a) s += x[a];
              return std::exp(s);
            },
            {}};
  }
  throw Error(ErrorKind::ConfigError, "unknown spline test function \"" + name + "\" (kink, sin2pi, exp)");
}

int cmd_spline(const Context& c) {
  reject_unknown(c.cfg, {"function", "m", "k", "d", "n_grid", "r", "probes_per_cell", "compile", "compile_n", "seed"},
                 "spline config");
  std::string fname = "kink";
  int m = 3, k = 2, d = 1, per_cell = 16, compile_n = 8;
  std::vector<int> n_grid = {8, 16, 32, 64}, rs = {0, 1};
  bool compile = true;
  read(c.cfg, "function", fname, "spline config");
  read(c.cfg, "m", m, "spline config");
  read(c.cfg, "k", k, "spline config");
  read(c.cfg, "d", d, "spline config");
  read(c.cfg, "n_grid", n_grid, "spline config");
  read(c.cfg, "r", rs, "spline config");
  read(c.cfg, "probes_per_cell", per_cell, "spline config");
  read(c.cfg, "compile", compile, "spline config");
  read(c.cfg, "compile_n", compile_n, "spline config");
  if (m < k + 1) throw Error(ErrorKind::ConfigError, "need m >= k + 1");
  if (d < 1 || d > 3) throw Error(ErrorKind::ConfigError, "d must be 1, 2 or 3");
  if (n_grid.size() < 2) throw Error(ErrorKind::ConfigError, "n_grid needs at least two sizes");
  if (compile && m < 3) throw Error(ErrorKind::UnsupportedOrder, "compilation needs m >= max(3, k+1)");
  const TestFunction tf = test_function(fname, k, d);

  fs::create_directories(c.opt.out);
  write_resolved(c.opt.out, {{"function", fname}, {"m", m}, {"k", k}, {"d", d}, {"n_grid", n_grid}, {"r", rs},
                             {"probes_per_cell", per_cell}, {"compile", compile}, {"compile_n", compile_n}});
  std::vector<double> ns(n_grid.begin(), n_grid.end());
  std::map<int, std::vector<double>> errs;
  for (int n : n_grid) {
    const auto qi = quasi_interpolate(tf.f, m, n, k, d);
    const auto probes = off_knot_probes(n, d, per_cell);
    for (int r : rs) errs[r].push_back(quasi_interp_error(tf.f, qi, r, probes, r <= 1 ? tf.df : nullptr));
  }
  std::ostringstream csv;
  csv << "n,r,error,slope\n" << std::setprecision(17);
  json report = {{"slopes", json::object()}, {"expected", json::object()}};
  for (int r : rs) {
    const double slope = loglog_slope(ns, errs[r]);
    report["slopes"][std::to_string(r)] = slope;
    report["expected"][std::to_string(r)] = -(k - r);
    for (std::size_t i = 0; i < ns.size(); ++i) csv << n_grid[i] << ',' << r << ',' << errs[r][i] << ',' << slope << '\n';
  }
  atomic_write(c.opt.out / "spline_errors.csv", csv.str());
  if (compile) {
    const auto qi = quasi_interpolate(tf.f, m, compile_n, k, d);
    const CompiledNetwork cn = compile_to_network(qi);
    double gap = 0.0, fsup = 0.0;
    for (const auto& p : off_knot_probes(compile_n, d, d == 1 ? 64 : 4)) {
      gap = std::max(gap, std::abs(eval_network(cn.net, p)[0] - qi(p)));
      fsup = std::max(fsup, std::abs(tf.f(p)));
    }
    atomic_write(c.opt.out / "network.json", network_to_json(cn.net).dump() + "\n");
    json audit = audit_to_json(audit_against_bounds(cn, fsup, cn.N));
    audit["N"] = cn.N;
    audit["constants"] = {{"C_L", cn.C_L}, {"C_N", cn.C_N}, {"C_B", cn.C_B}};
    audit["provenance"] = {{"spline_bank_units", cn.bank_units},
                           {"product_units", cn.product_units},
                           {"passthrough_units", cn.passthrough_units}};
    audit["fidelity"] = gap;
    atomic_write(c.opt.out / "audit.json", dump(audit));
    report["compile"] = {{"n", compile_n}, {"fidelity", gap}, {"audit_pass", audit["pass"]}};
  }
  atomic_write(c.opt.out / "spline_report.json", dump(report));
  c.out << "spline: slopes " << report["slopes"].dump() << "\n";
  return kOk;
}

// ---- sample ----

int cmd_sample(const Context& c) {
  reject_unknown(c.cfg, {"density", "field", "reference", "n", "seed", "flow"}, "sample config");
  const std::uint64_t seed = seed_of(c.cfg, c.opt);
  int n = 1000;
  read(c.cfg, "n", n, "sample config");
  std::string field_path;
  read(c.cfg, "field", field_path, "sample config");
  FlowConfig fcfg;
  if (c.cfg.contains("flow")) fcfg = flow_config_from_json(c.cfg.at("flow"), "flow");
  fs::create_directories(c.opt.out);
  json resolved = {{"n", n}, {"seed", seed}, {"flow", flow_config_to_json(fcfg)}};
  std::vector<CubePoint> pts;
  int d = 0;
  if (field_path.empty()) {
    if (!c.cfg.contains("density")) throw Error(ErrorKind::ConfigError, "sample needs \"density\" or \"field\"");
    const DensitySpec ds = density_spec(c.cfg.at("density"), "density");
    resolved["density"] = spec_json(ds);
    const Dataset data = sample_dataset(make(ds), n, seed);
    d = data.dim;
    pts = data.points;
  } else {
    const auto f = load_field(field_path);
    d = f->dim();
    DensitySpec rs{"uniform", {{"dim", double(d)}}};
    if (c.cfg.contains("reference")) rs = density_spec(c.cfg.at("reference"), "reference");
    resolved["field"] = field_path;
    resolved["reference"] = spec_json(rs);
    // draws from rho, pulled back through the inverse flow
    const Dataset ref = sample_dataset(make(rs), n, seed);
    FlowConfig inv = fcfg;
    inv.jacobian_mode = JacobianMode::none;
    pts.resize(ref.points.size());
    parallel_for(pts.size(), [&](std::size_t i) { pts[i] = inverse_flow(*f, ref.points[i], inv).terminal; });
  }
  write_resolved(c.opt.out, resolved);
  atomic_write(c.opt.out / "samples.csv", points_csv(pts, d));
  c.out << "sample: " << pts.size() << " points\n";
  return kOk;
}

// ---- eval ----

int cmd_eval(const Context& c) {
  reject_unknown(c.cfg, {"field", "reference", "points", "grid_per_axis", "flow", "seed"}, "eval config");
  std::string field_path;
  read(c.cfg, "field", field_path, "eval config");
  if (field_path.empty()) throw Error(ErrorKind::ConfigError, "eval needs \"field\"");
  const auto f = load_field(field_path);
  const int d = f->dim();
  DensitySpec rs{"uniform", {{"dim", double(d)}}};
  if (c.cfg.contains("reference")) rs = density_spec(c.cfg.at("reference"), "reference");
  const AnalyticDensity rho = make(rs);
  FlowConfig fcfg;
  if (c.cfg.contains("flow")) fcfg = flow_config_from_json(c.cfg.at("flow"), "flow");
  std::vector<std::vector<double>> pts;
  int per_axis = 11;
  read(c.cfg, "points", pts, "eval config");
  read(c.cfg, "grid_per_axis", per_axis, "eval config");
  if (pts.empty()) pts = boundary_grid(d, per_axis);
  for (const auto& p : pts)
    if (static_cast<int>(p.size()) != d || !in_cube(p)) throw Error(ErrorKind::ConfigError, "eval points must lie in the cube");
  fs::create_directories(c.opt.out);
  write_resolved(c.opt.out, {{"field", field_path},
                             {"reference", spec_json(rs)},
                             {"points", pts},
                             {"grid_per_axis", per_axis},
                             {"flow", flow_config_to_json(fcfg)}});
  std::vector<double> dens(pts.size()), ll(pts.size());
  std::vector<std::vector<double>> ys(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    ll[i] = point_log_likelihood(*f, rho, CubePoint(pts[i]), fcfg);
    dens[i] = std::exp(ll[i]);
    ys[i] = integrate_flow(*f, CubePoint(pts[i]), fcfg).terminal.vec();
  });
  std::ostringstream os;
  for (int i = 0; i < d; ++i) os << "x" << (i + 1) << ",";
  for (int i = 0; i < d; ++i) os << "y" << (i + 1) << ",";
  os << "density,log_likelihood\n" << std::setprecision(17);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    for (double v : pts[k]) os << v << ',';
    for (double v : ys[k]) os << v << ',';
    os << dens[k] << ',' << ll[k] << '\n';
  }
  atomic_write(c.opt.out / "eval.csv", os.str());
  c.out << "eval: " << pts.size() << " points\n";
  return kOk;
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::NonProductReference:
    case ErrorKind::InvalidArgument:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::UnsupportedOrder:
      return kConfigError;
    default:
      return kRuntimeFailure;
  }
}

}  // namespace

int run_command(const std::string& command, const json& config, const GlobalOptions& opt, std::ostream& out,
                std::ostream& err) {
  if (opt.threads) set_thread_count(*opt.threads);
  const Context c{config, opt, out, err};
  try {
    if (command == "kr") return cmd_kr(c);
    if (command == "fit") return cmd_fit(c);
    if (command == "rate") return cmd_rate(c);
    if (command == "verify") return cmd_verify(c);
    if (command == "spline") return cmd_spline(c);
    if (command == "sample") return cmd_sample(c);
    if (command == "eval") return cmd_eval(c);
    err << "error: unknown command \"" << command << "\"\n";
    return kConfigError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cubeflow: ODE flow density estimation on the unit cube"};
  app.require_subcommand(1);
  GlobalOptions opt;
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = "out";
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--threads", threads, "worker threads (falls back to CUBEFLOW_THREADS)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kOk : kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();
  opt.config = config_path;
  opt.out = out_dir;
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--threads")) opt.threads = threads;

  std::ifstream is(config_path);
  if (!is) {
    err << "error: cannot read config " << config_path << "\n";
    return kConfigError;
  }
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  json cfg;
  try {
    cfg = parse_config_text(text, config_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  std::ostringstream captured;
  const int code = run_command(command, cfg, opt, out, captured);
  std::string msg = captured.str();
  const auto pos = msg.find("unknown key \"");
  if (pos != std::string::npos) {
    const auto end = msg.find('"', pos + 13);
    const int line = locate_key_line(text, msg.substr(pos + 13, end - pos - 13));
    if (line > 0) msg.insert(msg.find("error: ") + 7, config_path + ":" + std::to_string(line) + ": ");
  }
  err << msg;
  return code;
}

}  // namespace cubeflow::cli

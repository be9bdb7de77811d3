// Acceptance runner: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cubeflow/analysis/analysis.hpp"
#include "cubeflow/cli/cli.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/core/quadrature.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/fields/fields.hpp"
#include "cubeflow/flow/flow.hpp"
#include "cubeflow/mle/mle.hpp"
#include "cubeflow/splinenn/compile.hpp"
#include "cubeflow/splinenn/quasi_interp.hpp"
#include "cubeflow/transport/kr_map.hpp"

using namespace cubeflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

std::vector<AnalyticDensity> low_dim_corpus() {
  std::vector<AnalyticDensity> out;
  for (auto& p : density_corpus())
    if (p.dim <= 2) out.push_back(p);
  return out;
}

std::shared_ptr<StraightLineField> corpus_field(const AnalyticDensity& p0, std::shared_ptr<TriangularMap>* map = nullptr) {
  auto T = std::make_shared<TriangularMap>(build_kr_map(p0, uniform_density(p0.dim), default_grid_res(p0.dim)));
  if (map) *map = T;
  return straight_line_field(T);
}

Outcome kr_exactness() {
  Outcome o;
  double res = 0.0, inv = 0.0;
  for (const auto& p0 : low_dim_corpus()) {
    const auto rho = uniform_density(p0.dim);
    const auto T = build_kr_map(p0, rho, default_grid_res(p0.dim));
    res = std::max(res, kr_pushforward_residual(T, p0, rho, QuadratureGrid::gauss_legendre(32)));
    for (const auto& x : halton_points(500, p0.dim)) inv = std::max(inv, sup_distance(T.inverse(T.apply(x)), x));
  }
  o.pass = res <= 1e-5 && inv <= 1e-9;
  o.detail = "residual " + fmt(res) + ", inverse " + fmt(inv);
  return o;
}

Outcome straight_line() {
  Outcome o;
  FlowConfig cfg;
  cfg.n_steps = 64;
  cfg.jacobian_mode = JacobianMode::none;
  double gap = 0.0;
  for (const auto& p0 : low_dim_corpus()) {
    std::shared_ptr<TriangularMap> T;
    const auto f = corpus_field(p0, &T);
    RngStream rng(2, p0.dim);
    const auto xs = sample_uniform(rng, 500, p0.dim);
    std::vector<double> g(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) {
      g[i] = sup_distance(integrate_flow(*f, xs[i], cfg).terminal.coords(), T->apply(xs[i].vec()));
    });
    for (double v : g) gap = std::max(gap, v);
  }
  o.pass = gap <= 1e-6;
  o.detail = "sup gap " + fmt(gap);
  return o;
}

Outcome exact_pullback() {
  Outcome o;
  FlowConfig cfg;
  double err = 0.0, mass = 0.0;
  for (const auto& p0 : low_dim_corpus()) {
    const auto f = corpus_field(p0);
    const auto rho = uniform_density(p0.dim);
    const auto probes = halton_points(200, p0.dim);
    std::vector<double> e(probes.size());
    parallel_for(probes.size(), [&](std::size_t i) {
      e[i] = std::abs(pullback_density(*f, rho, CubePoint(probes[i]), cfg) - p0(probes[i]));
    });
    for (double v : e) err = std::max(err, v);
    const double z = integrate(
        [&](std::span<const double> x) {
          return pullback_density(*f, rho, CubePoint(std::vector<double>(x.begin(), x.end())), cfg);
        },
        QuadratureGrid::gauss_legendre(p0.dim == 1 ? 32 : 20), p0.dim);
    mass = std::max(mass, std::abs(z - 1.0));
  }
  o.pass = err <= 1e-5 && mass <= 1e-5;
  o.detail = "sup error " + fmt(err) + ", mass error " + fmt(mass);
  return o;
}

Outcome bound_suite() {
  Outcome o;
  const auto rep = run_bound_suite(default_bound_corpus(), BoundSuiteConfig{});
  int fails = 0;
  for (const auto& r : rep.rows)
    if (!r.pass) {
      ++fails;
      o.detail += r.inequality + "[" + r.subject + "] ";
    }
  o.pass = rep.pass && !rep.rows.empty();
  o.detail = std::to_string(rep.rows.size()) + " inequalities, " + std::to_string(fails) + " failed " + o.detail;
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  FlowConfig cfg;
  auto data = [](int d, std::uint64_t seed) {
    RngStream rng(seed, 0);
    return make_dataset(d, sample_uniform(rng, 32, d), "uniform");
  };
  auto net = [](int d, std::uint64_t seed) {
    RngStream rng(seed, 0);
    NetworkArch a;
    a.d_in = d + 1;
    a.d_out = d;
    a.L = 2;
    a.W = 8;
    a.B_cap = 10.0;
    a.activation_power = 2;
    NetworkSpec n = init_network(a, rng);
    scale_output_layer(n, 0.8);
    return apply_cutoff(std::make_shared<NetworkField>(n));
  };
  auto spline = [](int d, std::uint64_t seed) {
    auto s = std::make_shared<SplineField>(d, 3, 4, 2);
    RngStream rng(seed, 1);
    std::vector<double> c(s->num_params());
    for (auto& v : c) v = 0.5 * rng.normal();
    s->set_params(c);
    return apply_cutoff(s);
  };
  double worst = 0.0;
  for (int d : {1, 2}) {
    const auto rho = d == 1 ? affine_density() : bilinear_density(0.5);
    worst = std::max(worst, directional_gradient_check(*net(d, 10 + d), data(d, d), rho, cfg, 10, 7));
    worst = std::max(worst, directional_gradient_check(*spline(d, 20 + d), data(d, 5 + d), rho, cfg, 10, 9));
  }
  o.pass = worst <= 1e-4;
  o.detail = "worst relative error " + fmt(worst);
  return o;
}

Outcome spline_rates() {
  Outcome o;
  const std::vector<double> ns = {8, 16, 32, 64};
  for (int k : {2, 3}) {
    const double e = k + 0.1;
    const CubeFn f = [e](std::span<const double> x) { return std::pow(std::abs(x[0] - 0.5), e); };
    const auto df = [e](std::span<const double> x, std::span<const int> a) {
      const double u = x[0] - 0.5;
      if (a.empty() || a[0] == 0) return std::pow(std::abs(u), e);
      return e * std::pow(std::abs(u), e - 1) * (u < 0 ? -1.0 : 1.0);
    };
    for (int r : {0, 1}) {
      std::vector<double> err;
      for (double n : ns) {
        const auto qi = quasi_interpolate(f, k + 1, int(n), k, 1);
        err.push_back(quasi_interp_error(f, qi, r, off_knot_probes(int(n), 1, 16), df));
      }
      const double slope = loglog_slope(ns, err);
      o.pass = o.pass && std::abs(slope + (k - r)) <= 0.3;
      o.detail += "k=" + std::to_string(k) + ",r=" + std::to_string(r) + ": " + fmt(slope) + " ";
    }
  }
  return o;
}

Outcome compilation() {
  Outcome o;
  const CubeFn f = [](std::span<const double> x) { return std::sin(2 * std::acos(-1.0) * x[0]); };
  double gap = 0.0;
  std::vector<double> L, W, S, B;
  bool audits = true;
  for (int m : {3, 4})
    for (int n : {8, 16, 32, 64}) {
      const auto qi = quasi_interpolate(f, m, n, m - 1, 1);
      const auto cn = compile_to_network(qi);
      for (const auto& p : off_knot_probes(n, 1, 1000 / n + 1))
        gap = std::max(gap, std::abs(eval_network(cn.net, p)[0] - qi(p)));
      audits = audits && audit_against_bounds(cn, 1.0, cn.N).pass;
      if (m == 3) {
        L.push_back(cn.net.audit.L);
        W.push_back(cn.net.audit.W);
        S.push_back(double(cn.net.audit.S));
        B.push_back(cn.net.audit.B);
      }
    }
  bool shapes = L.front() == L.back();
  const std::vector<double> ns = {8, 16, 32, 64};
  std::string slopes;
  for (const auto* v : {&W, &S, &B}) {
    const double s = loglog_slope(ns, *v);
    shapes = shapes && std::abs(s - 1.0) <= 0.2;
    slopes += fmt(s) + " ";
  }
  o.pass = gap <= 1e-8 && audits && shapes;
  o.detail = "fidelity " + fmt(gap) + ", W/S/B slopes " + slopes + (audits ? "audit ok" : "audit FAILED");
  return o;
}

Outcome statistical_rate(const fs::path& config) {
  Outcome o;
  std::ifstream is(config);
  if (!is) return {false, "missing " + config.string()};
  RateExperimentSpec spec;
  from_json(nlohmann::json::parse(is), spec);
  const auto r = rate_experiment(spec);
  const bool slope_ok = std::abs(r.slope - r.theoretical_slope) <= 0.2;
  o.pass = r.complete && r.monotone && slope_ok;
  o.detail = "slope " + fmt(r.slope) + " (theory " + fmt(r.theoretical_slope) + "), " +
             (r.monotone ? "monotone" : "not monotone") + ", mean h2:";
  for (double m : r.mean_h2) o.detail += " " + fmt(m);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "cubeflow_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  struct Job {
    std::string command, config;
  };
  const std::vector<Job> jobs = {
      {"kr", R"({"density": {"name": "bilinear", "params": {"dim": 2}}})"},
      {"fit", R"({"density": {"name": "affine", "params": {"dim": 1}}, "data": {"n": 300},
                  "train": {"iterations": 8, "step_size": 0.05, "norm_ball_r": 20, "norm_probes": 32}, "seed": 4})"},
      {"rate", R"({"n_grid": [40, 80], "replicates": 3, "bootstrap": 20,
                   "train": {"iterations": 4, "flow": {"n_steps": 8}}, "seed": 5})"},
      {"verify", R"({"probes": 32, "norm_probes": 64})"},
      {"spline", R"({"function": "kink", "m": 4, "k": 3})"},
      {"sample", R"({"density": {"name": "bilinear", "params": {"dim": 2}}, "n": 200, "seed": 6})"},
      {"eval", R"({"field": "FIELD", "grid_per_axis": 9})"},
  };
  const int saved = thread_count();
  std::vector<std::string> bad;
  for (const auto& job : jobs) {
    std::string text = job.config;
    if (const auto pos = text.find("FIELD"); pos != std::string::npos)
      text.replace(pos, 5, (root / "fit_t1" / "field.json").string());
    const fs::path cfg = root / (job.command + ".json");
    std::ofstream(cfg) << text;
    std::vector<fs::path> dirs;
    for (int t : {1, 4}) {
      const fs::path out = root / (job.command + "_t" + std::to_string(t));
      const std::string ts = std::to_string(t), cs = cfg.string(), os = out.string();
      const char* argv[] = {"cubeflow", job.command.c_str(), "--config", cs.c_str(), "--out", os.c_str(), "--threads", ts.c_str()};
      std::ostringstream sink, err;
      const int code = cli::run(8, argv, sink, err);
      if (code != 0) bad.push_back(job.command + " exit " + std::to_string(code) + " " + err.str());
      dirs.push_back(out);
    }
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      const fs::path other = dirs[1] / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) bad.push_back(job.command + "/" + e.path().filename().string());
    }
  }
  set_thread_count(saved);
  o.pass = bad.empty();
  o.detail = std::to_string(jobs.size()) + " commands at 1 and 4 threads";
  for (const auto& b : bad) o.detail += "; differs: " + b;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path rate_config = argc > 1 ? fs::path(argv[1]) : fs::path("configs/rate_smoke.json");
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "KR exactness", 30, kr_exactness},
      {2, "straight-line realization", 60, straight_line},
      {3, "exact-coupling pullback", 60, exact_pullback},
      {4, "bound suite", 120, bound_suite},
      {5, "gradient exactness", 60, gradient_checks},
      {6, "spline rates", 120, spline_rates},
      {7, "network compilation", 60, compilation},
      {8, "statistical rate", 900, [&] { return statistical_rate(rate_config); }},
      {9, "determinism", 600, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s > c.budget_s) {
      o.pass = false;
      o.detail += " (over time budget " + fmt(c.budget_s) + " s)";
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << " " << c.name << ": " << o.detail << " [" << std::fixed
              << std::setprecision(1) << s << " s]" << std::defaultfloat << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}

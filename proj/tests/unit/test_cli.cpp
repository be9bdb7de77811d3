#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cubeflow/cli/cli.hpp"
#include "cubeflow/core/error.hpp"

using namespace cubeflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cubeflow_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::string& command, const fs::path& cfg, const fs::path& out) {
  const std::string c = cfg.string(), o = out.string();
  const char* argv[] = {"cubeflow", command.c_str(), "--config", c.c_str(), "--out", o.c_str(), "--threads", "1"};
  std::ostringstream so, se;
  const int code = cli::run(8, argv, so, se);
  return {code, so.str(), se.str()};
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("config parsing reports lines") {
  try {
    cli::parse_config_text("{\n  \"a\": 1,\n  \"b\": \n}", "x.json");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("x.json:4:") != std::string::npos);
  }
  CHECK(cli::locate_key_line("{\n \"a\": 1,\n \"zz\": 2}", "zz") == 3);
  CHECK(cli::locate_key_line("{}", "zz") == 0);
}

TEST_CASE("kr command writes map and exact probe") {
  const auto dir = scratch("kr");
  const auto cfg = write(dir, "kr.json", R"({"density": {"name": "affine", "params": {"dim": 1}}, "probe_points": [[0.5]]})");
  const auto r = run_cli("kr", cfg, dir / "out");
  REQUIRE(r.code == 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "out" / "kr_report.json"));
  CHECK(rep["assertions"][0]["pass"].get<bool>());
  CHECK(std::abs(rep["probes"][0]["T"][0].get<double>() - 0.375) <= 1e-8);
  CHECK(fs::exists(dir / "out" / "kr_map.json"));
  CHECK(fs::exists(dir / "out" / "resolved_config.json"));
}

TEST_CASE("unknown keys and bad JSON exit with code 2") {
  const auto dir = scratch("bad");
  const auto cfg = write(dir, "bad.json", "{\n  \"density\": \"uniform\",\n  \"bogus\": 1\n}\n");
  auto r = run_cli("kr", cfg, dir / "out");
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("bad.json:3:") != std::string::npos);
  CHECK(r.err.find("bogus") != std::string::npos);
  r = run_cli("kr", write(dir, "broken.json", "{\"a\": "), dir / "out");
  CHECK(r.code == cli::kConfigError);
  r = run_cli("spline", write(dir, "sp.json", R"({"m": 2, "k": 1})"), dir / "out");
  CHECK(r.code == cli::kConfigError);
  r = run_cli("fit", write(dir, "fit.json", R"({"density": "affine", "train": {"step_size": -1}})"), dir / "out");
  CHECK(r.code == cli::kConfigError);
  const char* argv[] = {"cubeflow", "nosuch"};
  std::ostringstream so, se;
  CHECK(cli::run(2, argv, so, se) == cli::kConfigError);
}

TEST_CASE("fit, eval and sample chain") {
  const auto dir = scratch("fit");
  const auto cfg = write(dir, "fit.json", R"({"density": {"name": "affine", "params": {"dim": 1}}, "data": {"n": 100},
      "train": {"iterations": 5, "step_size": 0.05}, "seed": 1})");
  REQUIRE(run_cli("fit", cfg, dir / "fit").code == 0);
  const std::string trace = slurp(dir / "fit" / "trace.csv");
  CHECK(trace.rfind("iter,objective,grad_norm,c1_norm,w2inf_norm,ms\n", 0) == 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "fit" / "fit_report.json"));
  CHECK(rep["h2"].get<double>() >= 0.0);
  const auto field = (dir / "fit" / "field.json").string();
  REQUIRE(run_cli("eval", write(dir, "eval.json", R"({"field": ")" + field + R"(", "points": [[0.0], [1.0]]})"), dir / "eval").code == 0);
  const std::string ev = slurp(dir / "eval" / "eval.csv");
  CHECK(ev.rfind("x1,y1,density,log_likelihood\n0,0,", 0) == 0);
  REQUIRE(run_cli("sample", write(dir, "s.json", R"({"field": ")" + field + R"(", "n": 20})"), dir / "sample").code == 0);
  int lines = 0;
  std::istringstream is(slurp(dir / "sample" / "samples.csv"));
  for (std::string l; std::getline(is, l);) ++lines;
  CHECK(lines == 21);
}

TEST_CASE("spline command slopes and audit") {
  const auto dir = scratch("spline");
  const auto cfg = write(dir, "sp.json", R"({"function": "kink", "m": 3, "k": 2, "compile_n": 16})");
  REQUIRE(run_cli("spline", cfg, dir / "out").code == 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "out" / "spline_report.json"));
  CHECK(std::abs(rep["slopes"]["0"].get<double>() + 2.0) <= 0.3);
  CHECK(std::abs(rep["slopes"]["1"].get<double>() + 1.0) <= 0.3);
  CHECK(rep["compile"]["audit_pass"].get<bool>());
  CHECK(rep["compile"]["fidelity"].get<double>() <= 1e-8);
}

TEST_CASE("verify passes and writes a table") {
  const auto dir = scratch("verify");
  const auto r = run_cli("verify", write(dir, "v.json", R"({"probes": 16, "norm_probes": 32})"), dir / "out");
  CHECK(r.code == cli::kOk);
  CHECK(slurp(dir / "out" / "verify.txt").find("FAIL") == std::string::npos);
}

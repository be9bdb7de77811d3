#include <doctest.h>

#include <cmath>

#include "cubeflow/analysis/analysis.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/transport/kr_map.hpp"
#include "oracles.hpp"

using namespace cubeflow;

namespace {

DensityFn fn(const AnalyticDensity& p) {
  return [p](std::span<const double> x) { return p(x); };
}

}  // namespace

TEST_CASE("hellinger examples") {
  const auto grid = QuadratureGrid::gauss_legendre(64);
  const auto u = uniform_density(1), a = affine_density();
  CHECK(hellinger(fn(u), fn(u), 1, grid).value == 0.0);
  const auto h = hellinger(fn(u), fn(a), 1, grid);
  CHECK(h.h2 == doctest::Approx(oracle::hellinger2_uniform_affine()).epsilon(1e-12));
  CHECK(std::abs(h.h2 - 0.021914778007853464) <= 1e-12);
  CHECK_THROWS_AS(hellinger(fn(u), [](std::span<const double>) { return -1.0; }, 1, grid), Error);
}

TEST_CASE("hellinger metric properties and Monte Carlo agreement") {
  const auto grid = QuadratureGrid::gauss_legendre(32);
  const auto corpus = density_corpus();
  for (const auto& p : corpus) {
    for (const auto& q : corpus) {
      if (p.dim != q.dim) continue;
      const double hpq = hellinger(fn(p), fn(q), p.dim, grid).value;
      const double hqp = hellinger(fn(q), fn(p), p.dim, grid).value;
      CHECK(std::abs(hpq - hqp) <= 1e-12);
      const auto mc = hellinger_monte_carlo(fn(p), fn(q), p.dim, 100000, RngStream(7, 1));
      CHECK(std::abs(mc.h2 - hpq * hpq) <= 3 * mc.standard_error + 1e-12);
      for (const auto& r : corpus) {
        if (r.dim != p.dim) continue;
        CHECK(hpq <= hellinger(fn(p), fn(r), p.dim, grid).value + hellinger(fn(r), fn(q), p.dim, grid).value + 1e-9);
      }
    }
  }
}

TEST_CASE("sup density gap") {
  const auto u = uniform_density(1), a = affine_density();
  const auto probes = sup_probe_set(1, 200, 5);
  CHECK(linf_density_gap(fn(u), fn(u), probes) == 0.0);
  const double g = linf_density_gap(fn(u), fn(a), probes);
  CHECK(g == doctest::Approx(0.5).epsilon(1e-12));
  // with the 1/2 convention: h_half <= gap / sqrt(2 L), L = lower bound of the densities
  const double h_half = hellinger(fn(u), fn(a), 1, QuadratureGrid::gauss_legendre(64)).value / std::sqrt(2.0);
  CHECK(h_half <= g / std::sqrt(2 * 0.5));
}

TEST_CASE("triangle inequality with a fitted estimate") {
  const auto p0 = affine_density();
  const auto u = uniform_density(1);
  const Dataset data = sample_dataset(p0, 300, 3);
  EstimatorSpec e;
  auto init = make_estimator(e, 1, 300, 0);
  TrainConfig tc;
  tc.iterations = 10;
  tc.step_size = 0.05;
  tc.norm_probes = 32;
  tc.flow.n_steps = 16;
  auto fr = fit(*init, data, u, tc);
  const auto est = pullback_fn(std::shared_ptr<const VelocityField>(std::move(fr.field)), u, tc.flow);
  const auto grid = QuadratureGrid::gauss_legendre(48);
  const double h_ue = hellinger(fn(u), est, 1, grid).value;
  CHECK(h_ue >= 0.0);
  CHECK(h_ue <= hellinger(fn(u), fn(p0), 1, grid).value + hellinger(fn(p0), est, 1, grid).value + 1e-12);
}

TEST_CASE("rate exponents") {
  CHECK(ck_rate_exponent(4, 1, 0.5) == doctest::Approx(5.0 / 7.0).epsilon(1e-14));
  CHECK(ck_rate_exponent(4, 1, 1e-9) == doctest::Approx(nn_rate_exponent(4, 1)).epsilon(1e-8));
  CHECK_THROWS_AS(ck_rate_exponent(2, 1, 0.1), Error);
  CHECK_THROWS_AS(ck_rate_exponent(4, 1, 2.0), Error);
  CHECK(nn_rate_exponent(2, 1) == doctest::Approx(0.5));
}

TEST_CASE("bound suite on the default corpus") {
  BoundSuiteConfig cfg;
  cfg.probes = 48;
  cfg.norm_probes = 64;
  const auto rep = run_bound_suite(default_bound_corpus(), cfg);
  for (const auto& row : rep.rows) {
    CAPTURE(row.inequality);
    CAPTURE(row.subject);
    CAPTURE(row.lhs);
    CAPTURE(row.rhs);
    CHECK(row.pass);
  }
  CHECK(rep.pass);
  bool saw_zero = false, saw_logistic = false;
  for (const auto& row : rep.rows) {
    if (row.subject == "uniform1/zero~zero") {
      saw_zero = true;
      CHECK(row.lhs == 0.0);
    }
    if (row.inequality == "flow_lipschitz" && row.subject == "uniform1/logistic1.0~logistic1.1") saw_logistic = true;
  }
  CHECK(saw_zero);
  CHECK(saw_logistic);
}

TEST_CASE("rate experiment plumbing") {
  RateExperimentSpec s;
  s.target = "affine";
  s.n_grid = {40, 80};
  s.replicates = 3;
  s.train.iterations = 3;
  s.train.norm_probes = 16;
  s.train.flow.n_steps = 8;
  s.quadrature_nodes = 16;
  s.bootstrap = 20;
  const auto a = rate_experiment(s);
  CHECK(a.complete);
  CHECK(a.cells.size() == 6);
  CHECK(a.mean_h2.size() == 2);
  CHECK(a.band_lo <= a.band_hi);
  CHECK(a.theoretical_slope == doctest::Approx(-0.5));
  const auto b = rate_experiment(s);
  CHECK(rate_result_to_json(a).dump() == rate_result_to_json(b).dump());

  nlohmann::json j = s;
  RateExperimentSpec t;
  from_json(j, t);
  CHECK(nlohmann::json(t) == j);
  j["bogus"] = 1;
  CHECK_THROWS_AS(from_json(j, t), Error);
  RateExperimentSpec big = s;
  big.n_grid = {100, 5000};
  CHECK_THROWS_AS(big.validate(), Error);
}

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cubeflow/core/autodiff.hpp"
#include "cubeflow/core/cube.hpp"
#include "cubeflow/core/density.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/quadrature.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/core/velocity_field.hpp"

using namespace cubeflow;

TEST_CASE("cube points reject coordinates outside the cube") {
  CHECK_NOTHROW(CubePoint({0.0, 1.0, 0.5}));
  CHECK_THROWS_AS(CubePoint({0.5, 1.0 + 1e-12}), Error);
  CHECK_THROWS_AS(CubePoint(std::vector<double>{}), Error);
  CHECK(CubePoint::clamped({-0.1, 1.2})[1] == 1.0);
}

TEST_CASE("tensor quadrature") {
  const auto g16 = QuadratureGrid::gauss_legendre(16);
  CHECK(std::accumulate(g16.weights.begin(), g16.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t i = 0; i + 1 < g16.nodes.size(); ++i) CHECK(g16.nodes[i] < g16.nodes[i + 1]);
  CHECK(g16.nodes.front() > 0.0);
  CHECK(g16.nodes.back() < 1.0);

  const auto g2 = QuadratureGrid::default_for_dim(2);
  CHECK(integrate([](std::span<const double>) { return 1.0; }, g2, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(integrate([](std::span<const double> x) { return x[0]; }, g16, 1) - 0.5) <= 1e-14);
  CHECK(std::abs(integrate([](std::span<const double> x) { return 0.5 + x[0]; }, g16, 1) - 1.0) <= 1e-14);

  SUBCASE("exact on polynomials up to degree 2n-1") {
    const auto g = QuadratureGrid::gauss_legendre(8);
    for (int p = 0; p <= 15; ++p) {
      const double v = integrate([p](std::span<const double> x) { return std::pow(x[0], p); }, g, 1);
      CHECK(std::abs(v - 1.0 / (p + 1)) <= 1e-13);
    }
  }
  SUBCASE("non-finite integrand") {
    CHECK_THROWS_AS(integrate([](std::span<const double> x) { return 1.0 / (x[0] - x[0]); }, g16, 1), Error);
  }
  SUBCASE("monte carlo fallback") {
    const auto est = integrate_monte_carlo([](std::span<const double> x) { return x[0] + x[5]; }, 6, 20000,
                                           RngStream(3, 0));
    CHECK(std::abs(est.value - 1.0) <= 4.0 * est.standard_error + 1e-3);
  }
}

TEST_CASE("rng streams are reproducible") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool same = true, differs = false;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    same = same && x == y;
    differs = differs || x != z;
  }
  CHECK(same);
  CHECK(differs);

  RngStream s0(0, 0), s1(0, 0), s2(1, 0);
  const auto p = sample_uniform(s0, 3, 2);
  REQUIRE(p.size() == 3);
  for (const auto& q : p) CHECK(in_cube(q.coords()));
  CHECK(p == sample_uniform(s1, 3, 2));

  const auto big = sample_uniform(s2, 100000, 2);
  for (int ax = 0; ax < 2; ++ax) {
    double m = 0.0;
    for (const auto& q : big) m += q[ax];
    CHECK(std::abs(m / big.size() - 0.5) <= 0.01);
  }
}

TEST_CASE("density corpus validates") {
  const auto grid = QuadratureGrid::default_for_dim(2);
  for (const auto& p : density_corpus()) {
    CAPTURE(p.name);
    const auto rep = validate_density(p, grid);
    CHECK(rep.pass);
    CHECK(rep.normalization_residual <= 1e-8);
  }
  const auto u = validate_density(uniform_density(2), grid);
  CHECK(u.normalization_residual <= 1e-15);
  CHECK(u.observed_min == 1.0);
  CHECK(u.observed_max == 1.0);

  const auto a = validate_density(affine_density(), grid);
  CHECK(a.pass);
  CHECK(a.observed_min >= 0.5);

  auto bad = affine_density();
  bad.lower_bound = 0.6;
  const auto b = validate_density(bad, grid);
  CHECK_FALSE(b.pass);
  CHECK_FALSE(b.failures.empty());
}

TEST_CASE("density registry") {
  CHECK(make_density("cosine_product", {{"dim", 3}}).dim == 3);
  CHECK_THROWS_AS(make_density("nope"), Error);
  const auto p = make_density("affine_cosine");
  std::vector<double> x{0.3, 0.7}, g(2);
  p.grad(x, g);
  CHECK(g[0] == doctest::Approx(1.0 + 0.5 * std::cos(2 * M_PI * 0.7)).epsilon(1e-6));
}

TEST_CASE("parallel_for covers every index and rethrows the lowest failure") {
  set_thread_count(4);
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  try {
    parallel_for(100, [](std::size_t i) {
      if (i % 10 == 3) throw Error(ErrorKind::InvalidArgument, std::to_string(i));
    });
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(": 3") != std::string::npos);
  }
  set_thread_count(1);
}

TEST_CASE("reverse-mode tape") {
  ad::Tape::active().reset();
  const auto x = ad::Var::input(0.7), y = ad::Var::input(-1.3);
  const auto z = ad::exp(x * y) + ad::sin(x) / (1.0 + y * y) - ad::sqrt(x) * relu_power(y + 2.0, 3);
  const auto g = ad::Tape::active().gradient(z.index());
  const double ex = std::exp(0.7 * -1.3);
  const double dx = -1.3 * ex + std::cos(0.7) / (1.0 + 1.69) - 0.5 / std::sqrt(0.7) * std::pow(0.7, 3);
  const double dy = 0.7 * ex - std::sin(0.7) * 2 * -1.3 / std::pow(1.0 + 1.69, 2) -
                    std::sqrt(0.7) * 3 * std::pow(0.7, 2);
  CHECK(g[x.index()] == doctest::Approx(dx).epsilon(1e-13));
  CHECK(g[y.index()] == doctest::Approx(dy).epsilon(1e-13));
  ad::Tape::active().reset();
}

TEST_CASE("truncated powers") {
  CHECK(relu_power(0.0, 0) == 0.0);
  CHECK(relu_power(-1.0, 0) == 0.0);
  CHECK(relu_power(0.3, 0) == 1.0);
  CHECK(relu_power(0.5, 3) == doctest::Approx(0.125));
  CHECK(relu_power_derivative(0.5, 3) == doctest::Approx(0.75));
}

TEST_CASE("finite-difference Jacobian matches analytic logistic Jacobian") {
  struct Fd final : VelocityField {
    LogisticField inner{2, 1.3};
    int dim() const override { return 2; }
    void eval(std::span<const double> x, double t, std::span<double> o) const override { inner.eval(x, t, o); }
    std::string describe() const override { return "fd"; }
  } fd;
  for (double a : {0.0, 0.3, 1.0}) {
    std::vector<double> x{a, 0.6}, j1(4), j2(4);
    fd.jacobian(x, 0.2, j1);
    fd.inner.jacobian(x, 0.2, j2);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(j1[k] - j2[k]) <= 1e-8);
  }
}

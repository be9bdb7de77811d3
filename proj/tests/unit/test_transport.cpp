#include <doctest.h>

#include <cmath>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/core/rng.hpp"
#include "cubeflow/transport/kr_map.hpp"
#include "oracles.hpp"

using namespace cubeflow;

namespace {
const TriangularMap& affine_map() {
  static const TriangularMap T = build_kr_map(affine_density(), uniform_density(1), 256);
  return T;
}
}  // namespace

TEST_CASE("identity map for equal densities") {
  const auto T = build_kr_map(uniform_density(3), uniform_density(3), 16);
  double err = 0.0;
  for (const auto& x : boundary_grid(3, 17)) err = std::max(err, sup_distance(T.apply(x), x));
  CHECK(err <= 1e-9);
  CHECK(kr_pushforward_residual(T, uniform_density(3), uniform_density(3), QuadratureGrid::gauss_legendre(8)) <= 1e-9);
}

TEST_CASE("affine target") {
  const auto& T = affine_map();
  std::vector<double> x{0.5};
  CHECK(std::abs(T.component(0, x) - 0.375) <= 1e-8);
  double err = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    std::vector<double> p{k / 1000.0};
    err = std::max(err, std::abs(T.component(0, p) - oracle::affine_T(p[0])));
    err = std::max(err, std::abs(T.diag_derivative(0, p) - oracle::affine_dT(p[0])) * 1e-2);
  }
  CHECK(err <= 1e-8);
  CHECK(kr_pushforward_residual(T, affine_density(), uniform_density(1), QuadratureGrid::gauss_legendre(64)) <= 1e-6);
}

TEST_CASE("product target factorizes") {
  const auto p0 = make_density("affine_product", {{"dim", 2}});
  const auto T = build_kr_map(p0, uniform_density(2), 128);
  RngStream rng(5, 0);
  double diff = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a{rng.uniform(), rng.uniform()}, b{rng.uniform(), a[1]};
    diff = std::max(diff, std::abs(T.component(1, a) - T.component(1, b)));
    CHECK(std::abs(T.component(1, a) - oracle::affine_T(a[1])) <= 1e-8);
  }
  CHECK(diff <= 1e-8);
  CHECK(kr_pushforward_residual(T, p0, uniform_density(2), QuadratureGrid::gauss_legendre(32)) <= 1e-5);
}

TEST_CASE("corpus maps satisfy triangularity, monotonicity and pushforward") {
  const auto grid = QuadratureGrid::gauss_legendre(32);
  for (const auto& p0 : density_corpus()) {
    CAPTURE(p0.name);
    const int d = p0.dim;
    const auto rho = uniform_density(d);
    const auto T = build_kr_map(p0, rho, default_grid_res(d));
    CHECK(kr_pushforward_residual(T, p0, rho, grid) <= 1e-5);
    RngStream rng(11, d);
    double tri = 0.0, min_diag = 1e9;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(d);
      for (auto& v : x) v = rng.uniform();
      for (int j = 1; j < d; ++j) {
        auto y = x;
        y[j] = rng.uniform();
        for (int i = 0; i < j; ++i) tri = std::max(tri, std::abs(T.component(i, x) - T.component(i, y)));
      }
      for (int i = 0; i < d; ++i) min_diag = std::min(min_diag, T.diag_derivative(i, x));
      std::vector<double> lo = x, hi = x;
      lo[d - 1] = 0.0;
      hi[d - 1] = 1.0;
      CHECK(std::abs(T.component(d - 1, lo)) <= 1e-10);
      CHECK(std::abs(T.component(d - 1, hi) - 1.0) <= 1e-10);
    }
    CHECK(tri <= 1e-12);
    CHECK(min_diag >= 0.5 * p0.lower_bound / p0.upper_bound);
  }
}

TEST_CASE("non-uniform product reference") {
  const auto rho = cosine_density(0.5);
  const auto T = build_kr_map(affine_density(), rho, 256);
  CHECK(kr_pushforward_residual(T, affine_density(), rho, QuadratureGrid::gauss_legendre(64)) <= 1e-5);
  std::vector<double> x{0.3};
  CHECK(std::abs(oracle::cosine_cdf(T.component(0, x), 0.5) - oracle::affine_T(0.3)) <= 1e-8);
}

TEST_CASE("build errors") {
  CHECK_THROWS_AS(build_kr_map(affine_density(), bilinear_density(), 16), Error);
  try {
    build_kr_map(uniform_density(2), bilinear_density(), 16);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonProductReference);
  }
  auto deg = affine_density();
  deg.eval = [](std::span<const double> x) { return 2.0 * x[0]; };
  try {
    build_kr_map(deg, uniform_density(1), 16);
    FAIL("expected DegenerateDensity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateDensity);
  }
}

TEST_CASE("straight-line inversion") {
  const auto& T = affine_map();
  CHECK(invert_straight_line(T, CubePoint({0.3}), 0.0)[0] == 0.3);
  CHECK(std::abs(invert_straight_line(T, CubePoint({0.375}), 1.0)[0] - 0.5) <= 1e-9);
  CHECK(std::abs(invert_straight_line(T, CubePoint({0.4375}), 0.5)[0] - 0.5) <= 1e-9);

  const auto T2 = build_kr_map(bilinear_density(), uniform_density(2), 128);
  RngStream rng(9, 1);
  double err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    const double t = rng.uniform();
    const auto Tx = T2.apply(x);
    std::vector<double> y{t * Tx[0] + (1 - t) * x[0], t * Tx[1] + (1 - t) * x[1]};
    const auto back = invert_straight_line(T2, CubePoint::clamped(y), t);
    err = std::max(err, sup_distance(back.coords(), x));
  }
  CHECK(err <= 1e-9);
}

TEST_CASE("straight-line field") {
  const auto Tid = std::make_shared<TriangularMap>(build_kr_map(uniform_density(2), uniform_density(2), 8));
  const auto f0 = straight_line_field(Tid);
  std::vector<double> out(2);
  f0->eval(std::vector<double>{0.2, 0.9}, 0.4, out);
  CHECK(std::abs(out[0]) <= 1e-14);
  CHECK(std::abs(out[1]) <= 1e-14);

  const auto f = straight_line_field(std::make_shared<TriangularMap>(affine_map()));
  std::vector<double> o(1);
  f->eval(std::vector<double>{0.4375}, 0.5, o);
  CHECK(std::abs(o[0] + 0.125) <= 1e-8);

  std::vector<double> jac(1);
  for (double y : {0.0, 0.2, 0.999999}) {
    f->jacobian(std::vector<double>{y}, 0.3, jac);
    const double x = oracle::affine_G_inv(y, 0.3);
    const double expect = (oracle::affine_dT(x) - 1.0) / (0.3 * oracle::affine_dT(x) + 0.7);
    CHECK(std::abs(jac[0] - expect) <= 1e-6);
  }
}

TEST_CASE("boundary vanishing report") {
  const auto z = boundary_vanishing_check(ZeroField(2), 0.05, 16);
  CHECK(z.ratio_sup == 0.0);
  CHECK(z.admissible);

  const auto f = straight_line_field(std::make_shared<TriangularMap>(affine_map()));
  const auto r = boundary_vanishing_check(*f, 0.05, 16);
  CHECK(r.admissible);
  CHECK(r.ratio_sup <= 10.0);

  const auto c = boundary_vanishing_check(ConstantField(2, 1.0), 0.05, 16);
  CHECK_FALSE(c.admissible);
  CHECK(c.inner_ratio > 1e6);
}

TEST_CASE("json round trip") {
  const auto T = build_kr_map(bilinear_density(), uniform_density(2), 32);
  const auto back = TriangularMap::from_json(nlohmann::json::parse(T.to_json().dump()));
  RngStream rng(2, 2);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    CHECK(std::abs(T.component(1, x) - back.component(1, x)) <= 1e-14);
  }
  CHECK_THROWS_AS(TriangularMap::from_json(nlohmann::json{{"format", "other"}}), Error);
}

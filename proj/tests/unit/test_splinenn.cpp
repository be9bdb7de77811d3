#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cubeflow/core/error.hpp"
#include "cubeflow/splinenn/compile.hpp"
#include "cubeflow/splinenn/quasi_interp.hpp"
#include "oracles.hpp"

using namespace cubeflow;

namespace {

const double kPi = std::numbers::pi;

double sin2pi(std::span<const double> x) { return std::sin(2 * kPi * x[0]); }

// C^k target with derivatives up to order k: |x - 1/2|^{k + 0.1}
struct Kink {
  int k;
  double operator()(std::span<const double> x) const { return std::pow(std::abs(x[0] - 0.5), k + 0.1); }
  double deriv(std::span<const double> x, std::span<const int> a) const {
    const double u = x[0] - 0.5, e = k + 0.1;
    if (a.empty() || a[0] == 0) return std::pow(std::abs(u), e);
    return e * std::pow(std::abs(u), e - 1) * (u < 0 ? -1.0 : 1.0);
  }
};

}  // namespace

TEST_CASE("bspline evaluation") {
  CHECK(cardinal_bspline(2, 1.0) == doctest::Approx(1.0));
  for (double x : {-0.5, 0.0, 2.0, 2.5}) CHECK(cardinal_bspline(2, x) == 0.0);
  for (int m : {2, 3, 4}) {
    for (double x : {0.5, 1.3, 2.7}) {
      double s = 0.0;
      for (int j = -m; j <= 4; ++j) s += cardinal_bspline(m, x - j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    for (double x : {0.3, 1.7, 2.2}) CHECK(cardinal_bspline(m, x) == doctest::Approx(oracle::cardinal_bspline(m, x)).epsilon(1e-12));
  }
}

TEST_CASE("bspline smoothness and support") {
  for (int m : {3, 4, 5}) {
    const int r = m - 2;
    for (int knot = 1; knot < m; ++knot) {
      const double h = 1e-9;
      const double lo = cardinal_bspline_derivative(m, r, knot - h);
      const double hi = cardinal_bspline_derivative(m, r, knot + h);
      CHECK(std::abs(lo - hi) <= 1e-8);
    }
  }
  BSplineBasis b(3, 8);
  for (int j = b.first_index(); j <= b.last_index(); ++j) {
    CHECK(b.eval(j, b.support_lo(j) - 1e-9) == 0.0);
    CHECK(b.eval(j, b.support_hi(j) + 1e-9) == 0.0);
    CHECK(b.eval(j, 0.5 * (b.support_lo(j) + b.support_hi(j))) > 0.0);
  }
}

TEST_CASE("boundary extension") {
  const Extension e0 = build_extension(0, 3);
  REQUIRE(e0.alphas.size() == 1);
  CHECK(e0.alphas[0] == doctest::Approx(1.0));

  const int m = 3;
  const Extension e1 = build_extension(1, m);
  CHECK(e1.alphas[0] + e1.alphas[1] == doctest::Approx(1.0));
  CHECK(e1.alphas[0] * e1.gammas[0] + e1.alphas[1] * e1.gammas[1] == doctest::Approx(1.0));
  CHECK(e1.gammas[0] < e1.gammas[1]);
  CHECK(e1.gammas[0] > -1.0 / m);
  CHECK(e1.gammas[1] < 0.0);

  for (int k = 0; k <= 4; ++k) {
    const Extension e = build_extension(k, k + 1);
    for (int r = 0; r <= k; ++r) {
      double s = 0.0;
      for (int j = 0; j <= k; ++j) s += e.alphas[j] * std::pow(e.gammas[j], r);
      CHECK(std::abs(s - 1.0) <= 1e-10);
    }
  }

  const Extension e2 = build_extension(2, 3);
  for (double x = -0.1; x <= 0.0; x += 0.01) CHECK(std::abs(e2.apply([](double u) { return u * u; }, x) - x * x) <= 1e-12);
}

TEST_CASE("quasi-interpolant reproduction") {
  for (int m : {2, 3, 4}) {
    const auto qi = quasi_interpolate([](std::span<const double>) { return 1.0; }, m, 8, m - 1, 1);
    for (const auto& p : off_knot_probes(8, 1, 7)) CHECK(std::abs(qi(p) - 1.0) <= 1e-10);
  }
  const auto lin = quasi_interpolate([](std::span<const double> x) { return x[0]; }, 2, 16, 1, 1);
  CHECK(quasi_interp_error([](std::span<const double> x) { return x[0]; }, lin, 0, off_knot_probes(16, 1, 5)) <= 1e-10);

  // a spline already in the space is reproduced
  const auto target = [](std::span<const double> x) {
    return 0.7 * eval_bspline(3, 8, 2, x[0]) - 1.3 * eval_bspline(3, 8, 5, x[0]) + 0.2 * eval_bspline(3, 8, -1, x[0]);
  };
  const auto qs = quasi_interpolate(target, 3, 8, 2, 1);
  CHECK(quasi_interp_error(target, qs, 0, off_knot_probes(8, 1, 9)) <= 1e-9);

  const auto poly2 = [](std::span<const double> x) { return x[0] * x[1] - 0.5 * x[0] * x[0] + x[1]; };
  const auto q2 = quasi_interpolate(poly2, 3, 6, 2, 2);
  CHECK(quasi_interp_error(poly2, q2, 0, off_knot_probes(6, 2, 3)) <= 1e-10);
}

TEST_CASE("knot probes are rejected") {
  const auto qi = quasi_interpolate(sin2pi, 3, 8, 2, 1);
  CHECK_THROWS_AS(quasi_interp_error(sin2pi, qi, 0, {{0.25}}), Error);
}

TEST_CASE("sup-error and derivative rates") {
  const std::vector<double> ns = {8, 16, 32, 64};
  for (int k : {2, 3}) {
    const Kink f{k};
    for (int r : {0, 1}) {
      std::vector<double> err;
      for (double n : ns) {
        const auto qi = quasi_interpolate(f, k + 1, int(n), k, 1);
        err.push_back(quasi_interp_error(f, qi, r, off_knot_probes(int(n), 1, 16),
                                         [&](std::span<const double> x, std::span<const int> a) { return f.deriv(x, a); }));
      }
      const double slope = loglog_slope(ns, err);
      CAPTURE(k);
      CAPTURE(r);
      CHECK(std::abs(slope + (k - r)) <= 0.3);
    }
  }
}

TEST_CASE("functional boundedness") {
  const LocalFunctional lf = local_functional(4);
  const Extension ext = build_extension(3, 4);
  double bound = 0.0, asum = 0.0;
  for (double w : lf.weights) bound += std::abs(w);
  for (double a : ext.alphas) asum += std::abs(a);
  bound *= std::max(1.0, asum);
  const std::vector<CubeFn> corpus = {sin2pi, [](std::span<const double> x) { return std::exp(x[0]) - 2.0; },
                                      [](std::span<const double> x) { return std::abs(x[0] - 0.3); }};
  for (const auto& f : corpus) {
    double fsup = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double x = i / 2000.0;
      fsup = std::max(fsup, std::abs(f(std::span<const double>(&x, 1))));
    }
    for (int n : {8, 16, 32, 64, 128}) {
      const auto qi = quasi_interpolate(f, 4, n, 3, 1);
      double lmax = 0.0;
      for (double c : qi.coefficients) lmax = std::max(lmax, std::abs(c));
      CHECK(lmax / fsup <= bound + 1e-12);
    }
  }
}

TEST_CASE("commutation with partial derivatives") {
  const auto f = [](double x1, double x2) { return std::sin(3 * x1 + x2 * x2) + x1 * x2; };
  const auto d2f = [](double x1, double x2) { return 2 * x2 * std::cos(3 * x1 + x2 * x2) + x1; };
  const int m = 3, n = 8;
  const Extension ext = build_extension(2, m);
  const LocalFunctional lf = local_functional(m);
  for (int j : {-2, 0, 3, 7}) {
    const auto st = functional_stencil(ext, lf, n, j);
    const auto lam = [&](auto&& g, double x2) {
      double s = 0.0;
      for (const auto& [w, x1] : st) s += w * g(x1, x2);
      return s;
    };
    for (double x2 : {0.2, 0.55, 0.9}) {
      const double h = 1e-5;
      const double fd = (lam(f, x2 + h) - lam(f, x2 - h)) / (2 * h);
      CHECK(std::abs(fd - lam(d2f, x2)) <= 1e-7);
    }
  }
}

TEST_CASE("square and product subnetworks") {
  for (int p : {2, 3, 4}) {
    const NetworkSpec sq = square_network(p);
    const double x = 0.3;
    CHECK(std::abs(eval_network(sq, std::span<const double>(&x, 1))[0] - 0.09) <= (p == 2 ? 0.0 : 1e-14));
    const NetworkSpec pr = product_network(p);
    const double xy[2] = {0.2, 0.3};
    CHECK(std::abs(eval_network(pr, xy)[0] - 0.06) <= 1e-14);
  }
  const auto id = power_combination(3, 1);
  for (double y : {-0.7, 0.1, 2.0}) {
    double s = 0.0;
    for (std::size_t j = 0; j < id.shifts.size(); ++j) s += id.coeffs[j] * std::pow(y + id.shifts[j], 3);
    CHECK(s == doctest::Approx(y).epsilon(1e-12));
  }
}

TEST_CASE("compiled network fidelity") {
  CHECK_THROWS_AS(compile_to_network(quasi_interpolate(sin2pi, 2, 8, 1, 1)), Error);
  struct Case {
    int m, n, d;
  };
  const CubeFn f2 = [](std::span<const double> x) { return std::cos(kPi * x[0]) * std::exp(x[1]); };
  const CubeFn f3 = [](std::span<const double> x) { return std::sin(x[0] + 2 * x[1]) * x[2]; };
  for (const Case c : {Case{3, 8, 1}, Case{3, 32, 1}, Case{4, 16, 1}, Case{4, 64, 1}, Case{3, 6, 2}, Case{4, 5, 2}, Case{3, 3, 3}}) {
    const CubeFn& f = c.d == 1 ? CubeFn(sin2pi) : (c.d == 2 ? f2 : f3);
    const auto qi = quasi_interpolate(f, c.m, c.n, c.m - 1, c.d);
    const CompiledNetwork cn = compile_to_network(qi);
    CHECK(cn.net.activation_power == c.m - 1);
    auto probes = off_knot_probes(c.n, c.d, c.d == 1 ? 1000 / c.n + 1 : 3);
    double gap = 0.0;
    for (const auto& p : probes) gap = std::max(gap, std::abs(eval_network(cn.net, p)[0] - qi(p)));
    CAPTURE(c.m);
    CAPTURE(c.n);
    CAPTURE(c.d);
    CHECK(gap <= 1e-8);
    const auto rep = audit_against_bounds(cn, 1.0, cn.N);
    CHECK(rep.pass);
  }
}

TEST_CASE("growth shapes of compiled networks") {
  std::vector<double> W, S, B, L;
  for (int n : {8, 16, 32}) {
    const auto cn = compile_to_network(quasi_interpolate(sin2pi, 3, n, 2, 1));
    L.push_back(cn.net.audit.L);
    W.push_back(cn.net.audit.W);
    S.push_back(double(cn.net.audit.S));
    B.push_back(cn.net.audit.B);
  }
  CHECK(L[0] == L[1]);
  CHECK(L[1] == L[2]);
  for (const auto* v : {&W, &S, &B}) {
    const double r1 = (*v)[1] / (*v)[0], r2 = (*v)[2] / (*v)[1];
    CHECK(r1 > 1.5);
    CHECK(r1 < 2.5);
    CHECK(r2 > 1.5);
    CHECK(r2 < 2.5);
  }
}

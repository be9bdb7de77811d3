#include "cubeflow/splinenn/quasi_interp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/parallel.hpp"

namespace cubeflow {

BSplineBasis::BSplineBasis(int order, int stretch) : m(order), n(stretch) {
  if (m < 1 || n < 1) throw Error(ErrorKind::InvalidArgument, "B-spline basis needs m >= 1 and n >= 1");
}

double BSplineBasis::derivative(int j, int r, double x) const {
  return std::pow(static_cast<double>(n), r) * cardinal_bspline_derivative(m, r, n * x - j);
}

std::vector<std::pair<double, double>> Extension::fold(double x) const {
  if (x >= 0.0 && x <= 1.0) return {{1.0, x}};
  std::vector<std::pair<double, double>> out;
  for (int j = 0; j <= k; ++j) {
    const double p = x < 0.0 ? gammas[j] * x : 1.0 + gammas[j] * (x - 1.0);
    if (p < 0.0 || p > 1.0) throw Error(ErrorKind::OutOfDomain, "extension point too far outside [0,1]");
    out.emplace_back(alphas[j], p);
  }
  return out;
}

double Extension::apply(const std::function<double(double)>& g, double x) const {
  double s = 0.0;
  for (const auto& [a, p] : fold(x)) s += a * g(p);
  return s;
}

Extension build_extension(int k, int m) {
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "extension order k must be >= 0");
  if (m < k + 1) throw Error(ErrorKind::InvalidArgument, "extension needs m >= k + 1");
  Extension e;
  e.k = k;
  e.m = m;
  const int q = k + 1;
  Eigen::MatrixXd V(q, q);
  for (int j = 0; j < q; ++j) e.gammas.push_back(-(j + 1.0) / ((k + 2.0) * m));
  std::sort(e.gammas.begin(), e.gammas.end());
  for (int j = 0; j < q; ++j)
    for (int r = 0; r < q; ++r) V(r, j) = std::pow(e.gammas[j], r);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(q);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  if (!lu.isInvertible()) throw Error(ErrorKind::SingularVandermonde, "extension nodes are not distinct");
  const Eigen::VectorXd a = lu.solve(ones);
  if ((V * a - ones).cwiseAbs().maxCoeff() > 1e-10)
    throw Error(ErrorKind::SingularVandermonde, "Vandermonde solve residual above 1e-10");
  e.alphas.assign(a.data(), a.data() + q);
  return e;
}

LocalFunctional local_functional(int m) {
  if (m < 1) throw Error(ErrorKind::InvalidArgument, "functional order must be >= 1");
  const int l = (m - 1) / 2;
  LocalFunctional lf;
  lf.m = m;
  Eigen::MatrixXd A(m, m);
  for (int s = 0; s < m; ++s) {
    lf.nodes.push_back(l + (s + 0.5) / m);
    for (int c = 0; c < m; ++c) A(s, c) = cardinal_bspline(m, lf.nodes[s] - (l - m + 1 + c));
  }
  const Eigen::MatrixXd Ainv = A.fullPivLu().inverse();
  const int row = m - 1 - l;  // column index of p = 0
  for (int s = 0; s < m; ++s) lf.weights.push_back(Ainv(row, s));
  return lf;
}

std::vector<std::pair<double, double>> functional_stencil(const Extension& ext, const LocalFunctional& lf, int n,
                                                          int j) {
  std::vector<std::pair<double, double>> out;
  for (int s = 0; s < lf.m; ++s) {
    const double x = (j + lf.nodes[s]) / n;
    for (const auto& [a, p] : ext.fold(x)) out.emplace_back(lf.weights[s] * a, p);
  }
  return out;
}

std::size_t QuasiInterpolant::index(std::span<const int> nu) const {
  std::size_t idx = 0;
  const std::size_t nb = n + m - 1;
  for (int a = 0; a < d; ++a) idx = idx * nb + static_cast<std::size_t>(nu[a] + m - 1);
  return idx;
}

double QuasiInterpolant::derivative(std::span<const double> x, std::span<const int> alpha) const {
  std::vector<int> first(d);
  std::vector<std::vector<double>> basis(d, std::vector<double>(m));
  for (int a = 0; a < d; ++a) {
    const double xa = std::clamp(x[a], 0.0, 1.0);
    const int r = alpha.empty() ? 0 : alpha[a];
    first[a] = first_active(m, n, xa);
    const double scale = std::pow(static_cast<double>(n), r);
    for (int q = 0; q < m; ++q) basis[a][q] = scale * cardinal_bspline_derivative(m, r, n * xa - (first[a] + q));
  }
  int combos = 1;
  for (int a = 0; a < d; ++a) combos *= m;
  std::vector<int> nu(d);
  double s = 0.0;
  for (int c = 0; c < combos; ++c) {
    int rem = c;
    double prod = 1.0;
    for (int a = d - 1; a >= 0; --a) {
      const int q = rem % m;
      rem /= m;
      nu[a] = first[a] + q;
      prod *= basis[a][q];
    }
    if (prod != 0.0) s += coefficients[index(nu)] * prod;
  }
  return s;
}

QuasiInterpolant quasi_interpolate(const CubeFn& f, int m, int n, int k, int d) {
  if (m < k + 1) throw Error(ErrorKind::InvalidArgument, "quasi-interpolant needs m >= k + 1");
  if (n < 1 || d < 1 || d > 3) throw Error(ErrorKind::InvalidArgument, "quasi-interpolant needs n >= 1, 1 <= d <= 3");
  QuasiInterpolant qi;
  qi.m = m;
  qi.n = n;
  qi.k = k;
  qi.d = d;
  qi.extension = build_extension(k, m);
  qi.functional = local_functional(m);
  const int nb = n + m - 1;
  std::vector<std::vector<std::pair<double, double>>> stencil(nb);
  for (int j = -m + 1; j <= n - 1; ++j) stencil[j + m - 1] = functional_stencil(qi.extension, qi.functional, n, j);

  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= nb;
  qi.coefficients.assign(total, 0.0);
  parallel_for(total, [&](std::size_t idx) {
    std::vector<int> nu(d);
    std::size_t rem = idx;
    for (int a = d - 1; a >= 0; --a) {
      nu[a] = static_cast<int>(rem % nb);
      rem /= nb;
    }
    std::vector<std::size_t> pos(d, 0);
    std::vector<double> x(d);
    long double acc = 0.0L;
    while (true) {
      double w = 1.0;
      for (int a = 0; a < d; ++a) {
        const auto& [wa, pa] = stencil[nu[a]][pos[a]];
        w *= wa;
        x[a] = pa;
      }
      acc += w * f(x);
      int a = d - 1;
      while (a >= 0 && ++pos[a] == stencil[nu[a]].size()) pos[a--] = 0;
      if (a < 0) break;
    }
    qi.coefficients[idx] = static_cast<double>(acc);
  });
  return qi;
}

namespace {

double extended_eval(const CubeFn& f, const Extension& ext, std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  std::vector<std::vector<std::pair<double, double>>> folds(d);
  for (int a = 0; a < d; ++a) folds[a] = ext.fold(x[a]);
  std::vector<std::size_t> pos(d, 0);
  std::vector<double> p(d);
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      w *= folds[a][pos[a]].first;
      p[a] = folds[a][pos[a]].second;
    }
    acc += w * f(p);
    int a = d - 1;
    while (a >= 0 && ++pos[a] == folds[a].size()) pos[a--] = 0;
    if (a < 0) break;
  }
  return acc;
}

// 4th-order central stencils for derivative orders 0, 1, 2.
struct Stencil1 {
  std::vector<int> off;
  std::vector<double> w;
  int order;
};

Stencil1 stencil_for(int r) {
  if (r == 0) return {{0}, {1.0}, 0};
  if (r == 1) return {{-2, -1, 1, 2}, {1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12}, 1};
  if (r == 2) return {{-2, -1, 0, 1, 2}, {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12}, 2};
  throw Error(ErrorKind::InvalidArgument, "finite-difference derivatives limited to order 2 per axis");
}

void enumerate_alphas(int d, int r, std::vector<int>& cur, int a, std::vector<std::vector<int>>& out) {
  if (a == d - 1) {
    cur[a] = r;
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= r; ++v) {
    cur[a] = v;
    enumerate_alphas(d, r - v, cur, a + 1, out);
  }
}

}  // namespace

double quasi_interp_error(const CubeFn& f, const QuasiInterpolant& qi, int r,
                          const std::vector<std::vector<double>>& probes,
                          const std::function<double(std::span<const double>, std::span<const int>)>& df) {
  const int d = qi.d;
  for (const auto& x : probes) {
    if (static_cast<int>(x.size()) != d) throw Error(ErrorKind::DimensionMismatch, "probe dimension");
    for (double v : x) {
      const double u = v * qi.n;
      if (std::abs(u - std::round(u)) < 1e-6)
        throw Error(ErrorKind::KnotProbe, "probe " + std::to_string(v) + " lies on the knot grid");
    }
  }
  std::vector<std::vector<int>> alphas;
  std::vector<int> cur(d);
  enumerate_alphas(d, r, cur, 0, alphas);
  const double h = r <= 1 ? 1e-5 : 1e-4;
  std::vector<double> err(probes.size());
  parallel_for(probes.size(), [&](std::size_t k) {
    const auto& x = probes[k];
    double worst = 0.0;
    for (const auto& al : alphas) {
      double target;
      if (df) {
        target = df(x, al);
      } else {
        std::vector<Stencil1> st(d);
        for (int a = 0; a < d; ++a) st[a] = stencil_for(al[a]);
        std::vector<std::size_t> pos(d, 0);
        std::vector<double> p(d);
        double acc = 0.0;
        while (true) {
          double w = 1.0;
          for (int a = 0; a < d; ++a) {
            w *= st[a].w[pos[a]] / std::pow(h, st[a].order);
            p[a] = x[a] + st[a].off[pos[a]] * h;
          }
          acc += w * extended_eval(f, qi.extension, p);
          int a = d - 1;
          while (a >= 0 && ++pos[a] == st[a].off.size()) pos[a--] = 0;
          if (a < 0) break;
        }
        target = acc;
      }
      worst = std::max(worst, std::abs(target - qi.derivative(x, al)));
    }
    err[k] = worst;
  });
  return err.empty() ? 0.0 : *std::max_element(err.begin(), err.end());
}

std::vector<std::vector<double>> off_knot_probes(int n, int d, int per_cell) {
  std::vector<double> axis;
  for (int c = 0; c < n; ++c)
    for (int s = 0; s < per_cell; ++s) axis.push_back((c + (s + 0.5) / per_cell) / n);
  std::vector<std::vector<double>> out;
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= axis.size();
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::vector<double> p(d);
    std::size_t rem = i;
    for (int a = d - 1; a >= 0; --a) {
      p[a] = axis[rem % axis.size()];
      rem /= axis.size();
    }
    out.push_back(std::move(p));
  }
  return out;
}

double loglog_slope(std::span<const double> n, std::span<const double> err) {
  const std::size_t N = n.size();
  if (N < 2 || err.size() != N) throw Error(ErrorKind::InvalidArgument, "slope fit needs >= 2 matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double x = std::log(n[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (N * sxy - sx * sy) / (N * sxx - sx * sx);
}

}  // namespace cubeflow

#include "cubeflow/transport/kr_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/parallel.hpp"
#include "cubeflow/core/probes.hpp"
#include "cubeflow/transport/root.hpp"

namespace cubeflow {
namespace {

struct Lagrange4 {
  int start = 0;
  std::array<double, 4> w{};
};

Lagrange4 lagrange_stencil(double u, int res) {
  const double s = u * res;
  const int c = std::clamp(static_cast<int>(std::floor(s)), 0, res - 1);
  Lagrange4 st;
  st.start = std::clamp(c - 1, 0, res - 3);
  for (int k = 0; k < 4; ++k) {
    double w = 1.0;
    for (int m = 0; m < 4; ++m)
      if (m != k) w *= (s - (st.start + m)) / static_cast<double>(k - m);
    st.w[k] = w;
  }
  return st;
}

struct Cell {
  int c = 0;
  double tau = 0.0;
};

Cell locate(double u, int res) {
  const double s = u * res;
  const int c = std::clamp(static_cast<int>(std::floor(s)), 0, res - 1);
  return {c, s - c};
}

// Cubic Hermite on a cell of width h; returns value and x-derivative.
std::pair<double, double> hermite(double f0, double f1, double d0, double d1, double tau, double h) {
  const double t2 = tau * tau, t3 = t2 * tau;
  const double v = (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + tau) * h * d0 + (-2 * t3 + 3 * t2) * f1 +
                   (t3 - t2) * h * d1;
  const double dv = ((6 * t2 - 6 * tau) * f0 + (3 * t2 - 4 * tau + 1) * h * d0 + (-6 * t2 + 6 * tau) * f1 +
                     (3 * t2 - 2 * tau) * h * d1) /
                    h;
  return {v, dv};
}

// Fritsch-Carlson limiter on one grid line so every cell is monotone.
void limit_monotone(std::span<const double> f, std::span<double> d, double h) {
  const std::size_t n = f.size() - 1;
  for (std::size_t l = 0; l < n; ++l) {
    const double delta = (f[l + 1] - f[l]) / h;
    if (delta <= 0.0) {
      d[l] = d[l + 1] = 0.0;
      continue;
    }
    const double a = d[l] / delta, b = d[l + 1] / delta;
    const double r2 = a * a + b * b;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      d[l] = tau * a * delta;
      d[l + 1] = tau * b * delta;
    }
  }
}

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int k = 0; k < e; ++k) r *= b;
  return r;
}

}  // namespace

TriangularMap::TriangularMap(std::vector<ConditionalCdfTable> source, std::vector<ReferenceCdf> reference)
    : source_(std::move(source)), reference_(std::move(reference)) {
  if (source_.empty() || source_.size() != reference_.size())
    throw Error(ErrorKind::DimensionMismatch, "map needs one source and one reference table per coordinate");
  const int res = source_.front().res;
  if (res < 4) throw Error(ErrorKind::InvalidArgument, "grid resolution must be >= 4");
  for (int i = 0; i < dim(); ++i) {
    const auto& t = source_[i];
    const std::size_t n = ipow(res + 1, i + 1);
    if (t.coord != i || t.res != res || t.cdf.size() != n || t.density.size() != n)
      throw Error(ErrorKind::DimensionMismatch, "malformed conditional CDF table for coordinate " + std::to_string(i));
    const auto& r = reference_[i];
    if (!r.identity && (r.res < 4 || r.cdf.size() != static_cast<std::size_t>(r.res + 1) ||
                        r.density.size() != r.cdf.size()))
      throw Error(ErrorKind::DimensionMismatch, "malformed reference table for coordinate " + std::to_string(i));
  }
}

std::pair<double, double> TriangularMap::source_cdf(int i, std::span<const double> x) const {
  const auto& tab = source_[i];
  const int res = tab.res;
  const std::size_t R = res + 1;
  const double h = 1.0 / res;
  const Cell cell = locate(x[i], res);

  std::array<Lagrange4, 3> st;
  for (int a = 0; a < i; ++a) st[a] = lagrange_stencil(x[a], res);
  const int combos = 1 << (2 * i);
  double v = 0.0, dv = 0.0;
  for (int k = 0; k < combos; ++k) {
    std::size_t base = 0;
    double w = 1.0;
    for (int a = 0; a < i; ++a) {
      const int o = (k >> (2 * a)) & 3;
      base = base * R + static_cast<std::size_t>(st[a].start + o);
      w *= st[a].w[o];
    }
    const std::size_t i0 = base * R + cell.c;
    const auto [hv, hd] =
        hermite(tab.cdf[i0], tab.cdf[i0 + 1], tab.density[i0], tab.density[i0 + 1], cell.tau, h);
    v += w * hv;
    dv += w * hd;
  }
  return {std::clamp(v, 0.0, 1.0), dv};
}

std::pair<double, double> TriangularMap::reference_inverse(int i, double u) const {
  const auto& r = reference_[i];
  if (r.identity) return {u, 1.0};
  const double h = 1.0 / r.res;
  auto gd = [&](double s) {
    const Cell c = locate(s, r.res);
    return hermite(r.cdf[c.c], r.cdf[c.c + 1], r.density[c.c], r.density[c.c + 1], c.tau, h);
  };
  const double s = solve_increasing(gd, u, u);
  const double dens = gd(s).second;
  return {s, 1.0 / dens};
}

std::pair<double, double> TriangularMap::component_with_derivative(int i, std::span<const double> x) const {
  const auto [F, dF] = source_cdf(i, x);
  const auto [s, dinv] = reference_inverse(i, F);
  return {s, dF * dinv};
}

double TriangularMap::component(int i, std::span<const double> x) const {
  return component_with_derivative(i, x).first;
}

double TriangularMap::diag_derivative(int i, std::span<const double> x) const {
  return component_with_derivative(i, x).second;
}

double TriangularMap::cond_inverse(int i, std::span<const double> prefix, double y) const {
  std::vector<double> buf(prefix.begin(), prefix.begin() + i);
  buf.push_back(0.0);
  auto gd = [&](double s) {
    buf[i] = s;
    return component_with_derivative(i, buf);
  };
  return solve_increasing(gd, y, y);
}

std::vector<double> TriangularMap::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim()) throw Error(ErrorKind::DimensionMismatch, "point dim != map dim");
  std::vector<double> y(dim());
  for (int i = 0; i < dim(); ++i) y[i] = component(i, x);
  return y;
}

std::vector<double> TriangularMap::inverse(std::span<const double> y) const {
  if (static_cast<int>(y.size()) != dim()) throw Error(ErrorKind::DimensionMismatch, "point dim != map dim");
  std::vector<double> x(dim());
  for (int i = 0; i < dim(); ++i) x[i] = cond_inverse(i, x, y[i]);
  return x;
}

double TriangularMap::log_det(std::span<const double> x) const {
  double s = 0.0;
  for (int i = 0; i < dim(); ++i) s += std::log(diag_derivative(i, x));
  return s;
}

nlohmann::json TriangularMap::to_json() const {
  nlohmann::json j;
  j["format"] = "cubeflow.kr_map";
  j["version"] = 1;
  j["dim"] = dim();
  j["grid_res"] = grid_res();
  j["axis_order"] = "row_major_last_fastest";
  j["interpolation"] = "hermite_last_lagrange4_conditioning";
  for (const auto& t : source_)
    j["source"].push_back({{"coord", t.coord}, {"res", t.res}, {"cdf", t.cdf}, {"density", t.density}});
  for (const auto& r : reference_)
    j["reference"].push_back({{"identity", r.identity}, {"res", r.res}, {"cdf", r.cdf}, {"density", r.density}});
  return j;
}

TriangularMap TriangularMap::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cubeflow.kr_map" || j.at("version") != 1)
      throw Error(ErrorKind::ConfigError, "not a version-1 KR map document");
    std::vector<ConditionalCdfTable> src;
    std::vector<ReferenceCdf> ref;
    for (const auto& t : j.at("source"))
      src.push_back({t.at("coord").get<int>(), t.at("res").get<int>(), t.at("cdf").get<std::vector<double>>(),
                     t.at("density").get<std::vector<double>>()});
    for (const auto& r : j.at("reference"))
      ref.push_back({r.at("identity").get<bool>(), r.at("res").get<int>(), r.at("cdf").get<std::vector<double>>(),
                     r.at("density").get<std::vector<double>>()});
    if (static_cast<int>(src.size()) != j.at("dim").get<int>())
      throw Error(ErrorKind::DimensionMismatch, "KR map document dim does not match its tables");
    return TriangularMap(std::move(src), std::move(ref));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad KR map document: ") + e.what());
  }
}

int default_grid_res(int dim) {
  switch (dim) {
    case 1: return 256;
    case 2: return 128;
    default: return 64;
  }
}

TriangularMap build_kr_map(const AnalyticDensity& p0, const AnalyticDensity& rho, int grid_res) {
  if (p0.dim != rho.dim) throw Error(ErrorKind::DimensionMismatch, "p0 and rho differ in dimension");
  const int d = p0.dim;
  if (d < 1 || d > 3) throw Error(ErrorKind::InvalidArgument, "KR tables support 1 <= d <= 3");
  if (!rho.is_product || static_cast<int>(rho.marginals.size()) != d)
    throw Error(ErrorKind::NonProductReference, "reference density '" + rho.name + "' does not factorize");
  if (!(p0.lower_bound > 0.0) || !(rho.lower_bound > 0.0))
    throw Error(ErrorKind::DegenerateDensity, "densities must be bounded below by a positive constant");
  if (grid_res < 4) throw Error(ErrorKind::InvalidArgument, "grid_res must be >= 4");

  const int res = grid_res;
  const std::size_t R = res + 1;
  const double h = 1.0 / res;
  const auto cell_rule = QuadratureGrid::gauss_legendre(8);
  const auto tail_rule = QuadratureGrid::gauss_legendre(32);

  std::vector<ConditionalCdfTable> source(d);
  for (int i = 0; i < d; ++i) {
    const int rest = d - i - 1;
    std::vector<std::vector<double>> tail;
    std::vector<double> tail_w;
    if (rest > 0) {
      tail = tensor_nodes(tail_rule, rest);
      const std::size_t n = tail_rule.nodes_per_axis;
      tail_w.resize(tail.size());
      for (std::size_t k = 0; k < tail.size(); ++k) {
        double w = 1.0;
        std::size_t idx = k;
        for (int a = rest - 1; a >= 0; --a) {
          w *= tail_rule.weights[idx % n];
          idx /= n;
        }
        tail_w[k] = w;
      }
    }
    auto marginal = [&](std::vector<double>& x) {
      if (rest == 0) return p0(x);
      long double s = 0.0L;
      for (std::size_t k = 0; k < tail.size(); ++k) {
        std::copy(tail[k].begin(), tail[k].end(), x.begin() + i + 1);
        s += tail_w[k] * p0(x);
      }
      return static_cast<double>(s);
    };

    auto& tab = source[i];
    tab.coord = i;
    tab.res = res;
    tab.cdf.assign(ipow(R, i + 1), 0.0);
    tab.density.assign(tab.cdf.size(), 0.0);
    const std::size_t n_prefix = ipow(R, i);
    parallel_for(n_prefix, [&](std::size_t p) {
      std::vector<double> x(d, 0.0);
      std::size_t q = p;
      for (int a = i - 1; a >= 0; --a) {
        x[a] = static_cast<double>(q % R) / res;
        q /= R;
      }
      std::vector<long double> cum(R, 0.0L);
      std::vector<double> node(R);
      for (int l = 0; l < res; ++l) {
        long double s = 0.0L;
        for (int g = 0; g < cell_rule.nodes_per_axis; ++g) {
          x[i] = (l + cell_rule.nodes[g]) * h;
          s += cell_rule.weights[g] * marginal(x);
        }
        cum[l + 1] = cum[l] + s * h;
      }
      for (std::size_t l = 0; l < R; ++l) {
        x[i] = static_cast<double>(l) / res;
        node[l] = marginal(x);
        if (!(node[l] >= 1e-10))
          throw Error(ErrorKind::DegenerateDensity, "conditional marginal of coordinate " + std::to_string(i) +
                                                        " below 1e-10 on the grid");
      }
      const long double total = cum[res];
      if (!(total >= 1e-10)) throw Error(ErrorKind::DegenerateDensity, "conditional normalizer below 1e-10");
      const std::size_t off = p * R;
      for (std::size_t l = 0; l < R; ++l) {
        tab.cdf[off + l] = static_cast<double>(cum[l] / total);
        tab.density[off + l] = static_cast<double>(node[l] / total);
      }
      tab.cdf[off] = 0.0;
      tab.cdf[off + res] = 1.0;
      limit_monotone(std::span<const double>(tab.cdf).subspan(off, R),
                     std::span<double>(tab.density).subspan(off, R), h);
    });
  }

  std::vector<ReferenceCdf> reference(d);
  for (int i = 0; i < d; ++i) {
    const auto& m = rho.marginals[i];
    auto& r = reference[i];
    r.res = res;
    if (m.is_uniform) {
      r.identity = true;
      continue;
    }
    r.cdf.assign(R, 0.0);
    r.density.assign(R, 0.0);
    long double cum = 0.0L;
    for (int l = 0; l <= res; ++l) {
      const double x = static_cast<double>(l) / res;
      if (l > 0 && !m.cdf) {
        long double s = 0.0L;
        for (int g = 0; g < cell_rule.nodes_per_axis; ++g)
          s += cell_rule.weights[g] * m.pdf((l - 1 + cell_rule.nodes[g]) * h);
        cum += s * h;
      }
      r.cdf[l] = m.cdf ? m.cdf(x) : static_cast<double>(cum);
      r.density[l] = m.pdf(x);
    }
    const double total = r.cdf[res];
    for (int l = 0; l <= res; ++l) {
      r.cdf[l] /= total;
      r.density[l] /= total;
    }
    r.cdf[0] = 0.0;
    r.cdf[res] = 1.0;
    limit_monotone(r.cdf, r.density, h);
  }
  return TriangularMap(std::move(source), std::move(reference));
}

double kr_pushforward_residual(const TriangularMap& T, const AnalyticDensity& p0, const AnalyticDensity& rho,
                               const QuadratureGrid& grid) {
  const int d = T.dim();
  if (p0.dim != d || rho.dim != d) throw Error(ErrorKind::DimensionMismatch, "residual: dimension mismatch");
  const auto nodes = tensor_nodes(grid, d);
  std::vector<double> res(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t k) {
    const auto& x = nodes[k];
    std::vector<double> y(d);
    double jac = 1.0;
    for (int i = 0; i < d; ++i) {
      const auto [v, dv] = T.component_with_derivative(i, x);
      y[i] = v;
      jac *= dv;
    }
    res[k] = std::abs(p0(x) - rho(y) * jac);
  });
  return res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
}

void invert_straight_line(const TriangularMap& T, std::span<const double> y, double t, std::span<double> x) {
  const int d = T.dim();
  if (static_cast<int>(y.size()) != d || static_cast<int>(x.size()) != d)
    throw Error(ErrorKind::DimensionMismatch, "inversion: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::OutOfDomain, "inversion: t outside [0,1]");
  for (int i = 0; i < d; ++i) {
    if (!(y[i] >= -1e-9 && y[i] <= 1.0 + 1e-9)) throw Error(ErrorKind::OutOfDomain, "inversion: y outside cube");
  }
  if (t == 0.0) {
    for (int i = 0; i < d; ++i) x[i] = std::clamp(y[i], 0.0, 1.0);
    return;
  }
  std::vector<double> buf(d, 0.0);
  for (int i = 0; i < d; ++i) {
    const double yi = std::clamp(y[i], 0.0, 1.0);
    auto gd = [&](double s) {
      buf[i] = s;
      const auto [v, dv] = T.component_with_derivative(i, std::span<const double>(buf.data(), i + 1));
      return std::pair<double, double>{t * v + (1.0 - t) * s, t * dv + (1.0 - t)};
    };
    buf[i] = solve_increasing(gd, yi, yi);
    x[i] = buf[i];
  }
}

CubePoint invert_straight_line(const TriangularMap& T, const CubePoint& y, double t) {
  std::vector<double> x(y.dim());
  invert_straight_line(T, y.coords(), t, x);
  return CubePoint::clamped(std::move(x));
}

void StraightLineField::eval(std::span<const double> y, double s, std::span<double> out) const {
  const int d = dim();
  std::vector<double> x(d);
  invert_straight_line(*map_, y, s, x);
  for (int i = 0; i < d; ++i) out[i] = map_->component(i, x) - x[i];
}

std::shared_ptr<StraightLineField> straight_line_field(std::shared_ptr<const TriangularMap> map) {
  return std::make_shared<StraightLineField>(std::move(map));
}

BoundaryReport boundary_vanishing_check(const VelocityField& f, double eps_band, int n_probe) {
  if (!(eps_band > 0.0 && eps_band < 0.5)) throw Error(ErrorKind::InvalidArgument, "eps_band must lie in (0, 0.5)");
  const int d = f.dim();
  const int levels = std::max(n_probe, 4);
  const double inner = std::min(1e-8, eps_band);
  std::vector<double> delta(levels);
  for (int k = 0; k < levels; ++k)
    delta[k] = eps_band * std::pow(inner / eps_band, static_cast<double>(k) / (levels - 1));
  const auto base = halton_points(8, d + 1);

  BoundaryReport rep;
  const int quarter = std::max(1, levels / 4);
  std::vector<double> out(d);
  for (const auto& b : base) {
    const double t = b[d];
    for (int j = 0; j < d; ++j) {
      for (int face = 0; face < 2; ++face) {
        for (int k = 0; k < levels; ++k) {
          std::vector<double> x(b.begin(), b.begin() + d);
          x[j] = face == 0 ? delta[k] : 1.0 - delta[k];
          f.eval(x, t, out);
          const double ratio = std::abs(out[j]) / (x[j] * (1.0 - x[j]));
          if (!std::isfinite(ratio)) {
            rep.admissible = false;
            rep.ratio_sup = std::numeric_limits<double>::infinity();
            continue;
          }
          if (ratio > rep.ratio_sup) {
            rep.ratio_sup = ratio;
            rep.worst_point = x;
            rep.worst_t = t;
          }
          if (k < quarter) rep.outer_ratio = std::max(rep.outer_ratio, ratio);
          if (k >= levels - quarter) rep.inner_ratio = std::max(rep.inner_ratio, ratio);
        }
      }
    }
  }
  if (rep.inner_ratio > 10.0 * rep.outer_ratio + 1e-12) rep.admissible = false;
  return rep;
}

}  // namespace cubeflow

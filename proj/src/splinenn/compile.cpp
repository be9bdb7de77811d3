#include "cubeflow/splinenn/compile.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

PowerCombination power_combination(int p, int q) {
  if (p < 2 || q < 0 || q > p) throw Error(ErrorKind::InvalidArgument, "power combination needs p >= 2, 0 <= q <= p");
  PowerCombination pc;
  pc.p = p;
  pc.q = q;
  if (q == p) {
    pc.shifts = {0.0};
    pc.coeffs = {1.0};
    return pc;
  }
  const int nc = p + 1;
  for (int j = 0; j < nc; ++j) pc.shifts.push_back(j - p / 2);
  // (y + c)^p = sum_i C(p,i) c^{p-i} y^i; match y^i coefficients for i = 0..p
  Eigen::MatrixXd A(nc, nc);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nc);
  for (int i = 0; i <= p; ++i) {
    for (int j = 0; j < nc; ++j) A(i, j) = binomial(p, i) * std::pow(pc.shifts[j], p - i);
    b(i) = i == q ? 1.0 : 0.0;
  }
  const Eigen::VectorXd a = A.fullPivLu().solve(b);
  pc.coeffs.assign(a.data(), a.data() + nc);
  return pc;
}

namespace {

// Affine form over the outputs of the current layer.
struct LinForm {
  std::map<int, double> terms;
  double bias = 0.0;

  LinForm& add(const LinForm& o, double s) {
    for (const auto& [i, w] : o.terms) terms[i] += s * w;
    bias += s * o.bias;
    return *this;
  }
};

class Builder {
 public:
  Builder(int d_in, int d_out, int p) : cur_(d_in) {
    net_.d_in = d_in;
    net_.d_out = d_out;
    net_.activation_power = p;
  }

  /// Queues a hidden unit eta_p(form); returns its index in the next layer.
  int unit(const LinForm& f) {
    pending_.push_back(f);
    return static_cast<int>(pending_.size()) - 1;
  }

  LinForm power_signal(const LinForm& y, const PowerCombination& pc) {
    LinForm out;
    const double sgn = (pc.p % 2) ? -1.0 : 1.0;
    for (std::size_t j = 0; j < pc.shifts.size(); ++j) {
      LinForm plus = y, minus;
      plus.bias += pc.shifts[j];
      minus.add(plus, -1.0);
      const int a = unit(plus), b = unit(minus);
      out.terms[a] += pc.coeffs[j];
      out.terms[b] += sgn * pc.coeffs[j];
    }
    return out;
  }

  void commit() {
    push_layer(net_, static_cast<int>(pending_.size()), cur_);
    write(net_.layers.back(), pending_);
    cur_ = static_cast<int>(pending_.size());
    pending_.clear();
  }

  NetworkSpec finish(const std::vector<LinForm>& outputs) {
    push_layer(net_, static_cast<int>(outputs.size()), cur_);
    write(net_.layers.back(), outputs);
    mask_nonzeros(net_);
    return net_;
  }

  int width() const { return static_cast<int>(pending_.size()); }

 private:
  static void write(Layer& L, const std::vector<LinForm>& forms) {
    for (int r = 0; r < L.rows; ++r) {
      for (const auto& [c, w] : forms[r].terms) L.weights[static_cast<std::size_t>(r) * L.cols + c] = w;
      L.bias[r] = forms[r].bias;
    }
  }

  NetworkSpec net_;
  int cur_;
  std::vector<LinForm> pending_;
};

LinForm input(int i, double w = 1.0, double b = 0.0) {
  LinForm f;
  f.terms[i] = w;
  f.bias = b;
  return f;
}

}  // namespace

NetworkSpec square_network(int p) {
  Builder b(1, 1, p);
  const LinForm sq = b.power_signal(input(0), power_combination(p, 2));
  b.commit();
  return b.finish({sq});
}

NetworkSpec product_network(int p) {
  Builder b(2, 1, p);
  const auto pc = power_combination(p, 2);
  LinForm s = input(0);
  s.add(input(1), 1.0);
  LinForm out = b.power_signal(s, pc);
  out.add(b.power_signal(input(0), pc), -1.0).add(b.power_signal(input(1), pc), -1.0);
  for (auto& [i, w] : out.terms) w *= 0.5;
  b.commit();
  return b.finish({out});
}

CompiledNetwork compile_to_network(const QuasiInterpolant& qi) {
  const int m = qi.m, n = qi.n, d = qi.d, p = m - 1;
  if (m < 3) throw Error(ErrorKind::UnsupportedOrder, "compilation needs m >= 3 (ReLU^{m-1} with m-1 >= 2)");
  const int nb = n + m - 1;
  CompiledNetwork cn;
  cn.m = m;
  cn.n = n;
  cn.d = d;
  Builder b(d, 1, p);

  // spline bank: B^m(n x - j) = sum_i (-1)^i C(m,i) eta_{m-1}(n x - j - i) / (m-1)!, or the mirrored
  // form eta_{m-1}(j + m - i - n x) when that keeps the truncated powers smaller on [0,1]
  const double fact = factorial(m - 1);
  std::vector<std::vector<LinForm>> signal(d, std::vector<LinForm>(nb));
  for (int a = 0; a < d; ++a) {
    for (int j = -m + 1; j <= n - 1; ++j) {
      LinForm& s = signal[a][j + m - 1];
      const bool mirrored = 2 * j <= n - m;
      for (int i = 0; i <= m; ++i) {
        const LinForm pre = mirrored ? input(a, -double(n), double(j + m - i)) : input(a, double(n), -double(j + i));
        const int u = b.unit(pre);
        s.terms[u] += ((i % 2) ? -1.0 : 1.0) * binomial(m, i) / fact;
      }
    }
  }
  cn.bank_units = b.width();
  b.commit();

  // groups: each holds forms over multi-indices of a contiguous block of axes
  struct Group {
    int axes;
    std::vector<LinForm> forms;  // row-major over the block's multi-indices
  };
  std::vector<Group> groups;
  for (int a = 0; a < d; ++a) groups.push_back({1, signal[a]});
  const auto sq = power_combination(p, 2), id = power_combination(p, 1);
  while (groups.size() > 1) {
    std::vector<Group> next;
    for (std::size_t g = 0; g + 1 < groups.size(); g += 2) {
      const Group &A = groups[g], &B = groups[g + 1];
      std::vector<LinForm> sqA, sqB;
      const int before = b.width();
      for (const auto& f : A.forms) sqA.push_back(b.power_signal(f, sq));
      for (const auto& f : B.forms) sqB.push_back(b.power_signal(f, sq));
      Group P{A.axes + B.axes, {}};
      for (std::size_t ia = 0; ia < A.forms.size(); ++ia) {
        for (std::size_t ib = 0; ib < B.forms.size(); ++ib) {
          LinForm s = A.forms[ia];
          s.add(B.forms[ib], 1.0);
          LinForm prod = b.power_signal(s, sq);
          prod.add(sqA[ia], -1.0).add(sqB[ib], -1.0);
          for (auto& [i, w] : prod.terms) w *= 0.5;
          P.forms.push_back(std::move(prod));
        }
      }
      cn.product_units += b.width() - before;
      next.push_back(std::move(P));
    }
    if (groups.size() % 2) {
      const Group& O = groups.back();
      const int before = b.width();
      Group I{O.axes, {}};
      for (const auto& f : O.forms) I.forms.push_back(b.power_signal(f, id));
      cn.passthrough_units += b.width() - before;
      next.push_back(std::move(I));
    }
    b.commit();
    groups = std::move(next);
  }

  LinForm out;
  for (std::size_t idx = 0; idx < groups[0].forms.size(); ++idx) out.add(groups[0].forms[idx], qi.coefficients[idx]);
  cn.net = b.finish({out});

  // size-bound constants
  double lam = 0.0, alpha = 0.0, binmax = 0.0, pc_max = 1.0;
  for (double w : qi.functional.weights) lam += std::abs(w);
  for (double a : qi.extension.alphas) alpha += std::abs(a);
  for (int i = 0; i <= m; ++i) binmax = std::max(binmax, binomial(m, i) / fact);
  for (double c : sq.coeffs) pc_max = std::max(pc_max, std::abs(c));
  for (double c : id.coeffs) pc_max = std::max(pc_max, std::abs(c));
  cn.C_L = 1 + static_cast<int>(std::ceil(std::log2(static_cast<double>(d)))) + 1;
  cn.C_N = 2.0 * (m + 1) * (2 * p + 2) * (2 * m + 4) * std::pow(3.0, d - 1);
  cn.N = cn.C_N * (1.0 + std::pow(double(m + n), d) + double(m) * (n + m) * d);
  cn.C_B = std::pow(lam * std::max(1.0, alpha), d) * std::max(1.0, binmax) * pc_max;
  return cn;
}

AuditReport audit_against_bounds(const CompiledNetwork& cn, double f_sup, double N) {
  const auto& a = cn.net.audit;
  AuditReport r;
  r.rows.push_back({"L", double(a.L), cn.C_L, a.L <= cn.C_L});
  r.rows.push_back({"W", double(a.W), N, a.W <= N});
  r.rows.push_back({"S", double(a.S), N, a.S <= N});
  const double bB = cn.C_B * (1.0 + f_sup) + std::pow(N, 1.0 / cn.d);
  r.rows.push_back({"B", a.B, bB, a.B <= bB});
  r.pass = std::all_of(r.rows.begin(), r.rows.end(), [](const AuditRow& x) { return x.pass; });
  return r;
}

nlohmann::json audit_to_json(const AuditReport& r) {
  nlohmann::json j;
  j["pass"] = r.pass;
  for (const auto& row : r.rows)
    j["rows"].push_back({{"name", row.name}, {"value", row.value}, {"bound", row.bound}, {"pass", row.pass}});
  return j;
}

}  // namespace cubeflow

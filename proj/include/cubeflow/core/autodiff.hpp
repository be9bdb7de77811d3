#pragma once

// Minimal tape-based reverse-mode automatic differentiation.
//
// Every arithmetic operation on `Var` appends one node (at most two parents with
// local partials) to the calling thread's tape. `Tape::gradient` sweeps the tape
// backwards once. Constants never touch the tape.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace cubeflow::ad {

class Tape {
 public:
  struct Node {
    std::int32_t a, b;
    double da, db;
  };

  static Tape& active() {
    thread_local Tape tape;
    return tape;
  }

  std::int32_t push(std::int32_t a, double da, std::int32_t b, double db) {
    nodes_.push_back({a, b, da, db});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  void reset() { nodes_.clear(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adjoints of every node with respect to `output`.
  const std::vector<double>& gradient(std::int32_t output) {
    adjoint_.assign(nodes_.size(), 0.0);
    if (output < 0) return adjoint_;
    adjoint_[output] = 1.0;
    for (std::int32_t i = output; i >= 0; --i) {
      const double g = adjoint_[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.a >= 0) adjoint_[n.a] += n.da * g;
      if (n.b >= 0) adjoint_[n.b] += n.db * g;
    }
    return adjoint_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adjoint_;
};

class Var {
 public:
  Var() = default;
  Var(double v) : v_(v) {}  // NOLINT: implicit constants are the point
  Var(double v, std::int32_t idx) : v_(v), idx_(idx) {}

  /// New independent variable on the active tape.
  static Var input(double v) { return Var(v, Tape::active().push(-1, 0.0, -1, 0.0)); }

  double value() const noexcept { return v_; }
  std::int32_t index() const noexcept { return idx_; }
  bool is_constant() const noexcept { return idx_ < 0; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var unary(const Var& x, double value, double dx) {
    if (x.idx_ < 0) return Var(value);
    return Var(value, Tape::active().push(x.idx_, dx, -1, 0.0));
  }
  friend Var binary(const Var& x, double dx, const Var& y, double dy, double value) {
    if (x.idx_ < 0 && y.idx_ < 0) return Var(value);
    if (y.idx_ < 0) return Var(value, Tape::active().push(x.idx_, dx, -1, 0.0));
    if (x.idx_ < 0) return Var(value, Tape::active().push(y.idx_, dy, -1, 0.0));
    return Var(value, Tape::active().push(x.idx_, dx, y.idx_, dy));
  }

  friend Var operator+(const Var& x, const Var& y) { return binary(x, 1.0, y, 1.0, x.v_ + y.v_); }
  friend Var operator-(const Var& x, const Var& y) { return binary(x, 1.0, y, -1.0, x.v_ - y.v_); }
  friend Var operator*(const Var& x, const Var& y) { return binary(x, y.v_, y, x.v_, x.v_ * y.v_); }
  friend Var operator/(const Var& x, const Var& y) {
    const double q = x.v_ / y.v_;
    return binary(x, 1.0 / y.v_, y, -q / y.v_, q);
  }
  friend Var operator-(const Var& x) { return unary(x, -x.v_, -1.0); }

  friend bool operator<(const Var& x, const Var& y) { return x.v_ < y.v_; }
  friend bool operator>(const Var& x, const Var& y) { return x.v_ > y.v_; }
  friend bool operator<=(const Var& x, const Var& y) { return x.v_ <= y.v_; }
  friend bool operator>=(const Var& x, const Var& y) { return x.v_ >= y.v_; }

 private:
  double v_ = 0.0;
  std::int32_t idx_ = -1;
};

inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(x, e, e);
}
inline Var log(const Var& x) { return unary(x, std::log(x.value()), 1.0 / x.value()); }
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return unary(x, s, 0.5 / s);
}
inline Var sin(const Var& x) { return unary(x, std::sin(x.value()), std::cos(x.value())); }
inline Var cos(const Var& x) { return unary(x, std::cos(x.value()), -std::sin(x.value())); }
inline Var abs(const Var& x) { return unary(x, std::abs(x.value()), x.value() < 0 ? -1.0 : 1.0); }

}  // namespace cubeflow::ad

namespace cubeflow {

inline double value_of(double x) noexcept { return x; }
inline double value_of(const ad::Var& x) noexcept { return x.value(); }

/// max(x,0)^m (with 0^0 := 0) and its derivative m max(x,0)^(m-1), shared by double and Var code.
inline double relu_power(double x, int m) noexcept {
  if (x <= 0.0) return 0.0;
  double r = 1.0;
  for (int i = 0; i < m; ++i) r *= x;
  return r;
}
inline double relu_power_derivative(double x, int m) noexcept {
  if (m == 0) return 0.0;
  return m * relu_power(x, m - 1);
}
inline ad::Var relu_power(const ad::Var& x, int m) {
  return unary(x, relu_power(x.value(), m), relu_power_derivative(x.value(), m));
}
inline ad::Var relu_power_derivative(const ad::Var& x, int m) {
  if (m == 0) return ad::Var(0.0);
  return unary(x, relu_power_derivative(x.value(), m), m * relu_power_derivative(x.value(), m - 1));
}

}  // namespace cubeflow

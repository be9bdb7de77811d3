#include "cubeflow/core/velocity_field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cubeflow/core/error.hpp"
#include "cubeflow/core/parallel.hpp"

namespace cubeflow {

void VelocityField::jacobian(std::span<const double> x, double t, std::span<double> jac) const {
  const int d = dim();
  const double h = fd_step();
  std::vector<double> y(x.begin(), x.end()), f0(d), f1(d), f2(d);
  for (int k = 0; k < d; ++k) {
    const double xk = x[k];
    if (xk - h >= 0.0 && xk + h <= 1.0) {
      y[k] = xk + h;
      eval(y, t, f1);
      y[k] = xk - h;
      eval(y, t, f2);
      for (int j = 0; j < d; ++j) jac[j * d + k] = (f1[j] - f2[j]) / (2.0 * h);
    } else {
      // (-3 f(x) + 4 f(x + s h) - f(x + 2 s h)) / (2 s h), s pointing into the cube
      const double s = (xk - h < 0.0) ? 1.0 : -1.0;
      eval(x, t, f0);
      y[k] = xk + s * h;
      eval(y, t, f1);
      y[k] = xk + 2.0 * s * h;
      eval(y, t, f2);
      for (int j = 0; j < d; ++j) jac[j * d + k] = (-3.0 * f0[j] + 4.0 * f1[j] - f2[j]) / (2.0 * s * h);
    }
    y[k] = xk;
  }
}

void time_derivative(const VelocityField& f, std::span<const double> x, double t, std::span<double> out,
                     double step) {
  const int d = f.dim();
  std::vector<double> a(d), b(d), c(d);
  if (t - step >= 0.0 && t + step <= 1.0) {
    f.eval(x, t + step, a);
    f.eval(x, t - step, b);
    for (int j = 0; j < d; ++j) out[j] = (a[j] - b[j]) / (2.0 * step);
  } else {
    const double s = (t - step < 0.0) ? 1.0 : -1.0;
    f.eval(x, t, a);
    f.eval(x, t + s * step, b);
    f.eval(x, t + 2.0 * s * step, c);
    for (int j = 0; j < d; ++j) out[j] = (-3.0 * a[j] + 4.0 * b[j] - c[j]) / (2.0 * s * step);
  }
}

void ZeroField::eval(std::span<const double>, double, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

void ZeroField::jacobian(std::span<const double>, double, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
}

void LogisticField::eval(std::span<const double> x, double, std::span<double> out) const {
  for (int j = 0; j < dim_; ++j) out[j] = c_ * x[j] * (1.0 - x[j]);
}

void LogisticField::jacobian(std::span<const double> x, double, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
  for (int j = 0; j < dim_; ++j) jac[j * dim_ + j] = c_ * (1.0 - 2.0 * x[j]);
}

std::string LogisticField::describe() const {
  std::ostringstream os;
  os << "logistic(c=" << c_ << ")";
  return os.str();
}

void LogisticField::eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var&,
                            std::span<ad::Var> value, std::span<ad::Var> jac) const {
  for (auto& v : jac) v = ad::Var(0.0);
  for (int j = 0; j < dim_; ++j) {
    value[j] = theta[0] * x[j] * (1.0 - x[j]);
    jac[j * dim_ + j] = theta[0] * (1.0 - 2.0 * x[j]);
  }
}

void ConstantField::eval(std::span<const double>, double, std::span<double> out) const {
  std::fill(out.begin(), out.end(), value_);
}

void ConstantField::jacobian(std::span<const double>, double, std::span<double> jac) const {
  std::fill(jac.begin(), jac.end(), 0.0);
}

DifferenceField::DifferenceField(std::shared_ptr<const VelocityField> f, std::shared_ptr<const VelocityField> g)
    : f_(std::move(f)), g_(std::move(g)) {
  if (f_->dim() != g_->dim()) throw Error(ErrorKind::DimensionMismatch, "difference of fields with different dim");
}

void DifferenceField::eval(std::span<const double> x, double t, std::span<double> out) const {
  std::vector<double> b(out.size());
  f_->eval(x, t, out);
  g_->eval(x, t, b);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= b[j];
}

void DifferenceField::jacobian(std::span<const double> x, double t, std::span<double> jac) const {
  std::vector<double> b(jac.size());
  f_->jacobian(x, t, jac);
  g_->jacobian(x, t, b);
  for (std::size_t j = 0; j < jac.size(); ++j) jac[j] -= b[j];
}

double c1_sup(const VelocityField& f, const std::vector<std::vector<double>>& probes_xt) {
  const int d = f.dim();
  std::vector<double> part(probes_xt.size());
  parallel_for(probes_xt.size(), [&](std::size_t k) {
    const auto& z = probes_xt[k];
    std::span<const double> x(z.data(), d);
    const double t = z[d];
    std::vector<double> v(d), A(static_cast<std::size_t>(d) * d), dt(d);
    f.eval_with_jacobian(x, t, v, A);
    time_derivative(f, x, t, dt);
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    for (double a : A) m = std::max(m, std::abs(a));
    for (double a : dt) m = std::max(m, std::abs(a));
    part[k] = m;
  });
  return part.empty() ? 0.0 : *std::max_element(part.begin(), part.end());
}

}  // namespace cubeflow

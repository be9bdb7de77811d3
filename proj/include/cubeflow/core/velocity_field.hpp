#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cubeflow/core/autodiff.hpp"

namespace cubeflow {

/// Time-dependent vector field on D x [0,1] with values in R^d.
/// Jacobians are row-major d x d: jac[j*d + k] = d f_j / d x_k.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual void eval(std::span<const double> x, double t, std::span<double> out) const = 0;

  /// Central differences with step `fd_step()`, one-sided second-order stencils within a
  /// step of a face so probes never leave the cube.
  virtual void jacobian(std::span<const double> x, double t, std::span<double> jac) const;

  virtual void eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                                  std::span<double> jac) const {
    eval(x, t, out);
    jacobian(x, t, jac);
  }

  /// Whether the field's normal component is declared to vanish on the boundary.
  virtual bool admissible() const { return true; }
  virtual std::string describe() const = 0;

 protected:
  virtual double fd_step() const { return 1e-6; }
};

/// Derivative of the field in t by central differences (one-sided at t = 0, 1).
void time_derivative(const VelocityField& f, std::span<const double> x, double t, std::span<double> out,
                     double step = 1e-6);

/// Empirical ||f||_{C^1(Omega)}: max of |f_j|, |d_k f_j| and |d_t f_j| over (x,t) probes.
double c1_sup(const VelocityField& f, const std::vector<std::vector<double>>& probes_xt);

/// Velocity field with a flat parameter vector whose evaluation can be recorded on the AD tape.
class ParametricField : public VelocityField {
 public:
  virtual std::size_t num_params() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> theta) = 0;

  /// Value and spatial Jacobian with parameters, state and time as tape variables.
  virtual void eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
                       std::span<ad::Var> value, std::span<ad::Var> jac) const = 0;

  /// Parameters that the optimizer may move (sparsity masks pin the others at zero).
  virtual std::vector<bool> trainable_mask() const { return std::vector<bool>(num_params(), true); }

  /// Multiplies the realized field by `factor` exactly (output-layer scaling).
  virtual void scale_output(double factor) = 0;

  virtual std::unique_ptr<ParametricField> clone() const = 0;
};

/// f = 0.
class ZeroField final : public VelocityField {
 public:
  explicit ZeroField(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  void eval(std::span<const double>, double, std::span<double> out) const override;
  void jacobian(std::span<const double>, double, std::span<double> jac) const override;
  std::string describe() const override { return "zero"; }

 private:
  int dim_;
};

/// f_j(x,t) = c x_j (1 - x_j); single parameter c.
class LogisticField final : public ParametricField {
 public:
  LogisticField(int dim, double c) : dim_(dim), c_(c) {}
  int dim() const override { return dim_; }
  double rate() const { return c_; }
  void eval(std::span<const double> x, double t, std::span<double> out) const override;
  void jacobian(std::span<const double> x, double t, std::span<double> jac) const override;
  std::string describe() const override;

  std::size_t num_params() const override { return 1; }
  std::vector<double> params() const override { return {c_}; }
  void set_params(std::span<const double> theta) override { c_ = theta[0]; }
  void eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
               std::span<ad::Var> value, std::span<ad::Var> jac) const override;
  void scale_output(double factor) override { c_ *= factor; }
  std::unique_ptr<ParametricField> clone() const override { return std::make_unique<LogisticField>(*this); }

 private:
  int dim_;
  double c_;
};

/// Pointwise constant field (1,...,1); violates the boundary condition, used as a negative control.
class ConstantField final : public VelocityField {
 public:
  ConstantField(int dim, double value) : dim_(dim), value_(value) {}
  int dim() const override { return dim_; }
  void eval(std::span<const double>, double, std::span<double> out) const override;
  void jacobian(std::span<const double>, double, std::span<double> jac) const override;
  bool admissible() const override { return false; }
  std::string describe() const override { return "constant"; }

 private:
  int dim_;
  double value_;
};

/// f - g, used to measure field distances.
class DifferenceField final : public VelocityField {
 public:
  DifferenceField(std::shared_ptr<const VelocityField> f, std::shared_ptr<const VelocityField> g);
  int dim() const override { return f_->dim(); }
  void eval(std::span<const double> x, double t, std::span<double> out) const override;
  void jacobian(std::span<const double> x, double t, std::span<double> jac) const override;
  std::string describe() const override { return f_->describe() + " - " + g_->describe(); }

 private:
  std::shared_ptr<const VelocityField> f_, g_;
};

/// Non-owning shared_ptr for fields whose lifetime the caller guarantees.
inline std::shared_ptr<const VelocityField> borrow(const VelocityField& f) {
  return std::shared_ptr<const VelocityField>(&f, [](const VelocityField*) {});
}

}  // namespace cubeflow

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/velocity_field.hpp"
#include "cubeflow/fields/network.hpp"

namespace cubeflow {

/// f(x,t) = net(x,t) with d_in = d+1, d_out = d. Parameters are the flat network entries.
class NetworkField final : public ParametricField {
 public:
  explicit NetworkField(NetworkSpec net);
  int dim() const override { return net_.d_out; }
  const NetworkSpec& spec() const { return net_; }

  void eval(std::span<const double> x, double t, std::span<double> out) const override;
  void jacobian(std::span<const double> x, double t, std::span<double> jac) const override;
  void eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                          std::span<double> jac) const override;
  std::string describe() const override;

  std::size_t num_params() const override { return net_.num_params(); }
  std::vector<double> params() const override { return theta_; }
  void set_params(std::span<const double> theta) override;
  void eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
               std::span<ad::Var> value, std::span<ad::Var> jac) const override;
  std::vector<bool> trainable_mask() const override { return net_.flat_mask(); }
  void scale_output(double factor) override;
  std::unique_ptr<ParametricField> clone() const override { return std::make_unique<NetworkField>(*this); }

 private:
  NetworkSpec net_;
  std::vector<double> theta_;
};

/// Tensor-product B-spline field over (x,t): component j is
/// sum_nu c_{j,nu} prod_a B^m(n_a z_a - nu_a), with n_a = n_x for space axes and n_t for time.
class SplineField final : public ParametricField {
 public:
  SplineField(int dim, int order, int n_x, int n_t);
  int dim() const override { return dim_; }
  int order() const { return m_; }
  int n_x() const { return n_x_; }
  int n_t() const { return n_t_; }
  std::size_t coeffs_per_component() const { return per_comp_; }

  void eval(std::span<const double> x, double t, std::span<double> out) const override;
  void jacobian(std::span<const double> x, double t, std::span<double> jac) const override;
  void eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                          std::span<double> jac) const override;
  std::string describe() const override;

  std::size_t num_params() const override { return coef_.size(); }
  std::vector<double> params() const override { return coef_; }
  void set_params(std::span<const double> theta) override;
  void eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
               std::span<ad::Var> value, std::span<ad::Var> jac) const override;
  void scale_output(double factor) override;
  std::unique_ptr<ParametricField> clone() const override { return std::make_unique<SplineField>(*this); }

  template <class S>
  void evaluate(std::span<const S> coef, std::span<const S> x, const S& t, std::span<S> value, std::span<S> jac) const;

 private:
  int dim_, m_, n_x_, n_t_;
  std::size_t per_comp_;
  std::vector<double> coef_;
};

/// Component-wise cutoff: f_j(x,t) = inner_j(x,t) x_j (1 - x_j). Parametric when the inner
/// field is.
class CutoffField final : public ParametricField {
 public:
  explicit CutoffField(std::shared_ptr<VelocityField> inner);
  int dim() const override { return inner_->dim(); }
  const VelocityField& inner() const { return *inner_; }
  std::shared_ptr<VelocityField> inner_ptr() const { return inner_; }

  void eval(std::span<const double> x, double t, std::span<double> out) const override;
  void jacobian(std::span<const double> x, double t, std::span<double> jac) const override;
  void eval_with_jacobian(std::span<const double> x, double t, std::span<double> out,
                          std::span<double> jac) const override;
  std::string describe() const override { return "cutoff(" + inner_->describe() + ")"; }

  std::size_t num_params() const override;
  std::vector<double> params() const override;
  void set_params(std::span<const double> theta) override;
  void eval_ad(std::span<const ad::Var> theta, std::span<const ad::Var> x, const ad::Var& t,
               std::span<ad::Var> value, std::span<ad::Var> jac) const override;
  std::vector<bool> trainable_mask() const override;
  void scale_output(double factor) override;
  std::unique_ptr<ParametricField> clone() const override;

 private:
  ParametricField& param_inner() const;
  std::shared_ptr<VelocityField> inner_;
};

std::shared_ptr<CutoffField> apply_cutoff(std::shared_ptr<VelocityField> inner);

/// Constant inner field (value v in every component) for cutoff checks.
class ConstantInner final : public VelocityField {
 public:
  ConstantInner(int dim, double v) : dim_(dim), v_(v) {}
  int dim() const override { return dim_; }
  void eval(std::span<const double>, double, std::span<double> out) const override;
  void jacobian(std::span<const double>, double, std::span<double> jac) const override;
  bool admissible() const override { return false; }
  std::string describe() const override { return "const"; }

 private:
  int dim_;
  double v_;
};

struct FieldNormReport {
  double c1_norm = 0.0;
  double w2inf_norm = 0.0;
  double lip_of_gradient = 0.0;
  int probe_count = 0;
  /// max{c1_norm, lip_of_gradient}, the radius used by the flow-map Lipschitz bound.
  double radius() const { return std::max(c1_norm, lip_of_gradient); }
};

/// Empirical norms over Halton probes in D x [0,1] plus a 5-per-axis boundary grid:
/// C^1 from values, x-Jacobians and t-differences; W^{2,inf} proxy adds second central
/// differences (step 1e-4); Lipschitz constant of grad_x f from probe pairs at equal t.
FieldNormReport measure_field_norms(const VelocityField& f, int probes);

/// Rescales the output so the measured W^{2,inf} proxy is at most r; returns the factor used.
double project_norm_ball(ParametricField& f, double r, const FieldNormReport& report);

/// Network-level projection by final-layer rescaling.
NetworkSpec project_norm_ball(const NetworkSpec& net, double r, const FieldNormReport& report);

nlohmann::json field_to_json(const ParametricField& f);
std::unique_ptr<ParametricField> field_from_json(const nlohmann::json& j);

}  // namespace cubeflow

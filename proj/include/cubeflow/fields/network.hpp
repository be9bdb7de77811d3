#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/autodiff.hpp"
#include "cubeflow/core/error.hpp"
#include "cubeflow/core/rng.hpp"

namespace cubeflow {

/// Affine layer y = W h + b with W row-major (rows = outputs). Masks mark the entries that
/// belong to the sparsity pattern; entries outside the mask stay zero.
struct Layer {
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<char> weight_mask;
  std::vector<char> bias_mask;
};

struct NetworkAudit {
  int L = 0;
  int W = 0;
  long S = 0;
  double B = 0.0;
  friend bool operator==(const NetworkAudit&, const NetworkAudit&) = default;
};

/// Layered ReLU^m network. By default the activation eta_m(x) = max(x,0)^m sits between
/// consecutive affine maps; with input_activation it is also applied to the raw input.
struct NetworkSpec {
  int d_in = 0;
  int d_out = 0;
  int activation_power = 2;
  bool input_activation = false;
  std::vector<Layer> layers;
  NetworkAudit audit;

  std::size_t num_params() const;
  /// Flat parameter vector: per layer, weights row-major then biases.
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> theta);
  std::vector<bool> flat_mask() const;
};

/// Recounts (L, W, S, B): W is the largest of d_in and all layer output sizes, S the number of
/// nonzero weights and biases, B the largest absolute entry.
NetworkAudit audit_network(const NetworkSpec& net);

/// Adds a dense layer with a full mask.
void push_layer(NetworkSpec& net, int rows, int cols);

/// Sets each layer's masks to its nonzero pattern and refreshes the audit.
void mask_nonzeros(NetworkSpec& net);

/// Throws DimensionMismatch unless the layer shapes chain from d_in to d_out.
void check_shapes(const NetworkSpec& net);

std::vector<double> eval_network(const NetworkSpec& net, std::span<const double> z);

/// d_out x d_in Jacobian, row-major, by the exact chain rule.
std::vector<double> eval_network_jacobian(const NetworkSpec& net, std::span<const double> z);

/// Forward pass with flat parameters `theta` (layout of flat_params) skipping masked-out
/// entries. Writes outputs and, when `jac` is non-empty, the d_out x d_in Jacobian.
template <class S>
void network_forward(const NetworkSpec& shape, std::span<const S> theta, std::span<const S> z, std::span<S> out,
                     std::span<S> jac) {
  const int m = shape.activation_power;
  const bool want_jac = !jac.empty();
  const int din = shape.d_in;
  std::vector<S> h(z.begin(), z.end()), Dh;  // Dh: d h / d z, row-major (size(h) x din)
  if (want_jac) {
    Dh.assign(static_cast<std::size_t>(din) * din, S(0.0));
    for (int i = 0; i < din; ++i) Dh[i * din + i] = S(1.0);
  }
  auto activate = [&](std::vector<S>& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (want_jac) {
        const S g = relu_power_derivative(a[i], m);
        for (int k = 0; k < din; ++k) Dh[i * din + k] = g * Dh[i * din + k];
      }
      a[i] = relu_power(a[i], m);
    }
  };
  if (shape.input_activation) activate(h);
  std::size_t off = 0;
  const std::size_t nl = shape.layers.size();
  for (std::size_t l = 0; l < nl; ++l) {
    const Layer& L = shape.layers[l];
    const std::size_t nw = static_cast<std::size_t>(L.rows) * L.cols;
    std::vector<S> a(L.rows, S(0.0)), Da;
    if (want_jac) Da.assign(static_cast<std::size_t>(L.rows) * din, S(0.0));
    for (int r = 0; r < L.rows; ++r) {
      S acc(0.0);
      for (int c = 0; c < L.cols; ++c) {
        const std::size_t e = static_cast<std::size_t>(r) * L.cols + c;
        if (!L.weight_mask[e]) continue;
        const S& w = theta[off + e];
        acc = acc + w * h[c];
        if (want_jac)
          for (int k = 0; k < din; ++k) Da[r * din + k] = Da[r * din + k] + w * Dh[c * din + k];
      }
      if (L.bias_mask[r]) acc = acc + theta[off + nw + r];
      a[r] = acc;
    }
    off += nw + L.rows;
    h = std::move(a);
    if (want_jac) Dh = std::move(Da);
    if (l + 1 < nl) activate(h);
  }
  for (int i = 0; i < shape.d_out; ++i) out[i] = h[i];
  if (want_jac)
    for (std::size_t e = 0; e < jac.size(); ++e) jac[e] = Dh[e];
}

struct NetworkArch {
  int d_in = 2;
  int d_out = 1;
  int L = 2;
  int W = 8;
  long S_target = -1;
  double B_cap = 1.0;
  int activation_power = 2;
};

/// He-scaled normal weights and small uniform biases, magnitude-pruned to exactly S_target
/// nonzeros (ties broken by position) and clipped to [-B_cap, B_cap]. The kept entries form
/// the trainable mask. S_target = 0 gives the zero network, a negative value keeps every slot.
NetworkSpec init_network(const NetworkArch& arch, RngStream& rng);

/// Multiplies the last affine layer by `factor` (scales the realized function exactly).
void scale_output_layer(NetworkSpec& net, double factor);

nlohmann::json network_to_json(const NetworkSpec& net);
NetworkSpec network_from_json(const nlohmann::json& j);

}  // namespace cubeflow

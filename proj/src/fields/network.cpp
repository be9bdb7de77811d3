#include "cubeflow/fields/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cubeflow {

std::size_t NetworkSpec::num_params() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += static_cast<std::size_t>(L.rows) * L.cols + L.rows;
  return n;
}

std::vector<double> NetworkSpec::flat_params() const {
  std::vector<double> p;
  p.reserve(num_params());
  for (const auto& L : layers) {
    p.insert(p.end(), L.weights.begin(), L.weights.end());
    p.insert(p.end(), L.bias.begin(), L.bias.end());
  }
  return p;
}

void NetworkSpec::set_flat_params(std::span<const double> theta) {
  if (theta.size() != num_params()) throw Error(ErrorKind::DimensionMismatch, "parameter vector length");
  std::size_t off = 0;
  for (auto& L : layers) {
    for (std::size_t e = 0; e < L.weights.size(); ++e) L.weights[e] = L.weight_mask[e] ? theta[off + e] : 0.0;
    off += L.weights.size();
    for (std::size_t e = 0; e < L.bias.size(); ++e) L.bias[e] = L.bias_mask[e] ? theta[off + e] : 0.0;
    off += L.bias.size();
  }
  audit = audit_network(*this);
}

std::vector<bool> NetworkSpec::flat_mask() const {
  std::vector<bool> m;
  m.reserve(num_params());
  for (const auto& L : layers) {
    for (char c : L.weight_mask) m.push_back(c != 0);
    for (char c : L.bias_mask) m.push_back(c != 0);
  }
  return m;
}

NetworkAudit audit_network(const NetworkSpec& net) {
  NetworkAudit a;
  a.L = static_cast<int>(net.layers.size());
  a.W = net.d_in;
  for (const auto& L : net.layers) {
    a.W = std::max(a.W, L.rows);
    for (double w : L.weights) {
      a.S += w != 0.0;
      a.B = std::max(a.B, std::abs(w));
    }
    for (double b : L.bias) {
      a.S += b != 0.0;
      a.B = std::max(a.B, std::abs(b));
    }
  }
  return a;
}

void push_layer(NetworkSpec& net, int rows, int cols) {
  Layer L;
  L.rows = rows;
  L.cols = cols;
  L.weights.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  L.bias.assign(rows, 0.0);
  L.weight_mask.assign(L.weights.size(), 1);
  L.bias_mask.assign(rows, 1);
  net.layers.push_back(std::move(L));
}

void mask_nonzeros(NetworkSpec& net) {
  for (auto& L : net.layers) {
    for (std::size_t e = 0; e < L.weights.size(); ++e) L.weight_mask[e] = L.weights[e] != 0.0;
    for (std::size_t e = 0; e < L.bias.size(); ++e) L.bias_mask[e] = L.bias[e] != 0.0;
  }
  net.audit = audit_network(net);
}

void check_shapes(const NetworkSpec& net) {
  if (net.layers.empty()) throw Error(ErrorKind::DimensionMismatch, "network has no layers");
  int prev = net.d_in;
  for (const auto& L : net.layers) {
    if (L.cols != prev || L.weights.size() != static_cast<std::size_t>(L.rows) * L.cols ||
        L.bias.size() != static_cast<std::size_t>(L.rows) || L.weight_mask.size() != L.weights.size() ||
        L.bias_mask.size() != L.bias.size())
      throw Error(ErrorKind::DimensionMismatch, "layer shapes do not chain");
    prev = L.rows;
  }
  if (prev != net.d_out) throw Error(ErrorKind::DimensionMismatch, "last layer size != d_out");
  if (net.activation_power < 1) throw Error(ErrorKind::InvalidArgument, "activation power must be >= 1");
}

std::vector<double> eval_network(const NetworkSpec& net, std::span<const double> z) {
  if (static_cast<int>(z.size()) != net.d_in) throw Error(ErrorKind::DimensionMismatch, "network input size");
  const auto theta = net.flat_params();
  std::vector<double> out(net.d_out);
  network_forward<double>(net, theta, z, out, {});
  return out;
}

std::vector<double> eval_network_jacobian(const NetworkSpec& net, std::span<const double> z) {
  if (static_cast<int>(z.size()) != net.d_in) throw Error(ErrorKind::DimensionMismatch, "network input size");
  if (net.activation_power < 2) throw Error(ErrorKind::InvalidArgument, "Jacobian needs activation power >= 2");
  const auto theta = net.flat_params();
  std::vector<double> out(net.d_out), jac(static_cast<std::size_t>(net.d_out) * net.d_in);
  network_forward<double>(net, theta, z, out, jac);
  return jac;
}

NetworkSpec init_network(const NetworkArch& arch, RngStream& rng) {
  if (arch.L < 1 || arch.W < 1 || arch.d_in < 1 || arch.d_out < 1)
    throw Error(ErrorKind::InvalidArgument, "network architecture needs positive sizes");
  NetworkSpec net;
  net.d_in = arch.d_in;
  net.d_out = arch.d_out;
  net.activation_power = arch.activation_power;
  int prev = arch.d_in;
  for (int l = 0; l < arch.L; ++l) {
    const int rows = l + 1 == arch.L ? arch.d_out : arch.W;
    push_layer(net, rows, prev);
    prev = rows;
  }
  const std::size_t slots = net.num_params();
  const long S = arch.S_target < 0 ? static_cast<long>(slots) : arch.S_target;
  if (arch.S_target >= 0 && static_cast<std::size_t>(arch.S_target) > slots)
    throw Error(ErrorKind::InfeasibleSparsity,
                "S_target " + std::to_string(arch.S_target) + " exceeds " + std::to_string(slots) + " slots");

  std::vector<double> theta;
  theta.reserve(slots);
  for (const auto& L : net.layers) {
    const double sd = std::sqrt(2.0 / L.cols);
    for (int e = 0; e < L.rows * L.cols; ++e) theta.push_back(sd * rng.normal());
    for (int e = 0; e < L.rows; ++e) theta.push_back(0.2 * rng.uniform() - 0.1);
  }
  std::vector<std::size_t> order(slots);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(theta[a]) > std::abs(theta[b]); });
  std::vector<char> keep(slots, 0);
  for (long k = 0; k < S; ++k) keep[order[k]] = 1;
  std::size_t off = 0;
  for (auto& L : net.layers) {
    for (std::size_t e = 0; e < L.weights.size(); ++e, ++off) {
      L.weight_mask[e] = keep[off];
      L.weights[e] = keep[off] ? std::clamp(theta[off], -arch.B_cap, arch.B_cap) : 0.0;
    }
    for (std::size_t e = 0; e < L.bias.size(); ++e, ++off) {
      L.bias_mask[e] = keep[off];
      L.bias[e] = keep[off] ? std::clamp(theta[off], -arch.B_cap, arch.B_cap) : 0.0;
    }
  }
  net.audit = audit_network(net);
  return net;
}

void scale_output_layer(NetworkSpec& net, double factor) {
  auto& L = net.layers.back();
  for (double& w : L.weights) w *= factor;
  for (double& b : L.bias) b *= factor;
  net.audit = audit_network(net);
}

nlohmann::json network_to_json(const NetworkSpec& net) {
  nlohmann::json j;
  j["format"] = "cubeflow.network";
  j["version"] = 1;
  j["d_in"] = net.d_in;
  j["d_out"] = net.d_out;
  j["activation_power"] = net.activation_power;
  j["input_activation"] = net.input_activation;
  j["layers"] = nlohmann::json::array();
  for (const auto& L : net.layers) {
    std::vector<int> wm(L.weight_mask.begin(), L.weight_mask.end()), bm(L.bias_mask.begin(), L.bias_mask.end());
    j["layers"].push_back({{"rows", L.rows},
                           {"cols", L.cols},
                           {"weights", L.weights},
                           {"bias", L.bias},
                           {"weight_mask", wm},
                           {"bias_mask", bm}});
  }
  j["audit"] = {{"L", net.audit.L}, {"W", net.audit.W}, {"S", net.audit.S}, {"B", net.audit.B}};
  return j;
}

NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cubeflow.network" || j.at("version") != 1)
      throw Error(ErrorKind::ConfigError, "not a version-1 network document");
    NetworkSpec net;
    net.d_in = j.at("d_in").get<int>();
    net.d_out = j.at("d_out").get<int>();
    net.activation_power = j.at("activation_power").get<int>();
    net.input_activation = j.value("input_activation", false);
    for (const auto& l : j.at("layers")) {
      Layer L;
      L.rows = l.at("rows").get<int>();
      L.cols = l.at("cols").get<int>();
      L.weights = l.at("weights").get<std::vector<double>>();
      L.bias = l.at("bias").get<std::vector<double>>();
      for (int v : l.at("weight_mask").get<std::vector<int>>()) L.weight_mask.push_back(static_cast<char>(v != 0));
      for (int v : l.at("bias_mask").get<std::vector<int>>()) L.bias_mask.push_back(static_cast<char>(v != 0));
      net.layers.push_back(std::move(L));
    }
    check_shapes(net);
    net.audit = audit_network(net);
    const auto& a = j.at("audit");
    const NetworkAudit stored{a.at("L").get<int>(), a.at("W").get<int>(), a.at("S").get<long>(), a.at("B").get<double>()};
    if (!(stored == net.audit)) throw Error(ErrorKind::ConfigError, "network audit block does not match recount");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad network document: ") + e.what());
  }
}

}  // namespace cubeflow

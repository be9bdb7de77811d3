#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cubeflow/fields/network.hpp"
#include "cubeflow/splinenn/quasi_interp.hpp"

namespace cubeflow {

/// Shifts c_j and coefficients a_j with sum_j a_j (y + c_j)^p = y^q for all y. Each power is
/// realized by two units: (y+c)^p = eta_p(y+c) + (-1)^p eta_p(-y-c).
struct PowerCombination {
  int p = 0;
  int q = 0;
  std::vector<double> shifts;
  std::vector<double> coeffs;
};

PowerCombination power_combination(int p, int q);

/// Network x -> x^2 with ReLU^p units (input d_in = 1).
NetworkSpec square_network(int p);
/// Network (x, y) -> x y by polarization with ReLU^p units.
NetworkSpec product_network(int p);

struct CompiledNetwork {
  NetworkSpec net;  // activation power m-1, d_in = d, d_out = 1
  int m = 0;
  int n = 0;
  int d = 0;
  long bank_units = 0;
  long product_units = 0;
  long passthrough_units = 0;
  /// N(n) = C_N (1 + (m+n)^d + m (n+m) d).
  double N = 0.0;
  double C_N = 0.0;
  double C_L = 0.0;
  /// B bound C_B (1 + ||f||_sup) + N^{1/d}.
  double C_B = 0.0;
};

/// Realizes Q_n^m[f] exactly as a ReLU^{m-1} network: a spline bank (m+1 units per basis
/// function and axis), balanced binary product trees by polarization with identity
/// passthrough for odd groups, and a final linear combiner.
CompiledNetwork compile_to_network(const QuasiInterpolant& qi);

struct AuditRow {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct AuditReport {
  std::vector<AuditRow> rows;
  bool pass = false;
};

AuditReport audit_against_bounds(const CompiledNetwork& cn, double f_sup, double N);

nlohmann::json audit_to_json(const AuditReport& r);

}  // namespace cubeflow

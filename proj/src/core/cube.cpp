#include "cubeflow/core/cube.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

CubePoint::CubePoint(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.empty()) throw Error(ErrorKind::DimensionMismatch, "CubePoint needs d >= 1");
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const double c = coords_[i];
    if (!(c >= 0.0 && c <= 1.0)) {
      throw Error(ErrorKind::OutOfDomain,
                  "coordinate " + std::to_string(i) + " = " + std::to_string(c) + " outside [0,1]");
    }
  }
}

CubePoint CubePoint::clamped(std::vector<double> coords) {
  for (double& c : coords) c = std::clamp(c, 0.0, 1.0);
  return CubePoint(std::move(coords));
}

bool in_cube(std::span<const double> x, double tol) noexcept {
  return std::all_of(x.begin(), x.end(), [tol](double c) { return c >= -tol && c <= 1.0 + tol; });
}

double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "sup_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cubeflow

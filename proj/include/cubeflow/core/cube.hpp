#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cubeflow {

/// A point of the unit cube [0,1]^d. Construction rejects coordinates outside [0,1].
class CubePoint {
 public:
  CubePoint() = default;
  explicit CubePoint(std::vector<double> coords);

  /// Projects each coordinate onto [0,1] instead of rejecting it.
  static CubePoint clamped(std::vector<double> coords);

  std::size_t dim() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const noexcept { return coords_; }
  const std::vector<double>& vec() const noexcept { return coords_; }

  friend bool operator==(const CubePoint&, const CubePoint&) = default;

 private:
  std::vector<double> coords_;
};

bool in_cube(std::span<const double> x, double tol = 0.0) noexcept;

double sup_distance(std::span<const double> a, std::span<const double> b);

}  // namespace cubeflow

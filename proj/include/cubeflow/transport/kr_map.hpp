#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cubeflow/core/cube.hpp"
#include "cubeflow/core/density.hpp"
#include "cubeflow/core/velocity_field.hpp"

namespace cubeflow {

/// Conditional CDF of coordinate `coord` given the preceding ones, tabulated on a uniform
/// grid with res+1 nodes per axis over (x_0, ..., x_coord). Row-major, last axis fastest.
struct ConditionalCdfTable {
  int coord = 0;
  int res = 0;
  std::vector<double> cdf;
  std::vector<double> density;  // derivative of cdf in x_coord at the nodes
};

/// One-dimensional marginal CDF of the reference on the same kind of grid.
struct ReferenceCdf {
  bool identity = false;
  int res = 0;
  std::vector<double> cdf;
  std::vector<double> density;
};

/// Knothe-Rosenblatt map T_i = F_ref,i^{-1}(F_src,i(x_0..x_i)).
/// Cubic Hermite interpolation along x_i, 4-point Lagrange along the conditioning axes.
class TriangularMap {
 public:
  TriangularMap(std::vector<ConditionalCdfTable> source, std::vector<ReferenceCdf> reference);

  int dim() const { return static_cast<int>(source_.size()); }
  int grid_res() const { return source_.front().res; }

  /// T_i, reading only x[0..i].
  double component(int i, std::span<const double> x) const;
  /// {T_i, d T_i / d x_i}.
  std::pair<double, double> component_with_derivative(int i, std::span<const double> x) const;
  double diag_derivative(int i, std::span<const double> x) const;
  /// Solves T_i(prefix, s) = y for s, prefix = x[0..i-1].
  double cond_inverse(int i, std::span<const double> prefix, double y) const;

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> inverse(std::span<const double> y) const;
  double log_det(std::span<const double> x) const;

  /// Source conditional CDF and its x_i-derivative.
  std::pair<double, double> source_cdf(int i, std::span<const double> x) const;

  const std::vector<ConditionalCdfTable>& source_tables() const { return source_; }
  const std::vector<ReferenceCdf>& reference_tables() const { return reference_; }

  nlohmann::json to_json() const;
  static TriangularMap from_json(const nlohmann::json& j);

 private:
  std::pair<double, double> reference_inverse(int i, double u) const;

  std::vector<ConditionalCdfTable> source_;
  std::vector<ReferenceCdf> reference_;
};

/// Default table resolution: 256, 128, 64 nodes per axis for d = 1, 2, 3.
int default_grid_res(int dim);

/// Builds the map pushing p0 forward to rho. Supports d <= 3.
TriangularMap build_kr_map(const AnalyticDensity& p0, const AnalyticDensity& rho, int grid_res);

/// sup over the tensor nodes of `grid` of |p0(x) - rho(T(x)) prod_i d_i T_i(x)|.
double kr_pushforward_residual(const TriangularMap& T, const AnalyticDensity& p0, const AnalyticDensity& rho,
                               const QuadratureGrid& grid);

/// x = F(y,t), the inverse of G_t(x) = t T(x) + (1-t) x, solved coordinate by coordinate.
CubePoint invert_straight_line(const TriangularMap& T, const CubePoint& y, double t);
void invert_straight_line(const TriangularMap& T, std::span<const double> y, double t, std::span<double> x);

/// f(y,s) = T(F(y,s)) - F(y,s), with a finite-difference Jacobian (step 1e-5).
class StraightLineField final : public VelocityField {
 public:
  explicit StraightLineField(std::shared_ptr<const TriangularMap> map) : map_(std::move(map)) {}
  int dim() const override { return map_->dim(); }
  void eval(std::span<const double> y, double s, std::span<double> out) const override;
  std::string describe() const override { return "straight_line"; }
  const TriangularMap& map() const { return *map_; }

 protected:
  double fd_step() const override { return 1e-5; }

 private:
  std::shared_ptr<const TriangularMap> map_;
};

std::shared_ptr<StraightLineField> straight_line_field(std::shared_ptr<const TriangularMap> map);

struct BoundaryReport {
  double ratio_sup = 0.0;    // sup of |f_j| / (x_j (1 - x_j)) over the band probes
  double inner_ratio = 0.0;  // sup over the innermost quarter of probe distances
  double outer_ratio = 0.0;  // sup over the outermost quarter
  std::vector<double> worst_point;
  double worst_t = 0.0;
  bool admissible = true;
};

/// Probes each face at log-spaced distances from eps_band down to 1e-8. The field is flagged
/// when the ratio near the face exceeds ten times the ratio at the outer edge of the band.
BoundaryReport boundary_vanishing_check(const VelocityField& f, double eps_band, int n_probe);

}  // namespace cubeflow

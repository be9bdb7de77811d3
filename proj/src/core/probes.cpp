#include "cubeflow/core/probes.hpp"

#include <array>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

namespace {

constexpr std::array<int, 12> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(int base, long long index) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

}  // namespace

std::vector<std::vector<double>> halton_points(int count, int dim, int skip) {
  if (dim < 1 || dim > static_cast<int>(kPrimes.size())) {
    throw Error(ErrorKind::InvalidArgument, "halton_points supports 1 <= dim <= 12");
  }
  std::vector<std::vector<double>> pts(count, std::vector<double>(dim));
  for (int i = 0; i < count; ++i)
    for (int a = 0; a < dim; ++a) pts[i][a] = radical_inverse(kPrimes[a], i + skip);
  return pts;
}

std::vector<std::vector<double>> boundary_grid(int dim, int per_axis) {
  if (per_axis < 2) throw Error(ErrorKind::InvalidArgument, "boundary_grid needs >= 2 points per axis");
  std::vector<std::vector<double>> pts;
  std::vector<int> idx(dim, 0);
  while (true) {
    std::vector<double> x(dim);
    for (int a = 0; a < dim; ++a) x[a] = static_cast<double>(idx[a]) / (per_axis - 1);
    pts.push_back(std::move(x));
    int a = dim - 1;
    while (a >= 0 && ++idx[a] == per_axis) idx[a--] = 0;
    if (a < 0) break;
  }
  return pts;
}

std::vector<std::vector<double>> sup_probe_set(int dim, int halton_count, int grid_per_axis) {
  auto pts = halton_points(halton_count, dim);
  auto grid = boundary_grid(dim, grid_per_axis);
  pts.insert(pts.end(), grid.begin(), grid.end());
  return pts;
}

}  // namespace cubeflow

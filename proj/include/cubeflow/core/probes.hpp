#pragma once

#include <vector>

namespace cubeflow {

/// Halton points in [0,1]^dim (radical inverse in the first `dim` primes), skipping the origin.
std::vector<std::vector<double>> halton_points(int count, int dim, int skip = 1);

/// Uniform tensor grid with `per_axis` points per axis including both endpoints.
std::vector<std::vector<double>> boundary_grid(int dim, int per_axis);

/// Deterministic probe set used for empirical suprema: Halton points plus a boundary grid.
std::vector<std::vector<double>> sup_probe_set(int dim, int halton_count, int grid_per_axis);

}  // namespace cubeflow

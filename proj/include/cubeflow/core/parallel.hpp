#pragma once

#include <cstddef>
#include <functional>

namespace cubeflow {

/// Worker count for parallel_for. Defaults to CUBEFLOW_THREADS or 1.
int thread_count() noexcept;
void set_thread_count(int n) noexcept;

/// Runs body(i) for i in [0,n); nested calls run serially. Every index is processed exactly once; callers write
/// results into per-index slots so output never depends on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cubeflow

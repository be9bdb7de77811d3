#include "cubeflow/core/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cubeflow {

namespace {

int initial_threads() {
  if (const char* env = std::getenv("CUBEFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::atomic<int>& threads_setting() {
  static std::atomic<int> n{initial_threads()};
  return n;
}

thread_local bool in_region = false;

}  // namespace

int thread_count() noexcept { return threads_setting().load(); }

void set_thread_count(int n) noexcept { threads_setting().store(n > 0 ? n : 1); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1 || in_region) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failure_index = n;
  std::mutex failure_mutex;
  auto run = [&] {
    in_region = true;
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        // Keep the lowest failing index so the reported error is schedule independent.
        std::lock_guard lock(failure_mutex);
        if (i < failure_index) {
          failure_index = i;
          failure = std::current_exception();
        }
      }
    }
    in_region = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cubeflow

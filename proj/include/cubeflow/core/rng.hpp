#pragma once

#include <cstdint>
#include <vector>

#include "cubeflow/core/cube.hpp"

namespace cubeflow {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based random stream: output k is a pure function of (seed, stream_id, k),
/// so samples do not depend on which thread draws them.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Output at an absolute position, without advancing.
  std::uint64_t at(std::uint64_t position) const noexcept;

  std::uint64_t next_u64() noexcept { return at(counter_++); }
  /// Uniform on [0,1) with 53 random bits.
  double uniform() noexcept;
  double normal() noexcept;

  /// Independent child stream keyed by (seed, stream_id, child).
  RngStream substream(std::uint64_t child) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::vector<CubePoint> sample_uniform(RngStream& rng, int n, int dim);

}  // namespace cubeflow

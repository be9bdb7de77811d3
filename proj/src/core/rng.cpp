#include "cubeflow/core/rng.hpp"

#include <cmath>
#include <numbers>

#include "cubeflow/core/error.hpp"

namespace cubeflow {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed), stream_id_(stream_id), key_(splitmix64(seed ^ splitmix64(stream_id * kGolden + 1))) {}

std::uint64_t RngStream::at(std::uint64_t position) const noexcept {
  return splitmix64(key_ + position * kGolden);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
  // Box-Muller on two consecutive draws; 1-u keeps the log argument in (0,1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::substream(std::uint64_t child) const noexcept {
  return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(child + 0x632BE59BD9B4E019ull)));
}

std::vector<CubePoint> sample_uniform(RngStream& rng, int n, int dim) {
  if (n < 1 || dim < 1) throw Error(ErrorKind::InvalidArgument, "sample_uniform needs n >= 1, dim >= 1");
  std::vector<CubePoint> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < n; ++i) {
    for (double& c : x) c = rng.uniform();
    out.emplace_back(x);
  }
  return out;
}

}  // namespace cubeflow

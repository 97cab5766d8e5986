#pragma once

#include <cmath>
#include <cstdint>

namespace anm {

// Counter-based stream splitter built on splitmix64. Every consumer of
// randomness receives its own stream derived from (seed, stream_id), so
// modules never share generator state and replays are bit-identical on
// any platform (no std::*_distribution involved).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(mix(seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1)));
  }

  Rng split(std::uint64_t stream_id) const {
    return Rng::stream(state_, stream_id);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform draw in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (both outputs consumed, no cache, so a
  // stream's draw sequence is independent of call interleaving).
  double gauss() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace anm

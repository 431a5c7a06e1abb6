#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace scorelab {

/// Stream domains keep the per-purpose random streams disjoint even when they
/// share a root seed and an index.
enum class StreamDomain : std::uint64_t {
  target_samples = 1,
  trajectories = 2,
  minibatch = 3,
  init = 4,
  sampler = 5,
  monte_carlo = 6,
  experiment = 7,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` in `domain` under root `seed`.
///
/// Contract (stable, do not change without bumping the dataset format):
///   stream_seed = mix64(mix64(mix64(seed) ^ domain) + index)
/// The resulting 64-bit value seeds a std::mt19937_64; normals come from
/// std::normal_distribution<double> drawn in the documented order of each
/// consumer.
constexpr std::uint64_t stream_seed(std::uint64_t seed, StreamDomain domain,
                                    std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(domain)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, StreamDomain domain, std::uint64_t index)
      : engine_(stream_seed(seed, domain, index)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal_(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace scorelab

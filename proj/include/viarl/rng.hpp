#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace viarl {

std::uint64_t splitmix64(std::uint64_t x);

// Independent seed for sub-stream (stream, index) of a base seed. Every
// stochastic operation in the library draws from a seed derived this way, so
// results do not depend on evaluation order or worker count.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  // Uniform integer on [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace viarl

#pragma once

#include <cstdint>
#include <random>

#include "mmgee/math.hpp"

namespace mmgee {

struct SplitMix64 {
  std::uint64_t state;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

/// Deterministic counter-derived RNG substream: stream `id` under a master
/// seed always produces the same draw sequence, independent of how many
/// other streams run or in which order. Normal draws go through the inverse
/// CDF so the sequence does not depend on the standard library's
/// distribution internals.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : gen_(derive_seed(master_seed, stream_id)) {}

  /// Uniform draw strictly inside (0, 1).
  double uniform() {
    const std::uint64_t bits = gen_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal() { return norm_quantile(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    SplitMix64 sm{master + 0x9E3779B97F4A7C15ULL * (stream + 1)};
    sm.next();
    return sm.next();
  }

  std::mt19937_64 gen_;
};

}  // namespace mmgee

#pragma once

// Deterministic random number generation. std:: distributions are
// implementation-defined, so every draw here is spelled out bit-for-bit:
// identical seeds give identical streams on any platform.

#include <cstdint>
#include <string_view>

#include "mrasp/common.hpp"

namespace mrasp {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// xoshiro256** seeded through splitmix64.
class Rng {
public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, bound). Rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t bound) {
    if (bound == 0) return 0;
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform in [lo, hi].
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Named sub-seed, e.g. derive_seed(seed, "dropout"). Keeps independent
// streams for init / sampling / ras / dropout without shared state.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  uint64_t st = seed ^ fnv1a64(tag);
  return splitmix64(st);
}

// Per-index sub-seed, e.g. one RAS stream per corpus pair.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
  uint64_t st = seed ^ (0x9E3779B97F4A7C15ull + index * 0xC2B2AE3D27D4EB4Full);
  return splitmix64(st);
}

}  // namespace mrasp

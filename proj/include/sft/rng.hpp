#pragma once

#include <cstdint>

namespace sft {

// SplitMix64. Fixed generator for fault sampling and program generation so
// seeded results are identical on every platform; std::uniform_int_distribution
// is implementation-defined and deliberately avoided.
struct SplitMix64 {
  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, n); n = 0 yields 0
  uint64_t below(uint64_t n) { return n ? next() % n : 0; }

  // uniform in [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool chance(uint32_t percent) { return below(100) < percent; }

  uint64_t state;
};

}  // namespace sft

#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace riskid {

// Deterministic RNG used everywhere randomness is needed.  std::mt19937_64 is
// bit-exact across platforms; the value->double mappings are hand-rolled
// because the std distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(static_cast<double>(n) * uniform());
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Draws an index according to non-negative weights.
  template <typename Container>
  int weighted_index(const Container& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    int i = 0;
    for (double w : weights) {
      r -= w;
      if (r < 0.0) return i;
      ++i;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Derives an independent stream, used for deterministic retries.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer over seed ^ rotated salt
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace riskid

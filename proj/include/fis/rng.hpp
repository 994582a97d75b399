#pragma once

#include <cstdint>
#include <initializer_list>

namespace fis {

// Deterministic 64-bit generator with portable uniform helpers. All sampling
// in the project goes through this so that a (seed, call-order) pair pins the
// byte-exact output on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that small seeds diverge immediately.
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derives a child seed from an ordered list of stream identifiers, so that
  // e.g. (run seed, epoch, iteration, sample) name an independent stream.
  static std::uint64_t derive(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x243f6a8885a308d3ull;
    for (std::uint64_t p : parts) {
      h ^= p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      Rng mix(h);
      h = mix.next_u64();
    }
    return h;
  }

 private:
  std::uint64_t state_;
};

}  // namespace fis

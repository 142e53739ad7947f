#pragma once

#include <cstdint>
#include <random>

namespace deepmot {

// Seedable random stream used everywhere the artifact needs randomness.
// The engine is std::mt19937_64. Derived draws are fixed transforms of the
// raw 64-bit output so another implementation adopting the same engine can
// reproduce the streams bit-for-bit:
//   uniform()      = (next() >> 11) * 2^-53              in [0, 1)
//   uniform(a, b)  = a + (b - a) * uniform()
//   index(n)       = floor(uniform() * n), clamped to n-1
//   integer(a, b)  = a + index(b - a + 1)                inclusive
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  long long integer(long long lo, long long hi) {
    return lo + static_cast<long long>(index(static_cast<std::size_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace deepmot

#pragma once

#include <cmath>
#include <cstdint>

namespace faceswap {

// Counter-based PRNG (splitmix64 finalizer over seed+counter). The full state
// is two u64 words, which is what makes checkpointed RNG state trivial to
// serialize and resume exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0,1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two draws per call, never caches the sine pair.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // [0,n)
  uint64_t uniform_int(uint64_t n) { return n ? next_u64() % n : 0; }

  // Independent stream derived from this seed; does not disturb the counter.
  Rng fork(uint64_t stream) const {
    uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull + stream * 0x8CB92BA72F3D8DD7ull);
    z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDull;
    return Rng(z ^ (z >> 32));
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace faceswap

#pragma once

// Self-contained xoshiro256++ generator with explicit distribution
// transforms. Standard-library distributions are implementation-defined, so
// everything here is spelled out to keep seeded output stable across
// platforms and compilers.

#include <cstdint>
#include <cmath>

#include "gztreg/matcalc.hpp"

namespace gztreg {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // splitmix64 expansion of the seed into the xoshiro state
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // uniform on (0, 1]
  double uniform_positive() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  // Box-Muller pair, one value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_positive();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  int binomial(int n, double p) {
    int count = 0;
    for (int i = 0; i < n; ++i) count += uniform() < p ? 1 : 0;
    return count;
  }

  double chi_squared(int df) {
    double s = 0.0;
    for (int i = 0; i < df; ++i) {
      const double z = normal();
      s += z * z;
    }
    return s;
  }

  Vector normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gztreg

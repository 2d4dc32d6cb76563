#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

// Seeded randomness helpers. std::mt19937_64 is fully specified by the
// standard, but the <random> distributions are not; sampling is done by hand
// so identical seeds give identical streams on any toolchain.

namespace ltlab {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic sub-seed from a master seed and a textual key, so sweep
// cells and pipeline stages get independent, order-insensitive streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char ch : key) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ h);
}

}  // namespace ltlab

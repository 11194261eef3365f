#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qcalib {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Pure function of (master_seed, stream); replication r always maps to the
/// same stream seed regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream) {
  return mix64(mix64(master_seed + 0x632be59bd9b4e019ULL) ^ mix64(stream));
}

/// Deterministic scalar distributions on top of mt19937_64. The standard
/// <random> distribution classes are implementation-defined, so the mappings
/// are spelled out here: uniform by 53-bit mantissa, normal by Box-Muller,
/// exponential by inverse CDF, chi-squared as a sum of squared normals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal; consumes exactly two uniforms per draw.
  double normal() {
    const double two_pi = 6.283185307179586476925287;
    double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Exp(1) by inverse CDF.
  double exponential() { return -std::log1p(-uniform01()); }

  double chi_squared(int df) {
    double s = 0.0;
    for (int i = 0; i < df; ++i) {
      double z = normal();
      s += z * z;
    }
    return s;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace qcalib

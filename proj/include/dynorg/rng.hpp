#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dynorg {

using Seed = std::uint64_t;

// Counter-based generator with a tiny state; identical output on every
// platform and standard library, which keeps every sampled check and every
// CLI run reproducible from a single root seed.
struct SplitMix64 {
  std::uint64_t state = 0;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

/// Derives an independent stream seed from a root seed and an integer salt.
inline Seed mix_seed(Seed root, Seed salt) {
  SplitMix64 g{root ^ (0x9e3779b97f4a7c15ULL + salt * 0xbf58476d1ce4e5b9ULL)};
  g.next();
  return g.next();
}

/// Derives an independent stream seed from a root seed and a component label.
inline Seed mix_seed(Seed root, std::string_view label) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix_seed(root, h);
}

}  // namespace dynorg

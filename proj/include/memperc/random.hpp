#pragma once

// Seeding and portable uniform draws. The standard distributions are
// implementation-defined, so draws are built directly on the engine output
// to keep experiment outputs identical across standard libraries.

#include <cstdint>
#include <cmath>
#include <random>

namespace memperc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-trial seed: base ^ hash(instance, replica). Adding instances or
/// replicas never changes the seeds of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t instance,
                                    std::uint64_t replica) noexcept {
  return base ^ mix64(mix64(instance) ^ (replica * 0xd1b54a32d192ed03ULL));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in (lo, hi); the open lower end avoids exact zeros when
/// lo = -hi.
inline double uniform_open(Rng& rng, double lo, double hi) {
  double u;
  do { u = uniform01(rng); } while (u == 0.0);
  return lo + (hi - lo) * u;
}

/// Uniform integer in [0, n) by rejection (no modulo bias).
inline std::uint32_t uniform_index(Rng& rng, std::uint32_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do { x = rng(); } while (x >= limit);
  return static_cast<std::uint32_t>(x % n);
}

/// Standard normal variate (Box-Muller, one of the pair).
inline double normal01(Rng& rng) {
  double u1;
  do { u1 = uniform01(rng); } while (u1 == 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace memperc

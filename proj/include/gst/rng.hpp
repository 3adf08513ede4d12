#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace gst {

// splitmix64 finaliser; bijective mixing of one 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream addressed by (seed, counters...). Draws for
/// one address never depend on how many other addresses were consumed.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t h = mix64(seed);
  for (auto c : counters) h = mix64(h ^ mix64(c + 0x632BE59BD9B4E019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> counters) {
  return Rng(stream_seed(seed, counters));
}

// Uniform in the open interval (0, 1).
inline double open_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

inline double gumbel(Rng& rng) { return -std::log(-std::log(open_uniform(rng))); }

}  // namespace gst

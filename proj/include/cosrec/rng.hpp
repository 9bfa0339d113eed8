#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cosrec {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (base, stream ids). Used so that
// epoch shuffles, masking and per-sequence dropout each get their own stream
// and stay reproducible regardless of thread count.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

// N(0, stddev) truncated to +/- 2 stddev by resampling.
inline double truncated_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    double x = dist(rng);
    if (std::abs(x) <= 2.0 * stddev) return x;
  }
}

}  // namespace cosrec

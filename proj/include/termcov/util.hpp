#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "termcov/errors.hpp"

namespace termcov {

inline constexpr double kProbit75 = 0.6744897501960817;  // Phi^{-1}(0.75)

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent per-task stream: same (master, index) always yields the same
// generator state, regardless of thread count.
inline std::mt19937_64 rng_stream(uint64_t master_seed, uint64_t index) {
  return std::mt19937_64(splitmix64(master_seed ^ (index + 1) * 0x9e3779b97f4a7c15ULL));
}

// Linear-interpolation quantile (R type 7) on an unsorted copy.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DataError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = h - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

// Nearest-rank (type 1) quantile: smallest x with F(x) >= p.
inline double quantile_nearest_rank(std::vector<double> v, double p) {
  if (v.empty()) throw DataError("quantile_nearest_rank: empty sample");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  auto rank = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<size_t>(rank, 1, n);
  return v[rank - 1];
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace termcov

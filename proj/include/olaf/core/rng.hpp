// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "olaf/core/error.hpp"

namespace olaf {

/// SplitMix64: the portable 64-bit generator used everywhere in the toolkit.
/// The algorithm is fully specified here, so streams reproduce bit-exactly
/// across platforms and standard-library versions. Distributions below are
/// hand-rolled for the same reason.
class SplitMix64 {
public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift; bias is rejected.
  uint64_t uniform_int(uint64_t n) {
    OLAF_CHECK(n > 0, Error, "uniform_int: n must be positive");
    uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (-n) % n;
      while (lo < t) {
        x = next();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  /// Uniform integer in [lo, hi], both ends inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    OLAF_CHECK(lo <= hi, Error, "uniform_int: empty range [%lld, %lld]",
               static_cast<long long>(lo), static_cast<long long>(hi));
    return lo + static_cast<int64_t>(
                    uniform_int(static_cast<uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller (no cached spare, so streams stay simple).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Derive a child seed from a parent seed and a stream index.
  static uint64_t mix(uint64_t a, uint64_t b) {
    SplitMix64 g(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
    return g.next();
  }

private:
  uint64_t state_;
};

/// Fisher-Yates shuffle.
template <typename T> void shuffle(std::vector<T> &v, SplitMix64 &rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// k distinct indices drawn uniformly from [0, n), in selection order.
/// Partial Fisher-Yates over an explicit index pool.
inline std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k,
                                                       SplitMix64 &rng) {
  OLAF_CHECK(k >= 0 && k <= n, Error,
             "sample_without_replacement: k=%lld out of range for n=%lld",
             static_cast<long long>(k), static_cast<long long>(n));
  std::vector<int64_t> pool(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  std::vector<int64_t> out(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    int64_t j = i + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    out[static_cast<size_t>(i)] = pool[static_cast<size_t>(i)];
  }
  return out;
}

/// 64-bit FNV-1a, used for config checksums and provenance records.
inline uint64_t fnv1a64(const void *data, size_t len) {
  const auto *p = static_cast<const unsigned char *>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string &s) { return fnv1a64(s.data(), s.size()); }

} // namespace olaf

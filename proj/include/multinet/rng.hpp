// Counter-based splittable random generator.
//
// Every stochastic operation in the library draws from one of these. A
// generator is a (key, counter) pair; drawing hashes the pair and bumps the
// counter, and split() derives an independent stream without touching the
// parent. Runs are bit-reproducible given a seed, regardless of how work is
// interleaved across samples or tasks.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace multinet {

namespace detail {

// splitmix64 finalizer
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return mix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2) + mix64(b)));
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(detail::mix64(seed)) {}

  // Derives an independent stream; the parent state is unchanged.
  Rng split(uint64_t stream) const { return Rng(detail::hash_combine(key_, stream), 0); }
  Rng split(std::string_view label) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return split(h);
  }

  uint64_t next_u64() { return detail::hash_combine(key_, counter_++); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; two draws per call.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  Rng(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace multinet

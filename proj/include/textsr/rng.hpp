#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "textsr/tensor.hpp"

namespace textsr {

using Rng = std::mt19937_64;

// Stream tags for deriving independent per-sample substreams.
enum : uint64_t {
  kStreamRender = 0x52454e44ULL,   // style + text draws
  kStreamDegrade = 0x44454752ULL,  // degradation draws
  kStreamSample = 0x53414d50ULL,   // reverse-process draws
  kStreamTrain = 0x5452414eULL,    // per-step training draws
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-sample dataset seed convention: master ^ (index * golden ratio).
inline uint64_t sample_seed(uint64_t master, uint64_t index) {
  return master ^ (index * 0x9E3779B97F4A7C15ULL);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

// Uniform in [0,1) with 53 random bits; stable across platforms.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

// Box-Muller without caching; consumes two draws per variate.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

inline Tensor randn(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = normal01(rng);
  return t;
}

}  // namespace textsr

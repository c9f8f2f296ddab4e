#pragma once

#include <cstdint>
#include <random>

namespace rkdsc {

using RngStream = std::mt19937_64;

// splitmix64 scrambler; decorrelates streams derived from the same seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
  return RngStream(splitmix64(splitmix64(seed) ^ stream_id));
}

inline double uniform_real(RngStream& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline double gaussian(RngStream& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

}  // namespace rkdsc

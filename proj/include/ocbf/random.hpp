#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ocbf {

// Stream-derivation and distribution helpers on top of std::mt19937_64.
// The engine is fully specified by the standard; the distributions below are
// hand-rolled so that a (seed, config) pair reproduces bit-identical draws
// on any platform, which the simulator promises for paired-run comparisons.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substream: one master seed, one stream tag.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ tag));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Exponential with the given rate (mean 1/rate).
inline double exponential(std::mt19937_64& rng, double rate) {
  return -std::log(1.0 - uniform01(rng)) / rate;
}

}  // namespace ocbf

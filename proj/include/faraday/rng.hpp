#pragma once

#include <cstdint>
#include <random>

namespace faraday {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-purpose generators
// from one run seed so that switching one noise source off leaves the
// others' draws untouched.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng substream(std::uint64_t seed, std::uint64_t purpose) { return Rng(mix_seed(mix_seed(seed) ^ mix_seed(purpose + 1))); }

}  // namespace faraday

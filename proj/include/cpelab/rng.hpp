#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cpelab::rng {

/// FNV-1a 64-bit hash; turns role tags into stream offsets.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// SplitMix64 mixing step.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic stream derivation. Every random stream in the project is
/// addressed as (master, role, index); see the README for the role map.
constexpr std::uint64_t split_seed(std::uint64_t master, std::string_view role,
                                   std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ fnv1a64(role)) + index);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

}  // namespace cpelab::rng

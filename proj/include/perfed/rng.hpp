#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace perfed {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, stable across platforms and runs.
inline std::uint64_t stable_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for (parent, purpose, index). Streams for different indices are
/// independent of how many siblings exist, so adding a client never perturbs
/// another client's stream.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
  return splitmix64(parent ^ splitmix64(stable_hash(tag) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

inline Rng make_rng(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(parent, tag, index));
}

}  // namespace perfed

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qbc {

using Rng = std::mt19937_64;

// splitmix64 finalizer; whitens seeds before feeding them to mt19937_64.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Independent substream for (master seed, domain tag, repeat index). Every
// source of randomness in a session draws from its own named stream, so the
// in-process engine and the networked broker consume identical sequences.
inline Rng make_stream(std::uint64_t seed, std::string_view tag,
                       std::uint64_t repeat = 0) {
  return Rng(mix64(mix64(seed ^ fnv1a(tag)) + repeat));
}

// Uniform double in [0,1) from the top 53 bits.
inline double uniform01(Rng& rng) { return (rng() >> 11) * 0x1.0p-53; }

inline int uniform_bit(Rng& rng) { return static_cast<int>(rng() >> 63); }

}  // namespace qbc

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cbtshot {

// One splitmix64 step. Used to fan a single global seed out into
// independent per-component streams: every consumer derives its own seed
// from (base, tag) instead of sharing a generator, so components stay
// reproducible regardless of evaluation order or parallelism.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(splitmix64(base) ^ splitmix64(~tag));
}

// FNV-1a, for readable stream tags ("templates", "fold3", ...).
inline std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return derive_seed(base, tag_hash(tag));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace cbtshot

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssrl {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used to turn stream names into stable integer tags.
inline constexpr std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for item `index` of the named stream under `master`. A pure function of
/// its arguments, so consumers never depend on each other's draw counts.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                           std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ stream_tag(stream)) + splitmix64(index));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace ssrl

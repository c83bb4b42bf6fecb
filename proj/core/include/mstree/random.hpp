#pragma once

#include <cstdint>
#include <random>

namespace mstree {

// SplitMix64 finalizer. Used only to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of a run seeded with `seed`. Streams depend
/// only on (seed, stream_tag, index), never on scheduling.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream_tag,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(seed ^ mix64(stream_tag)) + index);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::uint64_t stream_tag, std::uint64_t index) {
  return Rng(stream_seed(seed, stream_tag, index));
}

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mstree

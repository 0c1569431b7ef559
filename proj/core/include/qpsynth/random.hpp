#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qpsynth {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a tuple of
/// counters (stage, sample, component, segment, ...). The result depends only
/// on the values, never on call order, so parallel schedules agree.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(master);
  for (std::uint64_t v : path) h = mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

/// Stage tags used with derive_seed.
namespace stage {
inline constexpr std::uint64_t kFit = 1;
inline constexpr std::uint64_t kScore = 2;
inline constexpr std::uint64_t kGenerateEvents = 3;
inline constexpr std::uint64_t kGenerateStates = 4;
inline constexpr std::uint64_t kGeneratePaths = 5;
inline constexpr std::uint64_t kSurrogate = 6;
inline constexpr std::uint64_t kFixture = 7;
inline constexpr std::uint64_t kDivergence = 8;
}  // namespace stage

}  // namespace qpsynth

#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace bactipot {

/// Random stream used by every stochastic operation. Always passed explicitly.
using rng_stream = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Seeds a full mt19937_64 state from a 64-bit master seed.
inline rng_stream make_stream(std::uint64_t seed) {
  std::uint64_t state = seed;
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    const std::uint64_t v = detail::splitmix64(state);
    words[i] = static_cast<std::uint32_t>(v);
    words[i + 1] = static_cast<std::uint32_t>(v >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return rng_stream(seq);
}

/// Independent stream for replication `index` of a run seeded with `seed`.
/// The index is mixed into the master seed through two splitmix64 rounds,
/// so streams for neighbouring indices share no state.
inline rng_stream derive_stream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t state = seed;
  const std::uint64_t base = detail::splitmix64(state);
  std::uint64_t mixed = base ^ (index * 0xd1b54a32d192ed03ULL);
  return make_stream(detail::splitmix64(mixed));
}

}  // namespace bactipot

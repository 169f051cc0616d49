#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsforge {

using Rng = std::mt19937_64;

/// SplitMix64 step. Advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent child seed from a root seed, a named stream and an
/// index. Children of the same root never share state with each other.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace tsforge

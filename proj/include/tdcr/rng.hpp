#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tdcr {

using Rng = std::mt19937_64;

/// Mixes a 64-bit value (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from a top-level seed, a purpose label
/// ("dataset", "init", "dropout", ...) and an index. Streams for different
/// (label, index) pairs are decorrelated, so samples can be produced in any
/// order or in parallel without changing output.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view label,
                    std::uint64_t index = 0) {
  return Rng{derive_seed(seed, label, index)};
}

} // namespace tdcr

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace structcox {

/// Independent stream for (seed, purpose label, index). Streams for distinct
/// labels or indices do not overlap in practice, and adding new indices never
/// changes existing streams.
std::mt19937_64 derive_stream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

/// Uniform integer in [lo, hi] with a portable mapping (no reliance on the
/// standard library's distribution implementations).
int uniform_int(std::mt19937_64& rng, int lo, int hi);

/// Uniform double in [0, 1).
double uniform01(std::mt19937_64& rng);

/// Standard normal via Box-Muller; portable across standard libraries.
double standard_normal(std::mt19937_64& rng);

} // namespace structcox

#pragma once

#include <cstdint>
#include <random>

namespace sepmix {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Per-realization stream derived from (master seed, realization index).
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(mix64(master_seed)),
                      static_cast<std::uint32_t>(mix64(master_seed) >> 32),
                      static_cast<std::uint32_t>(mix64(index ^ 0x5851f42d4c957f2dULL)),
                      static_cast<std::uint32_t>(mix64(index ^ 0x5851f42d4c957f2dULL) >> 32)};
    return Rng(seq);
}

/// Uniform double in [0, 1) with 53 random bits. Bit-stable across standard libraries.
inline double uniform01(Rng& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by multiply-shift.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

} // namespace sepmix

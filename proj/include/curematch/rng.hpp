#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace curematch {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent child seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Child seed from a parent seed and a path of counters. Depends only on the
/// values, never on the order in which children are created.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = splitmix64(seed);
    for (auto c : path) s = splitmix64(s ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
    return s;
}

/// Uniform double in the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    // 53 random bits, offset by half a step.
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace curematch

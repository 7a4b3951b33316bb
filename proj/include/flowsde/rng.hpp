#pragma once

#include <cmath>
#include <cstdint>

namespace flowsde {

// Counter-based random number generation. Every variate is a pure function
// of (seed, stream, counter words), so trajectories can be simulated in any
// order, on any number of threads, and still come out bit-identical.

namespace rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer (Stafford mix13).
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

inline std::uint64_t fold(std::uint64_t h, std::uint64_t word) {
    return mix64(h + kGolden + word);
}

inline std::uint64_t key4(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t a, std::uint64_t b) {
    return fold(fold(fold(fold(0, seed), stream), a), b);
}

// Map to (0, 1]; never 0, so log() below is safe.
inline double to_unit_open(std::uint64_t bits) {
    return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// One standard normal per key, Box-Muller on two SplitMix64 outputs.
inline double standard_normal(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t a, std::uint64_t b) {
    const std::uint64_t key = key4(seed, stream, a, b);
    const double u1 = to_unit_open(mix64(key + 1 * kGolden));
    const double u2 = to_unit_open(mix64(key + 2 * kGolden));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Stream ids. Prior draws and Wiener increments never collide.
inline constexpr std::uint64_t kPriorStream = 0x70726900ULL;
inline constexpr std::uint64_t kStepStream  = 0x73746500ULL;

// Independent per-trial seeds derived from one master seed.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial_index) {
    return fold(fold(0, master_seed), trial_index + 1);
}

}  // namespace rng

}  // namespace flowsde

#pragma once

// Counter-based random number generation (Philox-4x32-10).
//
// Every normal increment in the simulation engine is a pure function of
// (seed, path_index, step_index, stream).  Draws are therefore independent of
// thread scheduling and worker count, which is what makes byte-identical
// reruns possible.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace voltube::rng {

namespace detail {
inline constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
}  // namespace detail

// One 10-round Philox-4x32 block: 128 bits of counter, 64 bits of key.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    using namespace detail;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM4x32A) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM4x32B) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
    return ctr;
}

// Maps a 64-bit word to the open interval (0, 1): (k + 1/2) 2^-52 for the top
// 52 bits k, so every value is exact in double and the extremes 2^-53 and
// 1 - 2^-53 stay strictly inside (0, 1).  (A 53-bit grid cannot be centered:
// 1 - 2^-54 is not representable and would round to 1.)
inline double u64_to_unit(std::uint64_t z) {
    return (static_cast<double>(z >> 12) + 0.5) * 0x1p-52;
}

// Two independent U(0,1) draws from one block keyed by (seed; path, step, stream).
inline std::pair<double, double> uniform_pair(std::uint64_t seed, std::uint64_t path,
                                              std::uint32_t step, std::uint32_t stream) {
    const auto b = philox4x32(
        {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, stream},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const std::uint64_t w0 = static_cast<std::uint64_t>(b[0]) | (static_cast<std::uint64_t>(b[1]) << 32);
    const std::uint64_t w1 = static_cast<std::uint64_t>(b[2]) | (static_cast<std::uint64_t>(b[3]) << 32);
    return {u64_to_unit(w0), u64_to_unit(w1)};
}

// Two independent standard normals (Box-Muller) from one Philox block.
inline std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t path,
                                             std::uint32_t step, std::uint32_t stream) {
    const auto [u1, u2] = uniform_pair(seed, path, step, stream);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace voltube::rng

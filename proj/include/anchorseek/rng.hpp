#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace anchorseek {

using Rng = std::mt19937_64;

namespace detail {

// splitmix64 finalizer; used to turn (seed, tag...) tuples into
// well-separated stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministically derive an independent RNG stream from a master seed
/// and up to two tags (stage id, iteration id).
inline Rng derive_rng(std::uint64_t seed, std::uint64_t tag0 = 0, std::uint64_t tag1 = 0) {
    std::uint64_t s = detail::mix64(seed ^ detail::mix64(tag0 + 0x517cc1b727220a95ull));
    s = detail::mix64(s ^ detail::mix64(tag1 + 0x2545f4914f6cdd1dull));
    return Rng(s);
}

/// Uniform double in [0, 1) with 53 random bits. Hand-rolled so that the
/// stream is identical across standard libraries.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    // Lemire-style rejection-free enough for our n << 2^64; modulo bias is
    // below 2^-40 for any n we use, but do the widening trick anyway.
    unsigned __int128 wide = static_cast<unsigned __int128>(rng()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

/// Standard normal via Box-Muller on the portable uniform stream.
inline double normal_unit(Rng& rng) {
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace anchorseek

#pragma once

#include <cmath>
#include <cstdint>

namespace stacklq::rng {

// Counter-based Gaussian draws: every value is a pure function of
// (seed, stream, path, step, component). Paths are reproducible bit-exactly
// and independent of evaluation order, so path-parallel workers need no
// shared state. Stream 0 carries the driving increments of an ensemble;
// nested resampling uses streams >= 1.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Key shared by all components of one (path, step).
inline std::uint64_t step_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
                              std::uint64_t step) {
    std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ path);
    h = splitmix64(h ^ step);
    return h;
}

inline double to_unit(std::uint64_t bits) {
    // Uniform on (0, 1]; never 0, so log() below is safe.
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

inline double normal_from_key(std::uint64_t key, std::uint64_t comp) {
    const double u = to_unit(splitmix64(key ^ (2 * comp + 1)));
    const double v = to_unit(splitmix64(key ^ (2 * comp + 2)));
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.2831853071795864769 * v);
}

inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
                     std::uint64_t step, std::uint64_t comp) {
    return normal_from_key(step_key(seed, stream, path, step), comp);
}

// The three Brownian increments of one Euler step, scaled by sqrt(h).
inline void increments3(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
                        std::uint64_t step, double sqrt_h, double out[3]) {
    const std::uint64_t key = step_key(seed, stream, path, step);
    out[0] = sqrt_h * normal_from_key(key, 0);
    out[1] = sqrt_h * normal_from_key(key, 1);
    out[2] = sqrt_h * normal_from_key(key, 2);
}

}  // namespace stacklq::rng

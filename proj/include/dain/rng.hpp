#pragma once

#include <cmath>
#include <cstdint>

namespace dain {

/**
 * Counter-based deterministic random number generator.
 *
 * Each draw applies the splitmix64 finalizer to `seed + golden * counter`,
 * so a state is fully described by (seed, counter) and identical seeds with
 * identical call sequences produce identical draws on every platform.
 * Streams can be split off for per-worker or per-item use without coupling
 * their sequences to the parent's position.
 */
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    RngState() = default;
    explicit RngState(std::uint64_t s) : seed(s) {}

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++counter;
        return mix(seed + kGolden * counter);
    }

    /// Derive an independent stream keyed by `stream_id`; the child starts at
    /// counter 0 and does not advance this state.
    RngState split(std::uint64_t stream_id) const {
        return RngState(mix(seed ^ mix(stream_id + kGolden)));
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform float in [0, 1).
    float uniform_f32() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    /// Uniform double in [lo, hi).
    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive; modulo bias is
    /// negligible for the small ranges used here.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal draw (Box-Muller, cosine branch; two draws consumed).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

/// FNV-1a over a byte range; used for config hashing and route signatures.
inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a(&v, sizeof(v), h);
}

} // namespace dain

#pragma once

#include <cmath>
#include <cstdint>

namespace pbdw {

/// Counter-based pseudo random generator (splitmix64 output function).
///
/// Every draw is a pure function of (seed, stream, counter), so any stage of
/// a run can re-derive exactly the same sequence without persisting it, and
/// independent streams can be derived per worker or per sample index.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed, stream)) {}

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53 mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the paired value is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        cached_ = rad * std::sin(ang);
        has_cached_ = true;
        return rad * std::cos(ang);
    }

    /// Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    /// Deterministic key derivation for sub-streams.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b * 0xD6E8FEB86659FD93ull + 0x2545F4914F6CDD1Dull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace pbdw

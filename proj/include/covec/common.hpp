#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace covec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or dimension contract violated at an op boundary.
struct ShapeError : Error {
    using Error::Error;
};

// A computation produced NaN/Inf; never propagated silently.
struct NumericError : Error {
    using Error::Error;
};

// Malformed file, payload, or stream.
struct IoError : Error {
    using Error::Error;
};

// Invalid configuration or argument outside its domain.
struct ConfigError : Error {
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic, self-contained PRNG (xoshiro256++). All randomness in the
// project flows through this type so results do not depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::below: n must be positive");
        // Rejection sampling keeps the draw exactly uniform.
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(6.283185307179586476925286766559 * u2);
        has_spare_ = true;
        return mag * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Independent child stream; distinct tags give distinct streams.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t s = state_[0] ^ rotl(state_[3], 7) ^ (tag * 0x9e3779b97f4a7c15ull);
        return Rng(splitmix64(s));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

template <typename T>
inline bool is_finite_value(T v) {
    return std::isfinite(static_cast<double>(v));
}

}  // namespace covec

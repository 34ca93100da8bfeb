#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "ngpull/vec3.hpp"

namespace ngp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stable seed derivation for named sub-streams (epoch pools, shuffles, ...).
// Results depend only on the inputs, never on platform or thread count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
}
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t sub) {
    return splitmix64(derive_seed(seed, tag) ^ splitmix64(sub ^ 0xa5a5a5a5a5a5a5a5ull));
}

// PCG32: small, fast, and fully deterministic across compilers. The standard
// <random> distributions are implementation-defined, so everything below is
// generated by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(0), inc_((stream << 1u) | 1u) {
        next_u32();
        state_ += splitmix64(seed);
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    Vec3<T> normal_vec3() {
        return {static_cast<T>(normal()), static_cast<T>(normal()), static_cast<T>(normal())};
    }

    template <typename T>
    Vec3<T> uniform_vec3(double lo, double hi) {
        return {static_cast<T>(uniform(lo, hi)), static_cast<T>(uniform(lo, hi)),
                static_cast<T>(uniform(lo, hi))};
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// In-place Fisher-Yates shuffle driven by the given rng.
template <typename Container>
void shuffle(Container& c, Rng& rng) {
    for (std::size_t i = c.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(c[i - 1], c[j]);
    }
}

}  // namespace ngp

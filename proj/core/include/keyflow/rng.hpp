#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace keyflow {

// Deterministic RNG used everywhere seeds appear in the public API.
// std::mt19937_64 is fully specified by the standard; the distributions
// below are hand-rolled because the standard library's distribution
// algorithms are implementation-defined and would break byte-identical
// reproducibility guarantees.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from (seed, salt) via splitmix64.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t derive(std::uint64_t seed, std::string_view salt) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (unsigned char c : salt) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return derive(seed, h);
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n), n >= 1 (rejection sampling).
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t bound = n * ((~std::uint64_t{0}) / n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= bound);
        return x % n;
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace keyflow

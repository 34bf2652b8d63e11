#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace qsearch {

// Deterministic splitmix64 generator. We do not use <random> distributions
// because their output is implementation-defined; every draw here is
// bit-reproducible across compilers and platforms.
//
// Independent consumers derive their own stream via Rng::stream(seed, tags...),
// which hashes the seed with a tag path (e.g. {pass, block, cycle}). Streams
// with different tag paths never share draws, so e.g. parallel fitness
// evaluation cannot perturb the mutation sequence.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    static Rng stream(uint64_t seed, std::initializer_list<uint64_t> tags) {
        uint64_t s = seed;
        for (uint64_t t : tags) {
            s = mix(s, t);
        }
        return Rng(s);
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform in [0, n). Modulo bias is below 1e-18 for the small n used here.
    uint64_t next_below(uint64_t n) {
        return next_u64() % n;
    }

    // Standard normal via Box-Muller; the spare value is cached so draws are
    // consumed strictly in order.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) {
            u1 = next_double();
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace qsearch

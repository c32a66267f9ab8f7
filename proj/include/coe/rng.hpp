#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace coe {

// Counter-based deterministic RNG (splitmix64 core). The same seed always
// yields the same stream, independent of platform or standard library, which
// is what makes checkpoints and datasets bit-reproducible.
//
// Streams for distinct purposes are derived by sub-seeding: the new seed is
// the parent seed XOR'd with an FNV-1a hash of a purpose tag, e.g.
// rng.fork("datagen/features").
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    int range_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    // Standard normal via Box-Muller. Consumes two uniforms per call; no
    // cached spare, so the draw count per call is fixed.
    double gauss() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    static std::uint64_t hash_tag(std::string_view tag) {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

    Rng fork(std::string_view tag) const { return Rng(seed_ ^ hash_tag(tag)); }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace coe

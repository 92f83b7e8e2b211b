#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nlt {

/// splitmix64 step; used to derive independent sub-stream seeds so that the
/// data generator, batch samplers and weight init never share a stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic random source. The mt19937 engine is fully specified by the
/// standard; the distributions are hand-rolled here because the standard
/// library's distribution objects are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

    std::uint32_t next_u32() { return eng_(); }

    /// Uniform in [0, 1) with 24 bits of resolution.
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), unbiased via masked rejection.
    int uniform_int(int n) {
        if (n <= 0) return 0;
        std::uint32_t range = static_cast<std::uint32_t>(n);
        std::uint32_t mask = range - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        std::uint32_t x;
        do {
            x = next_u32() & mask;
        } while (x >= range);
        return static_cast<int>(x);
    }

    /// Standard normal via Box-Muller; the paired value is cached.
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(next_u32()) + 0.5) * (1.0 / 4294967296.0);
        double u2 = (static_cast<double>(next_u32()) + 0.5) * (1.0 / 4294967296.0);
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        has_spare_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    float normal(float mean, float stddev) { return mean + stddev * normal(); }

private:
    std::mt19937 eng_;
    bool has_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace nlt

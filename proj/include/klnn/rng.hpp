#pragma once

#include <cmath>
#include <cstdint>

namespace klnn {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, stream). Used so replicas
/// give identical results for any worker count or schedule.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
                 mix64(stream + 0x165667b19e3779f9ULL));
}

/// SplitMix64 generator. Counter-based: the state advances by a fixed odd
/// increment and the output is a bijective mix of it, so seeding is cheap
/// and any number of independent streams can be derived by hashing.
/// All floating-point draws below are implemented on top of the raw 64-bit
/// output so results are bit-identical across standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        return mix64(z);
    }

    /// Uniform on [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe under log().
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double exponential() { return -std::log(uniform_pos()); }

    /// Standard normal via the Marsaglia polar method; the spare deviate is
    /// cached, so a single generator consumes randomness in a fixed order.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    /// Uniform direction on the unit sphere S^{d-1}: normalized Gaussian vector.
    template <typename OutIt>
    void unit_sphere(int d, OutIt out) {
        double norm2;
        do {
            norm2 = 0.0;
            auto it = out;
            for (int i = 0; i < d; ++i) {
                const double g = normal();
                *it++ = g;
                norm2 += g * g;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        auto it = out;
        for (int i = 0; i < d; ++i) *it++ *= inv;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace klnn

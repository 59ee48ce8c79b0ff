#ifndef BEAMTRACK_RANDOM_HPP
#define BEAMTRACK_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "beamtrack/common.hpp"

namespace beamtrack {

/// splitmix64 step; used to derive independent child seeds from a master seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
/// that streams are bit-reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two uniforms per sample, no caching,
    /// so the consumption pattern is fixed).
    double gaussian() {
        double u1 = uniform();
        // Guard log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    Vec3 gaussian3() {
        double a = gaussian();
        double b = gaussian();
        double c = gaussian();
        return {a, b, c};
    }

private:
    std::mt19937_64 eng_;
};

} // namespace beamtrack

#endif // BEAMTRACK_RANDOM_HPP

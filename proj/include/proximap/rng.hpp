#pragma once

#include <cmath>
#include <cstdint>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"

namespace proximap {

/// Counter-based deterministic RNG (splitmix64 core). Identical seed and call
/// sequence give a bitwise-identical stream on every platform. Gaussian
/// variates come from Box-Muller on the uniform stream; one spare per pair is
/// cached. Instances are single-owner: never share one across threads.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in (0,1]; never 0, so it is safe under log().
    double uniform_open01() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform in [0,1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Log-uniform over [lo, hi], lo > 0; the sampler for scale-like knobs.
    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// i.i.d. N(0, sigma^2) entries; sigma = 0 gives the all-zero field.
inline Field sample_gaussian(Rng& rng, int h, int w, int c, double sigma) {
    if (sigma < 0.0) throw DomainError("sample_gaussian: negative sigma");
    Field out(h, w, c);
    for (double& v : out.data) v = sigma * rng.normal();
    return out;
}

inline Field gaussian_like(Rng& rng, const Field& shape_of, double sigma) {
    return sample_gaussian(rng, shape_of.height, shape_of.width, shape_of.channels, sigma);
}

}  // namespace proximap

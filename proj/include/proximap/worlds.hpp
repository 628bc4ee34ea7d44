#pragma once

#include <string>
#include <utility>
#include <vector>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"
#include "proximap/gmm.hpp"
#include "proximap/rng.hpp"

namespace proximap {

/// Synthetic mixture "world": the data distribution, prior, score and modes
/// are all exact, so every solver claim is checkable. Modes are structured
/// patterns (constant patches, two-tone edges, axis-aligned stripes) with
/// levels inside [level_lo, level_hi].
struct WorldConfig {
    int height = 32;
    int width = 32;
    int channels = 1;
    int modes = 8;
    double s2 = 1e-6;
    double level_lo = 0.2;
    double level_hi = 0.8;
};

namespace detail {

inline Field pattern_mode(Rng& rng, const WorldConfig& cfg, int index) {
    Field mu(cfg.height, cfg.width, cfg.channels);
    const int family = index % 3;
    for (int ch = 0; ch < cfg.channels; ++ch) {
        const double a = rng.uniform(cfg.level_lo, cfg.level_hi);
        const double b = rng.uniform(cfg.level_lo, cfg.level_hi);
        switch (family) {
            case 0: {  // constant patch
                for (int r = 0; r < cfg.height; ++r)
                    for (int c = 0; c < cfg.width; ++c) mu.at(r, c, ch) = a;
                break;
            }
            case 1: {  // two-tone edge, vertical or horizontal
                const bool vertical = rng.uniform01() < 0.5;
                const int cut = rng.uniform_int(1, (vertical ? cfg.width : cfg.height) - 1);
                for (int r = 0; r < cfg.height; ++r)
                    for (int c = 0; c < cfg.width; ++c)
                        mu.at(r, c, ch) = (vertical ? c : r) < cut ? a : b;
                break;
            }
            default: {  // square-wave stripes
                const bool vertical = rng.uniform01() < 0.5;
                const int period = 2 * rng.uniform_int(2, std::max(2, cfg.width / 4));
                const int phase = rng.uniform_int(0, period - 1);
                for (int r = 0; r < cfg.height; ++r)
                    for (int c = 0; c < cfg.width; ++c) {
                        const int t = ((vertical ? c : r) + phase) % period;
                        mu.at(r, c, ch) = t < period / 2 ? a : b;
                    }
                break;
            }
        }
    }
    return mu;
}

}  // namespace detail

/// Seeded world of structured-pattern modes with uniform weights.
inline GmmPrior build_world(const WorldConfig& cfg, uint64_t seed) {
    if (cfg.modes < 1) throw DomainError("build_world: needs at least one mode");
    Rng rng(seed);
    std::vector<Field> means;
    means.reserve(cfg.modes);
    for (int j = 0; j < cfg.modes; ++j) means.push_back(detail::pattern_mode(rng, cfg, j));
    return GmmPrior(std::move(means), std::vector<double>(cfg.modes, 1.0 / cfg.modes), cfg.s2);
}

/// Clustered world for the score-bias diagnosis: n_clusters constant-level
/// centers, each with members_per_cluster modes displaced by member_radius
/// (L2 norm) in seeded random directions. Mode merging under score smoothing
/// happens at the member_radius scale.
inline GmmPrior build_clustered_world(int height, int width, int channels, int n_clusters,
                                      int members_per_cluster, double member_radius, double s2,
                                      uint64_t seed) {
    if (n_clusters < 1 || members_per_cluster < 1)
        throw DomainError("build_clustered_world: needs at least one mode");
    Rng rng(seed);
    std::vector<Field> means;
    for (int c = 0; c < n_clusters; ++c) {
        const double level = 0.25 + 0.5 * (n_clusters == 1 ? 0.5 : static_cast<double>(c) /
                                                                       (n_clusters - 1));
        for (int m = 0; m < members_per_cluster; ++m) {
            Field mu(height, width, channels, level);
            Field dir = gaussian_like(rng, mu, 1.0);
            axpy(member_radius / norm(dir), dir, mu);
            means.push_back(std::move(mu));
        }
    }
    const int n = n_clusters * members_per_cluster;
    return GmmPrior(std::move(means), std::vector<double>(n, 1.0 / n), s2);
}

/// Draw a ground-truth image: pick a component by weight, add N(0, s2).
/// Returns the field and the component index.
inline std::pair<Field, int> sample_world_image(const GmmPrior& world, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    int pick = world.components() - 1;
    for (int j = 0; j < world.components(); ++j) {
        acc += world.weights[j];
        if (u < acc) {
            pick = j;
            break;
        }
    }
    Field x = world.means[pick];
    const double s = std::sqrt(world.s2);
    for (double& v : x.data) v += s * rng.normal();
    return {std::move(x), pick};
}

}  // namespace proximap

#pragma once

#include <vector>

#include "proximap/field.hpp"
#include "proximap/gmm.hpp"
#include "proximap/rng.hpp"

namespace testutil {

inline proximap::Field random_field(proximap::Rng& rng, int h, int w, int c,
                                    double lo = 0.0, double hi = 1.0) {
    proximap::Field f(h, w, c);
    for (double& v : f.data) v = rng.uniform(lo, hi);
    return f;
}

inline proximap::Field constant_field(int h, int w, int c, double value) {
    return proximap::Field(h, w, c, value);
}

// Tiny mixture helper for tests: constant-level modes.
inline proximap::GmmPrior level_prior(int h, int w, int c, const std::vector<double>& levels,
                                      double s2) {
    std::vector<proximap::Field> means;
    for (double v : levels) means.push_back(proximap::Field(h, w, c, v));
    std::vector<double> weights(levels.size(), 1.0 / static_cast<double>(levels.size()));
    return proximap::GmmPrior(std::move(means), weights, s2);
}

}  // namespace testutil

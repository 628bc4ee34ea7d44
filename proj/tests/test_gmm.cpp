#include <catch_amalgamated.hpp>

#include <cmath>

#include "proximap/gmm.hpp"
#include "proximap/rng.hpp"

#include "helpers.hpp"

using namespace proximap;
using testutil::level_prior;
using testutil::random_field;

namespace {

// Direct mixture summation, no log-space tricks: the oracle for the
// stabilized implementation (usable only where nothing underflows).
double log_density_direct(const GmmPrior& p, const Field& x, double sigma) {
    const double v = p.s2 + sigma * sigma;
    const double d = static_cast<double>(p.dim());
    double acc = 0.0;
    for (size_t j = 0; j < p.means.size(); ++j)
        acc += p.weights[j] * std::pow(2.0 * M_PI * v, -d / 2.0) *
               std::exp(-sqdist(x, p.means[j]) / (2.0 * v));
    return std::log(acc);
}

GmmPrior random_prior(Rng& rng, int h, int w, int c, int modes, double s2) {
    std::vector<Field> means;
    for (int j = 0; j < modes; ++j) means.push_back(random_field(rng, h, w, c));
    std::vector<double> weights(modes);
    double sum = 0.0;
    for (double& wj : weights) {
        wj = rng.uniform(0.2, 1.0);
        sum += wj;
    }
    for (double& wj : weights) wj /= sum;
    return GmmPrior(std::move(means), weights, s2);
}

}  // namespace

TEST_CASE("log density of a single Gaussian at its mean", "[gmm]") {
    const double s2 = 0.01;
    const GmmPrior p = level_prior(2, 2, 1, {0.3}, s2);
    const double d = 4.0;
    const double expected = -(d / 2.0) * std::log(2.0 * M_PI * s2);
    CHECK(log_density_smoothed(p, Field(2, 2, 1, 0.3), 0.0) ==
          Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log density matches direct mixture summation", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.0, 1.0}, 0.01);
    const Field x(1, 1, 1, 0.5);
    CHECK(log_density_smoothed(p, x, 0.0) ==
          Catch::Approx(log_density_direct(p, x, 0.0)).epsilon(1e-12));

    Rng rng(21);
    const GmmPrior q = random_prior(rng, 2, 2, 1, 4, 0.05);
    for (int i = 0; i < 10; ++i) {
        const Field xi = random_field(rng, 2, 2, 1);
        const double sigma = rng.uniform(0.0, 0.5);
        CHECK(log_density_smoothed(q, xi, sigma) ==
              Catch::Approx(log_density_direct(q, xi, sigma)).epsilon(1e-10));
    }
}

TEST_CASE("density integrates to one (Monte Carlo, 2-pixel domain)", "[gmm]") {
    const GmmPrior p = level_prior(1, 2, 1, {0.3, 0.6}, 0.04);
    Rng rng(22);
    const double lo = -1.0, hi = 2.0;
    const double volume = (hi - lo) * (hi - lo);
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Field x(1, 2, 1);
        x.data[0] = rng.uniform(lo, hi);
        x.data[1] = rng.uniform(lo, hi);
        acc += std::exp(log_density_smoothed(p, x, 0.0));
    }
    const double integral = volume * acc / n;
    CHECK(std::abs(integral - 1.0) < 0.02);
}

TEST_CASE("single-component score is the Gaussian score", "[gmm]") {
    const GmmPrior p = level_prior(2, 2, 1, {0.4}, 0.02);
    Rng rng(23);
    const Field x = random_field(rng, 2, 2, 1);
    const double sigma = 0.1;
    const Field s = score_smoothed(p, x, sigma);
    const double v = 0.02 + sigma * sigma;
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(s.data[i] == Catch::Approx((0.4 - x.data[i]) / v).epsilon(1e-12));
}

TEST_CASE("score matches finite differences of the log density", "[gmm]") {
    Rng rng(24);
    const GmmPrior p = random_prior(rng, 4, 4, 1, 3, 0.01);
    const Field x = random_field(rng, 4, 4, 1);
    const double sigma = 0.15;
    const Field s = score_smoothed(p, x, sigma);
    const double h = 1e-5;
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        Field xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        const double fd =
            (log_density_smoothed(p, xp, sigma) - log_density_smoothed(p, xm, sigma)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - s.data[i]));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("score vanishes at the midpoint of an equal-weight pair", "[gmm]") {
    const GmmPrior p = level_prior(2, 2, 1, {0.2, 0.8}, 0.01);
    const Field mid(2, 2, 1, 0.5);
    const Field s = score_smoothed(p, mid, 0.07);
    for (double v : s.data) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("biased score equals the exact score of the inflated mixture", "[gmm]") {
    Rng rng(25);
    const double s2 = 1e-4, delta2 = 25e-4;
    const GmmPrior p = random_prior(rng, 2, 2, 1, 3, s2);
    const GmmPrior inflated(p.means, p.weights, s2 + delta2);
    for (int i = 0; i < 5; ++i) {
        const Field x = random_field(rng, 2, 2, 1);
        const double sigma = rng.uniform(0.01, 0.3);
        const Field biased = score_smoothed(p, x, sigma, ScoreBias(delta2));
        const Field exact = score_smoothed(inflated, x, sigma);
        CHECK(max_abs_diff(biased, exact) < 1e-12);
    }
}

TEST_CASE("single-component posterior mean", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.3}, 0.01);
    const Field x(1, 1, 1, 0.5);
    const Field out = mmse_denoise(p, x, 0.1);
    CHECK(out.data[0] == Catch::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("Tweedie identity on random mixtures", "[gmm]") {
    Rng rng(26);
    for (int trial = 0; trial < 10; ++trial) {
        const GmmPrior p = random_prior(rng, 2, 2, 1, 4, rng.uniform(1e-4, 0.05));
        const Field x = random_field(rng, 2, 2, 1);
        const double sigma = rng.uniform(1e-3, 1.0);
        const Field mmse = mmse_denoise(p, x, sigma);
        Field tweedie = score_smoothed(p, x, sigma);
        for (size_t i = 0; i < x.size(); ++i)
            tweedie.data[i] = x.data[i] + sigma * sigma * tweedie.data[i];
        CHECK(max_abs_diff(mmse, tweedie) <= 1e-12);

        // same link with the bias argument threaded through
        const ScoreBias bias(4e-4);
        const Field mmse_b = mmse_denoise(p, x, sigma, bias);
        Field tweedie_b = score_smoothed(p, x, sigma, bias);
        for (size_t i = 0; i < x.size(); ++i)
            tweedie_b.data[i] = x.data[i] + sigma * sigma * tweedie_b.data[i];
        CHECK(max_abs_diff(mmse_b, tweedie_b) <= 1e-12);
    }
}

TEST_CASE("posterior mean approaches the prior mean at large sigma", "[gmm]") {
    Rng rng(27);
    const GmmPrior p = random_prior(rng, 2, 2, 1, 3, 1e-4);
    Field prior_mean(2, 2, 1);
    for (size_t j = 0; j < p.means.size(); ++j) axpy(p.weights[j], p.means[j], prior_mean);
    const Field x = random_field(rng, 2, 2, 1);
    const Field out = mmse_denoise(p, x, 100.0);
    CHECK(max_abs_diff(out, prior_mean) < 1e-3);
}

TEST_CASE("mmse at sigma zero is the identity", "[gmm]") {
    Rng rng(28);
    const GmmPrior p = random_prior(rng, 2, 2, 1, 2, 0.01);
    const Field x = random_field(rng, 2, 2, 1);
    CHECK(max_abs_diff(mmse_denoise(p, x, 0.0), x) == 0.0);
}

TEST_CASE("log density decreases with smoothing at a single-component mode", "[gmm]") {
    const GmmPrior p = level_prior(2, 2, 1, {0.5}, 0.01);
    const Field mode(2, 2, 1, 0.5);
    double prev = log_density_smoothed(p, mode, 0.0);
    for (double sigma : {0.05, 0.1, 0.2, 0.5, 1.0}) {
        const double cur = log_density_smoothed(p, mode, sigma);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("conditional log density differences match direct Bayes computation", "[gmm]") {
    // 1-pixel mixture; direct posterior density on a grid gives the oracle.
    const GmmPrior p = level_prior(1, 1, 1, {0.2, 0.7}, 0.02);
    const double sigma_y = 0.15;
    const Field y(1, 1, 1, 0.5);
    const Field x1(1, 1, 1, 0.32);
    const Field x2(1, 1, 1, 0.61);
    const double delta = conditional_log_density(p, x1, y, sigma_y) -
                         conditional_log_density(p, x2, y, sigma_y);
    // direct: log [p(x) N(y; x, sigma_y^2)] difference, the y-normalization cancels
    auto direct = [&](double x) {
        const double prior = std::exp(log_density_direct(p, Field(1, 1, 1, x), 0.0));
        const double lik = std::exp(-(y.data[0] - x) * (y.data[0] - x) / (2 * sigma_y * sigma_y)) /
                           std::sqrt(2 * M_PI * sigma_y * sigma_y);
        return std::log(prior * lik);
    };
    CHECK(delta == Catch::Approx(direct(0.32) - direct(0.61)).epsilon(1e-10));
}

TEST_CASE("conditional log density peaks at the data for a prior centered there", "[gmm]") {
    const GmmPrior p = level_prior(2, 2, 1, {0.5}, 0.01);
    const Field y(2, 2, 1, 0.5);
    const double at_y = conditional_log_density(p, y, y, 0.1);
    CHECK(at_y > conditional_log_density(p, Field(2, 2, 1, 0.6), y, 0.1));
    CHECK(at_y > conditional_log_density(p, Field(2, 2, 1, 0.4), y, 0.1));
}

TEST_CASE("conditional log density delta sign is shift-invariant for a shifted pair", "[gmm]") {
    // Two modes a lattice step apart along the all-ones direction: shifting
    // candidates and data by that step maps the configuration into itself.
    const double step = 0.2;
    const GmmPrior p = level_prior(1, 1, 1, {0.3, 0.3 + step}, 1e-3);
    const Field y(1, 1, 1, 0.42);
    const Field x1(1, 1, 1, 0.31);
    const Field x2(1, 1, 1, 0.48);
    const double d0 = conditional_log_density(p, x1, y, 0.1) -
                      conditional_log_density(p, x2, y, 0.1);
    const GmmPrior p_shift = level_prior(1, 1, 1, {0.3 + step, 0.3 + 2 * step}, 1e-3);
    const double d1 = conditional_log_density(p_shift, Field(1, 1, 1, 0.31 + step),
                                              Field(1, 1, 1, 0.42 + step), 0.1) -
                      conditional_log_density(p_shift, Field(1, 1, 1, 0.48 + step),
                                              Field(1, 1, 1, 0.42 + step), 0.1);
    CHECK((d0 > 0) == (d1 > 0));
    CHECK(d0 == Catch::Approx(d1).epsilon(1e-9));
}

TEST_CASE("conditional log density rejects nonpositive sigma", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.5}, 0.01);
    const Field x(1, 1, 1, 0.5);
    CHECK_THROWS_AS(conditional_log_density(p, x, x, 0.0), DomainError);
}

TEST_CASE("map_oracle matches the single-Gaussian closed form", "[gmm]") {
    const double s2 = 0.01, tau = 0.1, mu = 0.3;
    const GmmPrior p = level_prior(2, 2, 1, {mu}, s2);
    Rng rng(29);
    const Field y = random_field(rng, 2, 2, 1);
    const Field out = map_oracle(p, y, 0.2, tau, 1);
    for (size_t i = 0; i < y.size(); ++i) {
        const double expected = (s2 * y.data[i] + tau * mu) / (s2 + tau);
        CHECK(std::abs(out.data[i] - expected) < 1e-8);
    }
}

TEST_CASE("map_oracle picks the nearby tight mode", "[gmm]") {
    const double s = 0.01;
    const GmmPrior p = level_prior(1, 1, 1, {0.2, 0.8}, s * s);
    const Field y(1, 1, 1, 0.25);
    const Field out = map_oracle(p, y, 0.05, 0.05 * 0.05, 2);
    CHECK(std::abs(out.data[0] - 0.2) < 3 * s);
}

TEST_CASE("map_oracle tends to y as tau vanishes", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.3}, 0.01);
    const Field y(1, 1, 1, 0.55);
    const Field out = map_oracle(p, y, 0.1, 1e-9, 1);
    CHECK(std::abs(out.data[0] - y.data[0]) < 1e-6);
}

TEST_CASE("map_oracle beats y and the posterior mean on the objective", "[gmm]") {
    Rng rng(30);
    for (int trial = 0; trial < 5; ++trial) {
        const GmmPrior p = random_prior(rng, 1, 2, 1, 2, 0.02);
        const Field y = random_field(rng, 1, 2, 1);
        const double sigma_y = 0.2;
        const double tau = sigma_y * sigma_y;  // prox weight matching the posterior
        const Field opt = map_oracle(p, y, sigma_y, tau, 2);
        const auto objective = [&](const Field& x) {
            return 0.5 * sqdist(x, y) - tau * log_density_smoothed(p, x, 0.0);
        };
        const Field mean = mmse_denoise(p, y, sigma_y);
        if (max_abs_diff(opt, y) > 1e-6) CHECK(objective(opt) < objective(y));
        if (max_abs_diff(opt, mean) > 1e-6) CHECK(objective(opt) < objective(mean));
    }
}

TEST_CASE("map_oracle validates restarts", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.2, 0.8}, 1e-4);
    CHECK_THROWS_AS(map_oracle(p, Field(1, 1, 1, 0.5), 0.1, 0.01, 1), DomainError);
}

TEST_CASE("nearest_mode_distance", "[gmm]") {
    const GmmPrior p = level_prior(1, 1, 1, {0.2, 0.8}, 1e-4);
    CHECK(nearest_mode_distance(p, Field(1, 1, 1, 0.2)) == 0.0);
    CHECK(nearest_mode_distance(p, Field(1, 1, 1, 0.5)) == Catch::Approx(0.3));
    Rng rng(31);
    const GmmPrior q = random_prior(rng, 2, 2, 1, 5, 1e-4);
    const Field x = random_field(rng, 2, 2, 1);
    double best = 1e300;
    for (const Field& mu : q.means) best = std::min(best, std::sqrt(sqdist(x, mu)));
    CHECK(nearest_mode_distance(q, x) == Catch::Approx(best));
}

TEST_CASE("prior JSON round-trip", "[gmm]") {
    Rng rng(32);
    const GmmPrior p = random_prior(rng, 2, 4, 3, 3, 0.007);
    const GmmPrior q = prior_from_json(prior_to_json(p));
    CHECK(q.s2 == p.s2);
    REQUIRE(q.components() == p.components());
    for (int j = 0; j < p.components(); ++j) {
        CHECK(q.weights[j] == p.weights[j]);
        CHECK(max_abs_diff(q.means[j], p.means[j]) == 0.0);
    }
}

TEST_CASE("prior validation", "[gmm]") {
    CHECK_THROWS_AS(GmmPrior({}, {}, 0.01), DomainError);
    CHECK_THROWS_AS(GmmPrior({Field(1, 1, 1, 0.5)}, {0.9}, 0.01), DomainError);
    CHECK_THROWS_AS(GmmPrior({Field(1, 1, 1, 0.5)}, {1.0}, 0.0), DomainError);
    const GmmPrior p = testutil::level_prior(1, 1, 1, {0.5}, 0.01);
    CHECK_THROWS_AS(log_density_smoothed(p, Field(2, 1, 1, 0.5), 0.0), ShapeError);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"
#include "proximap/serialize.hpp"

namespace proximap {

/// Isotropic Gaussian mixture prior. Every component shares the variance s2;
/// smoothing by observation noise sigma^2 just inflates it, so density, score,
/// posterior mean and conditional log-density are all closed-form. This is the
/// exact stand-in for a learned image prior throughout the bench.
struct GmmPrior {
    int height = 0, width = 0, channels = 1;
    std::vector<Field> means;
    std::vector<double> weights;
    double s2 = 0.0;

    GmmPrior() = default;
    GmmPrior(std::vector<Field> mus, std::vector<double> ws, double component_variance)
        : means(std::move(mus)), weights(std::move(ws)), s2(component_variance) {
        if (means.empty()) throw DomainError("GmmPrior: needs at least one component");
        if (weights.size() != means.size())
            throw DomainError("GmmPrior: weights/means size mismatch");
        if (s2 <= 0.0) throw DomainError("GmmPrior: component variance must be positive");
        height = means[0].height;
        width = means[0].width;
        channels = means[0].channels;
        double wsum = 0.0;
        for (size_t j = 0; j < means.size(); ++j) {
            require_same_shape(means[j], means[0], "GmmPrior");
            if (weights[j] <= 0.0) throw DomainError("GmmPrior: weights must be positive");
            wsum += weights[j];
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw DomainError("GmmPrior: weights must sum to 1 (got " + std::to_string(wsum) + ")");
    }

    int dim() const { return height * width * channels; }
    int components() const { return static_cast<int>(means.size()); }

    void check_shape(const Field& x, const char* where) const {
        if (x.height != height || x.width != width || x.channels != channels)
            throw ShapeError(std::string(where) + ": field shape " + x.shape_str() +
                             " does not match prior " + means[0].shape_str());
    }
};

/// Surrogate for learned-score error: the score is evaluated on a mixture
/// whose variance is inflated by delta2. delta2 = 0 recovers the exact score.
struct ScoreBias {
    double delta2 = 0.0;
    ScoreBias() = default;
    explicit ScoreBias(double d2) : delta2(d2) {
        if (d2 < 0.0) throw DomainError("ScoreBias: delta2 must be nonnegative");
    }
};

namespace detail {

// Per-component log N(x; mu_j, v I) + log w_j, max-subtracted downstream.
inline std::vector<double> component_log_terms(const GmmPrior& p, const Field& x, double v) {
    const double d = static_cast<double>(p.dim());
    const double log_norm = -0.5 * d * std::log(2.0 * M_PI * v);
    std::vector<double> terms(p.means.size());
    for (size_t j = 0; j < p.means.size(); ++j)
        terms[j] = std::log(p.weights[j]) + log_norm - sqdist(x, p.means[j]) / (2.0 * v);
    return terms;
}

inline double logsumexp(const std::vector<double>& a) {
    const double m = *std::max_element(a.begin(), a.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : a) s += std::exp(v - m);
    return m + std::log(s);
}

// Responsibilities in log space with max subtraction; tight components
// underflow without it.
inline std::vector<double> responsibilities(const std::vector<double>& log_terms) {
    const double m = *std::max_element(log_terms.begin(), log_terms.end());
    std::vector<double> r(log_terms.size());
    double s = 0.0;
    for (size_t j = 0; j < r.size(); ++j) {
        r[j] = std::exp(log_terms[j] - m);
        s += r[j];
    }
    for (double& v : r) v /= s;
    return r;
}

}  // namespace detail

/// log p_sigma(x) of the smoothed mixture p * N(0, sigma^2 I).
inline double log_density_smoothed(const GmmPrior& p, const Field& x, double sigma) {
    p.check_shape(x, "log_density_smoothed");
    if (sigma < 0.0) throw DomainError("log_density_smoothed: negative sigma");
    return detail::logsumexp(detail::component_log_terms(p, x, p.s2 + sigma * sigma));
}

/// Score of the smoothed (and optionally bias-inflated) mixture:
/// sum_j r_j (mu_j - x) / (s2 + sigma^2 + delta2).
inline Field score_smoothed(const GmmPrior& p, const Field& x, double sigma,
                            const ScoreBias& bias = ScoreBias{}) {
    p.check_shape(x, "score_smoothed");
    if (sigma < 0.0) throw DomainError("score_smoothed: negative sigma");
    const double v = p.s2 + sigma * sigma + bias.delta2;
    const std::vector<double> r =
        detail::responsibilities(detail::component_log_terms(p, x, v));
    Field mean_mu(p.height, p.width, p.channels);
    for (size_t j = 0; j < p.means.size(); ++j) axpy(r[j], p.means[j], mean_mu);
    Field out(p.height, p.width, p.channels);
    const double inv_v = 1.0 / v;
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = (mean_mu.data[i] - x.data[i]) * inv_v;
    return out;
}

/// Posterior mean E[X | X_sigma = x] via the Tweedie identity
/// x + sigma^2 * score; with delta2 > 0 this is the biased denoiser surrogate.
inline Field mmse_denoise(const GmmPrior& p, const Field& x, double sigma,
                          const ScoreBias& bias = ScoreBias{}) {
    p.check_shape(x, "mmse_denoise");
    if (sigma < 0.0) throw DomainError("mmse_denoise: negative sigma");
    if (sigma == 0.0) return x;
    Field out = score_smoothed(p, x, sigma, bias);
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = x.data[i] + sigma * sigma * out.data[i];
    return out;
}

/// log p(x) - ||x-y||^2 / (2 sigma_y^2), up to the y-dependent constant; only
/// differences between candidates are meaningful.
inline double conditional_log_density(const GmmPrior& p, const Field& x, const Field& y,
                                      double sigma_y) {
    if (sigma_y <= 0.0) throw DomainError("conditional_log_density: sigma_y must be positive");
    p.check_shape(x, "conditional_log_density");
    p.check_shape(y, "conditional_log_density");
    return log_density_smoothed(p, x, 0.0) - sqdist(x, y) / (2.0 * sigma_y * sigma_y);
}

/// Brute-force reference for prox_{-tau log p}(y): multi-start gradient
/// descent on 1/2||x-y||^2 - tau log p(x) with the exact unsmoothed score,
/// restarted from y and from every component mean. Fixed step rule and
/// tolerances so downstream tests get reproducible reference values.
inline Field map_oracle(const GmmPrior& p, const Field& y, double sigma_y, double tau,
                        int restarts) {
    p.check_shape(y, "map_oracle");
    if (tau <= 0.0) throw DomainError("map_oracle: tau must be positive");
    if (sigma_y < 0.0) throw DomainError("map_oracle: sigma_y must be nonnegative");
    if (restarts < p.components())
        throw DomainError("map_oracle: restarts must cover every component");
    (void)sigma_y;  // the prox objective depends on y and tau only

    const auto objective = [&](const Field& x) {
        return 0.5 * sqdist(x, y) - tau * log_density_smoothed(p, x, 0.0);
    };
    const auto gradient = [&](const Field& x) {
        Field g = score_smoothed(p, x, 0.0);
        for (size_t i = 0; i < g.size(); ++i)
            g.data[i] = (x.data[i] - y.data[i]) - tau * g.data[i];
        return g;
    };

    std::vector<Field> starts;
    starts.push_back(y);
    for (const Field& mu : p.means) starts.push_back(mu);

    const double base_step = 0.5 * p.s2 / (p.s2 + tau);
    const long max_steps = 100000;

    Field best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (const Field& start : starts) {
        Field x = start;
        double fx = objective(x);
        long steps = 0;
        while (true) {
            const Field g = gradient(x);
            if (norm(g) < 1e-9) break;
            if (++steps > max_steps)
                throw ConvergenceError("map_oracle: gradient descent did not converge");
            double step = base_step;
            Field x_new = x;
            double f_new = fx;
            for (int halvings = 0; halvings < 200; ++halvings) {
                x_new = x;
                axpy(-step, g, x_new);
                f_new = objective(x_new);
                // non-strict: near the minimum the certified decrease is below
                // double resolution of the objective
                if (f_new <= fx) break;
                step *= 0.5;
            }
            if (f_new > fx) continue;  // no usable step at any scale; retry counts against the cap
            if (x_new.data == x.data) break;  // machine fixed point: no representable progress
            x = x_new;
            fx = f_new;
        }
        if (fx < best_obj) {
            best_obj = fx;
            best = x;
        }
    }
    return best;
}

inline double nearest_mode_distance(const GmmPrior& p, const Field& x) {
    p.check_shape(x, "nearest_mode_distance");
    double best = std::numeric_limits<double>::infinity();
    for (const Field& mu : p.means) best = std::min(best, std::sqrt(sqdist(x, mu)));
    return best;
}

// -- serialization ------------------------------------------------------------

inline nlohmann::json prior_to_json(const GmmPrior& p) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(p.dim()) * p.means.size());
    for (const Field& mu : p.means) flat.insert(flat.end(), mu.data.begin(), mu.data.end());
    return nlohmann::json{
        {"shape", {{"height", p.height}, {"width", p.width}, {"channels", p.channels}}},
        {"s2", p.s2},
        {"weights", p.weights},
        {"means", encode_f64_le(flat)}};
}

inline GmmPrior prior_from_json(const nlohmann::json& j) {
    const int h = j.at("shape").at("height").get<int>();
    const int w = j.at("shape").at("width").get<int>();
    const int c = j.at("shape").at("channels").get<int>();
    const double s2 = j.at("s2").get<double>();
    const std::vector<double> weights = j.at("weights").get<std::vector<double>>();
    const std::vector<double> flat = decode_f64_le(j.at("means").get<std::string>());
    const size_t d = static_cast<size_t>(h) * w * c;
    if (weights.empty() || flat.size() != d * weights.size())
        throw ParseError("prior_from_json: means payload size mismatch",
                         static_cast<long>(flat.size()));
    std::vector<Field> means;
    for (size_t jx = 0; jx < weights.size(); ++jx) {
        Field mu(h, w, c);
        std::copy(flat.begin() + jx * d, flat.begin() + (jx + 1) * d, mu.data.begin());
        means.push_back(std::move(mu));
    }
    return GmmPrior(std::move(means), weights, s2);
}

}  // namespace proximap

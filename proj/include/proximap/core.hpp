#pragma once

#include <vector>

#include "proximap/denoiser.hpp"
#include "proximap/errors.hpp"
#include "proximap/field.hpp"
#include "proximap/schedule.hpp"

namespace proximap {

/// Knobs of the iterative MAP-approximation denoiser. sigma_final is the one
/// actively tuned parameter; tau_mul and the step count stay at their fixed
/// defaults throughout the bench.
struct ProximapConfig {
    double tau_mul = 10.0;
    int steps = 8;             // K
    double sigma_final = 0.005;
    bool return_last_mmse = true;

    void validate(double sigma_y) const {
        if (tau_mul <= 1.0) throw DomainError("ProximapConfig: tau_mul must exceed 1");
        if (steps < 1) throw DomainError("ProximapConfig: steps must be >= 1");
        if (!(sigma_final > 0.0) || sigma_final >= sigma_y)
            throw DomainError("ProximapConfig: sigma_final must lie in (0, sigma_y)");
    }
};

/// Iterative MAP-approximation denoising of y with noise level sigma_y.
/// x_0 = y; each step mixes the current iterate, the data y and the denoiser
/// output with the schedule's coefficients, so the iterate's residual noise
/// matches the level the denoiser is queried at. Returns the final denoiser
/// output (noise-free) unless return_last_mmse is off, in which case the raw
/// x_K is returned. Performs exactly K denoiser calls.
inline Field proximap_denoise(const Field& y, double sigma_y, const DenoiserHandle& D,
                              const ProximapConfig& cfg = ProximapConfig{}) {
    if (sigma_y <= 0.0) throw DomainError("proximap_denoise: sigma_y must be positive");
    cfg.validate(sigma_y);

    // K = 1 never advances the schedule past sigma_0, so the output is the
    // plain posterior-mean estimate regardless of beta.
    if (cfg.steps == 1 && cfg.return_last_mmse) return D(y, sigma_y);

    const double tau = tau_from_multiplier(cfg.tau_mul, sigma_y);
    const double beta = solve_beta(sigma_y, tau, cfg.steps, cfg.sigma_final);
    const Schedule sched = build_schedule(sigma_y, tau, beta, cfg.steps);

    Field x = y;
    Field last_mmse;
    for (int k = 0; k < cfg.steps; ++k) {
        const double sigma_k = sched.sigma[k];
        const double gamma_k = sched.gamma[k];
        last_mmse = D(x, sigma_k);
        // coefficients sum to 1: (1 - gamma_k(1 + tau/sigma_k^2)) = 1 - beta
        const double c_prev = 1.0 - beta;
        const double c_mmse = tau * gamma_k / (sigma_k * sigma_k);
        Field next = lincomb(c_prev, x, gamma_k, y);
        axpy(c_mmse, last_mmse, next);
        x = std::move(next);
    }
    return cfg.return_last_mmse ? last_mmse : x;
}

/// Naive MAP-targeting iteration under the 1/sqrt(k) schedule; diagnostic
/// only. mmse_fn(x, sigma) must return E[X | X_sigma = x]. Returns the full
/// trace [x_0 .. x_K].
template <typename MmseFn>
std::vector<Field> naive_map_iterate(const Field& y, double sigma_y, double tau, int steps,
                                     MmseFn&& mmse_fn) {
    if (tau <= 0.0) throw DomainError("naive_map_iterate: tau must be positive");
    if (sigma_y < 0.0) throw DomainError("naive_map_iterate: sigma_y must be nonnegative");
    std::vector<Field> trace;
    trace.reserve(steps + 1);
    trace.push_back(y);
    Field x = y;
    for (int k = 0; k < steps; ++k) {
        const double sigma_k = std::sqrt(tau / (k + 1));
        const Field est = mmse_fn(x, sigma_k);
        x = lincomb(1.0 / (k + 2), y, static_cast<double>(k + 1) / (k + 2), est);
        trace.push_back(x);
    }
    return trace;
}

/// Exact residual-noise levels of the iterates for a single-Gaussian prior.
/// The denoiser is affine there, D(x, s) = a_s x + (1-a_s) mu with
/// a_s = s2/(s2 + s^2), so the stochastic component of every x_k stays a
/// multiple of y and its standard deviation can be tracked through the update
/// coefficients. Entry k is the exact std of x_k's noise; the schedule's
/// sigma_k is the treat-denoiser-output-as-noiseless approximation of it.
inline std::vector<double> residual_noise_oracle(const GmmPrior& prior,
                                                 const ProximapConfig& cfg, double sigma_y) {
    if (prior.components() != 1)
        throw DomainError("residual_noise_oracle: defined for single-component priors only");
    if (sigma_y <= 0.0) throw DomainError("residual_noise_oracle: sigma_y must be positive");
    cfg.validate(sigma_y);

    const double tau = tau_from_multiplier(cfg.tau_mul, sigma_y);
    const double beta = solve_beta(sigma_y, tau, cfg.steps, cfg.sigma_final);
    const Schedule sched = build_schedule(sigma_y, tau, beta, cfg.steps);

    std::vector<double> residual;
    residual.reserve(cfg.steps + 1);
    double alpha = 1.0;  // coefficient of y inside x_k
    residual.push_back(alpha * sigma_y);
    for (int k = 0; k < cfg.steps; ++k) {
        const double sigma_k = sched.sigma[k];
        const double gamma_k = sched.gamma[k];
        const double a_k = prior.s2 / (prior.s2 + sigma_k * sigma_k);
        const double c_prev = 1.0 - beta;
        const double c_mmse = tau * gamma_k / (sigma_k * sigma_k);
        alpha = c_prev * alpha + gamma_k + c_mmse * a_k * alpha;
        residual.push_back(alpha * sigma_y);
    }
    return residual;
}

}  // namespace proximap

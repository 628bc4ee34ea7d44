#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "proximap/errors.hpp"

namespace proximap {

/// Noise / step-size schedule of the iterative MAP approximation. sigma has
/// K+1 entries (sigma[0] = sigma_y), gamma has K. Each gamma_k is
/// beta / (1 + tau/sigma_k^2) and each sigma_{k+1} follows the residual-noise
/// recursion exactly.
struct Schedule {
    std::vector<double> sigma;
    std::vector<double> gamma;
    double tau = 0.0;
    double beta = 0.0;
    int steps = 0;
    double sigma_y = 0.0;
};

/// Outcome of the schedule dichotomy for a (sigma0, tau) pair: the recursion
/// either drains to zero or is pinned by the positive fixed points of
/// sigma^2 - sigma0*sigma + tau = 0.
struct LemmaReport {
    double tau = 0.0;
    double sigma0 = 0.0;
    bool converges_to_zero = false;
    std::vector<double> fixed_points;  // 0, 1 or 2 values, descending
};

/// tau = tau_mul * sigma_y^2 / 4; tau_mul > 1 keeps the recursion above the
/// fixed-point threshold so sigma_k -> 0.
inline double tau_from_multiplier(double tau_mul, double sigma_y) {
    if (sigma_y <= 0.0) throw DomainError("tau_from_multiplier: sigma_y must be positive");
    if (tau_mul <= 1.0)
        throw DomainError("tau_from_multiplier: tau_mul must exceed 1 (schedule would stall)");
    return tau_mul * sigma_y * sigma_y / 4.0;
}

/// One step of the recursion. Returns (sigma_next, gamma_k). The contraction
/// coefficient is written as (1 - beta) verbatim: it equals
/// 1 - gamma_k*(1 + tau/sigma_k^2), and using the closed form keeps the noise
/// update and the step-size rule bit-identical.
inline std::pair<double, double> sigma_step(double sigma_k, double sigma_y, double tau,
                                            double beta) {
    if (sigma_k <= 0.0) throw DomainError("sigma_step: sigma_k must be positive");
    if (sigma_y <= 0.0 || tau <= 0.0) throw DomainError("sigma_step: inputs must be positive");
    if (beta <= 0.0 || beta >= 1.0) throw DomainError("sigma_step: beta must be in (0,1)");
    const double smooth = 1.0 + tau / (sigma_k * sigma_k);
    const double gamma_k = beta / smooth;
    const double sigma_next = (1.0 - beta) * sigma_k + gamma_k * sigma_y;
    return {sigma_next, gamma_k};
}

inline Schedule build_schedule(double sigma_y, double tau, double beta, int steps) {
    if (steps < 1) throw DomainError("build_schedule: need at least one step");
    Schedule s;
    s.tau = tau;
    s.beta = beta;
    s.steps = steps;
    s.sigma_y = sigma_y;
    s.sigma.reserve(steps + 1);
    s.gamma.reserve(steps);
    s.sigma.push_back(sigma_y);
    for (int k = 0; k < steps; ++k) {
        const auto [next, g] = sigma_step(s.sigma.back(), sigma_y, tau, beta);
        s.sigma.push_back(next);
        s.gamma.push_back(g);
    }
    return s;
}

namespace detail {
// Probing variant used by the bisection: at beta near 1 the iterate can
// underflow to exactly 0, which is the absorbing state of the recursion.
inline double final_sigma(double sigma_y, double tau, double beta, int steps) {
    double s = sigma_y;
    for (int k = 0; k < steps; ++k) {
        if (s == 0.0) return 0.0;
        s = sigma_step(s, sigma_y, tau, beta).first;
    }
    return s;
}
}  // namespace detail

/// Find beta in (0,1) so the schedule ends at sigma_final_target. Bisection;
/// sigma_K(beta) is strictly decreasing in beta when tau > sigma_y^2/4, and a
/// 16-point grid check asserts that rather than assuming it.
inline double solve_beta(double sigma_y, double tau, int steps, double sigma_final_target) {
    if (sigma_y <= 0.0) throw DomainError("solve_beta: sigma_y must be positive");
    if (tau <= sigma_y * sigma_y / 4.0)
        throw DomainError("solve_beta: tau must exceed sigma_y^2/4");
    if (steps < 1) throw DomainError("solve_beta: need at least one step");
    if (sigma_final_target >= sigma_y)
        throw DomainError("solve_beta: target must be below sigma_y");
    if (sigma_final_target <= 0.0) throw DomainError("solve_beta: target must be positive");

    double prev = sigma_y;
    for (int i = 1; i <= 16; ++i) {
        const double b = static_cast<double>(i) / 17.0;
        const double end = detail::final_sigma(sigma_y, tau, b, steps);
        if (end > prev + 1e-12)
            throw Error("solve_beta: sigma_K is not decreasing in beta");
        prev = end;
    }

    const double hi = 1.0 - 1e-12;
    if (sigma_final_target < detail::final_sigma(sigma_y, tau, hi, steps))
        throw InfeasibleTarget("solve_beta: target " + std::to_string(sigma_final_target) +
                               " below the reachable minimum for K=" + std::to_string(steps));

    double lo = 1e-15, up = hi;
    double mid = 0.5 * (lo + up);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + up);
        const double end = detail::final_sigma(sigma_y, tau, mid, steps);
        if (std::abs(end - sigma_final_target) <= 1e-10) return mid;
        if (end > sigma_final_target)
            lo = mid;
        else
            up = mid;
    }
    return mid;
}

inline LemmaReport lemma_report(double sigma0, double tau) {
    if (sigma0 <= 0.0 || tau <= 0.0) throw DomainError("lemma_report: inputs must be positive");
    LemmaReport rep;
    rep.tau = tau;
    rep.sigma0 = sigma0;
    const double disc = sigma0 * sigma0 - 4.0 * tau;
    rep.converges_to_zero = tau > sigma0 * sigma0 / 4.0;
    if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        rep.fixed_points.push_back((sigma0 + root) / 2.0);
        if (disc > 0.0) rep.fixed_points.push_back((sigma0 - root) / 2.0);
    }
    return rep;
}

/// Diagnostic schedule of the naive MAP-targeting iteration:
/// sigma_k = sqrt(tau/(k+1)), gamma_k = 1/(k+2), for k = 0..K-1.
inline std::pair<std::vector<double>, std::vector<double>> naive_map_schedule(double tau, int steps) {
    if (tau <= 0.0) throw DomainError("naive_map_schedule: tau must be positive");
    if (steps < 1) throw DomainError("naive_map_schedule: need at least one step");
    std::vector<double> sigmas(steps), gammas(steps);
    for (int k = 0; k < steps; ++k) {
        sigmas[k] = std::sqrt(tau / (k + 1));
        gammas[k] = 1.0 / (k + 2);
    }
    return {sigmas, gammas};
}

}  // namespace proximap

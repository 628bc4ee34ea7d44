#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "proximap/errors.hpp"
#include "proximap/rng.hpp"
#include "proximap/solvers.hpp"

namespace proximap {

/// Objective pair of the two-axis search: pixel accuracy and the structural
/// sharpness proxy, both maximized. Raw MSE kept for reporting.
struct MetricPair {
    double psnr = 0.0;
    double sharpness = 0.0;
    double mse = 0.0;
};

/// a dominates b when it is at least as good on both objectives and strictly
/// better on one.
inline bool dominates(const MetricPair& a, const MetricPair& b) {
    return a.psnr >= b.psnr && a.sharpness >= b.sharpness &&
           (a.psnr > b.psnr || a.sharpness > b.sharpness);
}

struct TuneCandidate {
    SolverConfig config;
    MetricPair metrics;
    bool viable = false;
    std::string failure;
};

struct ParetoFront {
    std::vector<TuneCandidate> members;
};

struct TuneBudget {
    int n_random = 30;
    int tune_set_size = 6;
    int test_set_size = 14;
    uint64_t seed = 0;
};

/// One searchable knob: closed range plus the sampling law (log for
/// scale-like knobs, uniform otherwise).
struct TuneRange {
    std::string knob;
    double lo = 0.0;
    double hi = 1.0;
    bool log_scale = true;
};

inline void apply_knob(SolverConfig& cfg, const std::string& knob, double value) {
    if (knob == "dpir.sigma_max")
        cfg.dpir.sigma_max = value;
    else if (knob == "dpir.gamma")
        cfg.dpir.gamma = value;
    else if (knob == "diffpir.lambda")
        cfg.diffpir.lambda = value;
    else if (knob == "diffpir.zeta")
        cfg.diffpir.zeta = value;
    else if (knob == "daps.langevin_lr")
        cfg.daps.langevin_lr = value;
    else if (knob == "proximap.sigma_final")
        cfg.proximap.sigma_final = value;
    else
        throw DomainError("unknown tuning knob: " + knob);
}

/// Search space per algorithm; the inner-schedule end level joins whenever the
/// denoising slot runs the inner iteration.
inline std::vector<TuneRange> default_ranges(Algorithm algo, const DenoiseMode& mode) {
    std::vector<TuneRange> r;
    switch (algo) {
        case Algorithm::dpir:
            r.push_back({"dpir.sigma_max", 0.001, 100.0, true});
            r.push_back({"dpir.gamma", 0.1, 40.0, true});
            break;
        case Algorithm::diffpir:
            r.push_back({"diffpir.lambda", 0.1, 30.0, true});
            r.push_back({"diffpir.zeta", 0.0, 1.0, false});
            break;
        case Algorithm::daps:
        case Algorithm::daps_proximap:
            r.push_back({"daps.langevin_lr", 1e-6, 2e-4, true});
            break;
        default:
            throw DomainError("no tuning ranges for " + algorithm_name(algo));
    }
    const bool inner = mode.kind != DenoiseMode::Kind::mmse || algo == Algorithm::daps_proximap;
    if (inner) r.push_back({"proximap.sigma_final", 0.001, 0.2, true});
    return r;
}

/// Non-dominated filter over the viable candidates.
inline ParetoFront pareto_filter(const std::vector<TuneCandidate>& all) {
    ParetoFront front;
    for (const auto& c : all) {
        if (!c.viable) continue;
        bool dominated = false;
        for (const auto& other : all) {
            if (!other.viable || &other == &c) continue;
            if (dominates(other.metrics, c.metrics)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.members.push_back(c);
    }
    return front;
}

/// Pareto member with the best sharpness proxy; ties broken by higher PSNR,
/// then by config hash.
inline const TuneCandidate& pareto_select_sharpest(const ParetoFront& front) {
    if (front.members.empty()) throw DomainError("pareto_select_sharpest: empty front");
    const TuneCandidate* best = &front.members[0];
    for (const auto& c : front.members) {
        if (c.metrics.sharpness > best->metrics.sharpness ||
            (c.metrics.sharpness == best->metrics.sharpness &&
             (c.metrics.psnr > best->metrics.psnr ||
              (c.metrics.psnr == best->metrics.psnr && c.config.hash() < best->config.hash()))))
            best = &c;
    }
    return *best;
}

/// Seeded random search: sample each knob (log-uniform or uniform), evaluate,
/// keep the non-dominated set. evaluate() returns the mean metrics over the
/// tuning set and may throw; a throwing candidate is recorded as non-viable.
/// Every candidate failing yields NoViableConfig.
inline ParetoFront random_search_tune(
    const std::vector<TuneRange>& ranges, const TuneBudget& budget, const SolverConfig& base,
    const std::function<MetricPair(const SolverConfig&)>& evaluate,
    std::vector<TuneCandidate>* all_out = nullptr) {
    if (ranges.empty()) throw DomainError("random_search_tune: empty search space");
    if (budget.n_random < 1) throw DomainError("random_search_tune: budget must be >= 1");

    Rng rng(budget.seed);
    std::vector<TuneCandidate> all(budget.n_random);
    for (int i = 0; i < budget.n_random; ++i) {
        all[i].config = base;
        for (const auto& r : ranges)
            apply_knob(all[i].config, r.knob,
                       r.log_scale ? rng.log_uniform(r.lo, r.hi) : rng.uniform(r.lo, r.hi));
    }
    // evaluations are independent; the caller may parallelize inside evaluate
    int viable = 0;
    for (auto& cand : all) {
        try {
            cand.metrics = evaluate(cand.config);
            cand.viable = true;
            ++viable;
        } catch (const Error& e) {
            cand.failure = e.what();
        }
    }
    if (viable == 0)
        throw NoViableConfig("random_search_tune: all " + std::to_string(budget.n_random) +
                             " candidates failed");
    if (all_out) *all_out = all;
    return pareto_filter(all);
}

}  // namespace proximap

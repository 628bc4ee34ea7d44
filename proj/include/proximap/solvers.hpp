#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "proximap/core.hpp"
#include "proximap/degradations.hpp"
#include "proximap/denoiser.hpp"
#include "proximap/errors.hpp"
#include "proximap/field.hpp"
#include "proximap/rng.hpp"
#include "proximap/schedule.hpp"
#include "proximap/serialize.hpp"

namespace proximap {

enum class Algorithm { dpir, diffpir, daps, daps_proximap, cond_ddim, cond_indi, cond_fm };

inline std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::dpir: return "dpir";
        case Algorithm::diffpir: return "diffpir";
        case Algorithm::daps: return "daps";
        case Algorithm::daps_proximap: return "daps_proximap";
        case Algorithm::cond_ddim: return "cond_ddim";
        case Algorithm::cond_indi: return "cond_indi";
        case Algorithm::cond_fm: return "cond_fm";
    }
    return "?";
}

inline Algorithm algorithm_from_name(const std::string& s) {
    if (s == "dpir") return Algorithm::dpir;
    if (s == "diffpir") return Algorithm::diffpir;
    if (s == "daps") return Algorithm::daps;
    if (s == "daps_proximap") return Algorithm::daps_proximap;
    if (s == "cond_ddim") return Algorithm::cond_ddim;
    if (s == "cond_indi") return Algorithm::cond_indi;
    if (s == "cond_fm") return Algorithm::cond_fm;
    throw DomainError("unknown algorithm: " + s);
}

/// How the solver's denoising slot is filled: plain posterior-mean calls, a
/// full inner MAP-approximation run, or the hybrid that switches to the
/// latter from outer step switch_step on.
struct DenoiseMode {
    enum class Kind { mmse, proximap, hybrid } kind = Kind::mmse;
    int switch_step = 19;

    static DenoiseMode parse(const std::string& s) {
        DenoiseMode m;
        if (s == "mmse") {
            m.kind = Kind::mmse;
        } else if (s == "proximap") {
            m.kind = Kind::proximap;
        } else if (s.rfind("hybrid:", 0) == 0) {
            m.kind = Kind::hybrid;
            m.switch_step = std::stoi(s.substr(7));
        } else {
            throw DomainError("unknown denoise mode: " + s + " (mmse|proximap|hybrid:N)");
        }
        return m;
    }
    std::string str() const {
        switch (kind) {
            case Kind::mmse: return "mmse";
            case Kind::proximap: return "proximap";
            case Kind::hybrid: return "hybrid:" + std::to_string(switch_step);
        }
        return "?";
    }
};

struct DpirKnobs {
    double sigma_max = 1.0;
    double gamma = 5.0;
};

struct DiffpirKnobs {
    double lambda = 7.0;
    double zeta = 0.3;
};

struct DapsKnobs {
    double langevin_lr = 1e-5;
    int langevin_steps = 50;
    int inner_steps = 6;
    double sigma_max = 10.0;
    double sigma_min = 0.01;
    double rho = 7.0;
    double outer_sigma_final = 0.1;  // fixed target of the recursion-driven outer grid
};

struct SolverConfig {
    Algorithm algorithm = Algorithm::dpir;
    int outer_iters = 20;  // daps convention: 200
    DenoiseMode mode;
    ProximapConfig proximap;
    DpirKnobs dpir;
    DiffpirKnobs diffpir;
    DapsKnobs daps;
    uint64_t seed = 0;

    uint64_t hash() const {
        std::ostringstream os;
        os << algorithm_name(algorithm) << '|' << outer_iters << '|' << mode.str() << '|'
           << proximap.tau_mul << ',' << proximap.steps << ',' << proximap.sigma_final << '|'
           << dpir.sigma_max << ',' << dpir.gamma << '|' << diffpir.lambda << ',' << diffpir.zeta
           << '|' << daps.langevin_lr << ',' << daps.langevin_steps << ',' << daps.inner_steps
           << ',' << daps.sigma_max << ',' << daps.sigma_min << ',' << daps.outer_sigma_final
           << '|' << seed;
        return fnv1a(os.str());
    }
};

struct TraceRow {
    int step = 0;
    double sigma = 0.0;
    double fidelity = 0.0;
    long long nfe_so_far = 0;
};

/// One solver run: schedule targets, exact NFE, the reconstruction, a
/// per-iteration trace, and slots for metrics the bench fills in later.
struct RunRecord {
    uint64_t config_hash = 0;
    std::vector<double> sigma_targets;
    long long nfe = 0;
    Field final;
    std::vector<TraceRow> trace;
    double wall_ms = 0.0;
    double psnr = 0.0, ssim = 0.0, mse = 0.0, nearest_mode = 0.0;
};

namespace detail {

inline void check_finite_iterate(const Field& x, int k, const char* where) {
    if (!all_finite(x))
        throw DivergenceError(std::string(where) + ": non-finite iterate", k);
}

inline void validate_mode(const DenoiseMode& m, int outer_iters) {
    if (m.kind == DenoiseMode::Kind::hybrid &&
        (m.switch_step < 0 || m.switch_step > outer_iters))
        throw DomainError("hybrid switch step must lie in [0, K]");
}

// Denoising slot shared by the proximal-splitting solvers. sigma_ref is the
// outer loop's final query level; the inner schedule target scales with
// sigma_role so it stays feasible at every outer level.
inline Field denoise_slot(const DenoiserHandle& D, const DenoiseMode& mode,
                          const ProximapConfig& pm, int outer_k, const Field& x,
                          double sigma_role, double sigma_ref) {
    const bool inner = mode.kind == DenoiseMode::Kind::proximap ||
                       (mode.kind == DenoiseMode::Kind::hybrid && outer_k >= mode.switch_step);
    if (!inner) return D(x, sigma_role);
    ProximapConfig cfg = pm;
    cfg.sigma_final = pm.sigma_final * sigma_role / sigma_ref;
    return proximap_denoise(x, sigma_role, D, cfg);
}

inline std::vector<double> log_sigma_grid(double sigma_from, double sigma_to, int n) {
    std::vector<double> grid(n);
    if (n == 1) {
        grid[0] = sigma_to;
        return grid;
    }
    const double la = std::log(sigma_from), lb = std::log(sigma_to);
    for (int k = 0; k < n; ++k)
        grid[k] = std::exp(la + (lb - la) * static_cast<double>(k) / (n - 1));
    return grid;
}

}  // namespace detail

/// Power-interpolated annealing grid (rho-warped between sigma_max and
/// sigma_min, n values).
inline std::vector<double> annealed_sigma_grid(double sigma_max, double sigma_min, int n,
                                               double rho = 7.0) {
    if (n < 1) throw DomainError("annealed_sigma_grid: need at least one level");
    if (sigma_max <= 0.0 || sigma_min <= 0.0 || sigma_min > sigma_max)
        throw DomainError("annealed_sigma_grid: need 0 < sigma_min <= sigma_max");
    std::vector<double> grid(n);
    if (n == 1) {
        grid[0] = sigma_max;
        return grid;
    }
    const double a = std::pow(sigma_max, 1.0 / rho), b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < n; ++i)
        grid[i] = std::pow(a + (b - a) * static_cast<double>(i) / (n - 1), rho);
    return grid;
}

/// Cumulative-product noise levels of the standard linear variance schedule
/// (beta in [1e-4, 0.02] over 1000 steps).
inline std::vector<double> ddpm_alphabar(int total_steps = 1000) {
    std::vector<double> abar(total_steps);
    double acc = 1.0;
    for (int t = 0; t < total_steps; ++t) {
        const double beta =
            1e-4 + (0.02 - 1e-4) * static_cast<double>(t) / (total_steps - 1);
        acc *= 1.0 - beta;
        abar[t] = acc;
    }
    return abar;
}

// -- half-quadratic splitting loop ---------------------------------------------

inline RunRecord run_dpir(const Field& y, const DataFidelity& fid, const DenoiserHandle& D,
                          const SolverConfig& cfg) {
    if (!fid.op.has_prox())
        throw UnsupportedError("dpir: no proximal path for " + degradation_name(fid.op.variant));
    const double sigma_y = fid.op.sigma_y;
    if (sigma_y <= 0.0 && fid.op.variant != Degradation::inpaint)
        throw DomainError("dpir: sigma_y = 0 is supported on the inpainting path only");
    const int K = cfg.outer_iters;
    if (K < 1) throw DomainError("dpir: need at least one iteration");
    detail::validate_mode(cfg.mode, K);
    const double sigma_end = sigma_y > 0.0 ? sigma_y : 1e-3;

    RunRecord rec;
    rec.config_hash = cfg.hash();
    rec.sigma_targets = detail::log_sigma_grid(cfg.dpir.sigma_max, sigma_end, K);

    const long long nfe0 = *D.calls;
    Field x = adjoint(fid.op, y);
    for (int k = 0; k < K; ++k) {
        const double sigma_k = rec.sigma_targets[k];
        const double gamma_k = cfg.dpir.gamma * (sigma_k / sigma_end) * (sigma_k / sigma_end);
        const Field z = sigma_y > 0.0 ? prox_data(fid, x, gamma_k) : prox_data(fid, x, 1.0);
        x = detail::denoise_slot(D, cfg.mode, cfg.proximap, k, z, sigma_k, sigma_end);
        detail::check_finite_iterate(x, k, "dpir");
        rec.trace.push_back({k, sigma_k, fidelity_value(fid, x), *D.calls - nfe0});
    }
    rec.nfe = *D.calls - nfe0;
    rec.final = std::move(x);
    return rec;
}

// -- diffusion-style splitting loop ----------------------------------------------

/// One inner update exposed for the affine-consistency oracle: consumes the
/// noise draw so the test can control it.
inline Field diffpir_step(const Field& x_k, double abar_k, const DataFidelity& fid,
                          const Field& x0_hat, double zeta, double rho_k, const Field& eps,
                          Field* x0_prox_out = nullptr) {
    const double sa = std::sqrt(abar_k);
    const double sn = std::sqrt(1.0 - abar_k);
    const Field x_hat =
        fid.op.sigma_y > 0.0 ? prox_data(fid, x0_hat, 1.0 / rho_k) : prox_data(fid, x0_hat, 1.0);
    if (x0_prox_out) *x0_prox_out = x_hat;
    Field eps_hat = lincomb(1.0 / sn, x_k, -sa / sn, x0_hat);
    Field noise = lincomb(std::sqrt(1.0 - zeta), eps_hat, std::sqrt(zeta), eps);
    return lincomb(sa, x_hat, sn, noise);
}

inline RunRecord run_diffpir(const Field& y, const DataFidelity& fid, const DenoiserHandle& D,
                             const SolverConfig& cfg) {
    if (!fid.op.has_prox())
        throw UnsupportedError("diffpir: no proximal path for " +
                               degradation_name(fid.op.variant));
    if (cfg.diffpir.zeta < 0.0 || cfg.diffpir.zeta > 1.0)
        throw DomainError("diffpir: zeta must lie in [0,1]");
    const double sigma_y = fid.op.sigma_y;
    if (sigma_y <= 0.0 && fid.op.variant != Degradation::inpaint)
        throw DomainError("diffpir: sigma_y = 0 is supported on the inpainting path only");
    const int K = cfg.outer_iters;
    if (K < 1) throw DomainError("diffpir: need at least one iteration");
    detail::validate_mode(cfg.mode, K);

    // subsample the cumulative-product grid, noisiest first
    const std::vector<double> abar_full = ddpm_alphabar();
    const int T = static_cast<int>(abar_full.size());
    std::vector<double> abar(K);
    for (int k = 0; k < K; ++k) {
        const int t = K == 1 ? 0
                             : static_cast<int>(std::lround(
                                   static_cast<double>(T - 1) * (K - 1 - k) / (K - 1)));
        abar[k] = abar_full[t];
    }

    RunRecord rec;
    rec.config_hash = cfg.hash();
    for (int k = 0; k < K; ++k)
        rec.sigma_targets.push_back(std::sqrt(1.0 - abar[k]) / std::sqrt(abar[k]));
    const double sigma_ref = rec.sigma_targets.back();

    Rng rng(cfg.seed);
    const long long nfe0 = *D.calls;
    Field x = adjoint(fid.op, y);
    {
        const double sa = std::sqrt(abar[0]);
        const double sn = std::sqrt(1.0 - abar[0]);
        x = lincomb(sa, x, sn, gaussian_like(rng, x, 1.0));
    }

    Field x0_hat;
    for (int k = 0; k < K; ++k) {
        const double sa = std::sqrt(abar[k]);
        const double sigma_q = rec.sigma_targets[k];
        const double rho_k =
            cfg.diffpir.lambda * sigma_y * sigma_y * abar[k] / (1.0 - abar[k]);
        x0_hat = detail::denoise_slot(D, cfg.mode, cfg.proximap, k, (1.0 / sa) * x, sigma_q,
                                      sigma_ref);
        const Field eps = gaussian_like(rng, x, 1.0);
        x = diffpir_step(x, abar[k], fid, x0_hat, cfg.diffpir.zeta, rho_k, eps);
        detail::check_finite_iterate(x, k, "diffpir");
        rec.trace.push_back({k, sigma_q, fidelity_value(fid, x0_hat), *D.calls - nfe0});
    }
    rec.nfe = *D.calls - nfe0;
    rec.final = std::move(x0_hat);  // last inner-denoiser output, noise-free
    return rec;
}

// -- annealed Langevin loop -------------------------------------------------------

namespace detail {

// Euler probability-flow anneal from sigma_start to (almost) zero; exactly
// n_steps denoiser calls, final step lands on the denoised estimate.
inline Field pf_ode_denoise(const Field& x0, double sigma_start, const DenoiserHandle& D,
                            int n_steps) {
    if (n_steps < 1) throw DomainError("pf_ode_denoise: need at least one step");
    const double inner_min = std::min(0.002, 0.5 * sigma_start);
    std::vector<double> t = n_steps == 1 ? std::vector<double>{sigma_start}
                                         : annealed_sigma_grid(sigma_start, inner_min, n_steps);
    t.push_back(0.0);
    Field x = x0;
    for (int i = 0; i < n_steps; ++i) {
        const Field den = D(x, t[i]);
        const double ratio = t[i + 1] / t[i];
        x = lincomb(ratio, x, 1.0 - ratio, den);
    }
    return x;
}

}  // namespace detail

inline RunRecord run_daps_impl(const Field& y, const DataFidelity& fid, const DenoiserHandle& D,
                               const SolverConfig& cfg, bool proximap_inner) {
    if (fid.op.sigma_y <= 0.0)
        throw DomainError("daps: needs sigma_y > 0 (gradient-based fidelity)");
    const int K = cfg.outer_iters;
    if (K < 1) throw DomainError("daps: need at least one iteration");
    detail::validate_mode(cfg.mode, K);
    const DapsKnobs& knobs = cfg.daps;

    // outer grid: power-interpolated for the baseline, recursion-driven with a
    // fixed end level for the inner-MAP variant
    std::vector<double> grid;
    if (proximap_inner) {
        const double tau = tau_from_multiplier(cfg.proximap.tau_mul, knobs.sigma_max);
        const double beta = solve_beta(knobs.sigma_max, tau, K, knobs.outer_sigma_final);
        grid = build_schedule(knobs.sigma_max, tau, beta, K).sigma;
    } else {
        grid = annealed_sigma_grid(knobs.sigma_max, knobs.sigma_min, K + 1, knobs.rho);
    }

    RunRecord rec;
    rec.config_hash = cfg.hash();
    rec.sigma_targets = grid;
    const double sigma_ref = grid.back();

    Rng rng(cfg.seed);
    const long long nfe0 = *D.calls;
    Field x(y.height, y.width, y.channels, 0.5);
    x += gaussian_like(rng, x, knobs.sigma_max);

    Field z;
    for (int k = 0; k < K; ++k) {
        const double sigma_k = grid[k];
        Field anchor;
        if (proximap_inner) {
            ProximapConfig inner = cfg.proximap;
            inner.steps = knobs.inner_steps;
            inner.sigma_final = cfg.proximap.sigma_final * sigma_k / sigma_ref;
            anchor = proximap_denoise(x, sigma_k, D, inner);
        } else {
            anchor = detail::pf_ode_denoise(x, sigma_k, D, knobs.inner_steps);
        }
        detail::check_finite_iterate(anchor, k, "daps inner");

        const double gamma_k =
            knobs.langevin_lr * (1.0 + (static_cast<double>(k) / K) * (0.01 - 1.0));
        z = anchor;
        for (int j = 0; j < knobs.langevin_steps; ++j) {
            Field drift = grad_data(fid, z);
            axpy(1.0 / (sigma_k * sigma_k), z - anchor, drift);
            axpy(-gamma_k, drift, z);
            axpy(std::sqrt(2.0 * gamma_k), gaussian_like(rng, z, 1.0), z);
        }
        detail::check_finite_iterate(z, k, "daps langevin");
        rec.trace.push_back({k, sigma_k, fidelity_value(fid, z), *D.calls - nfe0});

        if (k + 1 < K)
            x = z + gaussian_like(rng, z, grid[k + 1]);
        else
            x = z;
    }
    rec.nfe = *D.calls - nfe0;
    rec.final = std::move(z);
    return rec;
}

inline RunRecord run_daps(const Field& y, const DataFidelity& fid, const DenoiserHandle& D,
                          const SolverConfig& cfg) {
    return run_daps_impl(y, fid, D, cfg, false);
}

inline RunRecord run_daps_proximap(const Field& y, const DataFidelity& fid,
                                   const DenoiserHandle& D, const SolverConfig& cfg) {
    return run_daps_impl(y, fid, D, cfg, true);
}

// -- conditional samplers -----------------------------------------------------------

enum class ConditionalKind { ddim, indi, fm };

/// Denoiser-driven annealing from sigma_y down a log grid; the three update
/// rules are variance-exploding concretizations that all collapse to the
/// posterior-mean estimate at steps = 1. Returns the final denoised estimate.
inline Field conditional_sampler(const Field& y, double sigma_y, const DenoiserHandle& D,
                                 ConditionalKind kind, int steps) {
    if (steps < 1) throw DomainError("conditional_sampler: steps must be >= 1");
    if (sigma_y <= 0.0) throw DomainError("conditional_sampler: sigma_y must be positive");
    const double sigma_min = std::min(1e-3, 0.5 * sigma_y);
    const std::vector<double> grid =
        steps == 1 ? std::vector<double>{sigma_y} : detail::log_sigma_grid(sigma_y, sigma_min, steps);

    Field x = y;
    Field den;
    for (int k = 0; k < steps; ++k) {
        den = D(x, grid[k]);
        if (k + 1 == steps) break;
        switch (kind) {
            case ConditionalKind::ddim: {
                const double r = grid[k + 1] / grid[k];
                Field nx = den;
                for (size_t i = 0; i < nx.size(); ++i)
                    nx.data[i] = den.data[i] + r * (x.data[i] - den.data[i]);
                x = std::move(nx);
                break;
            }
            case ConditionalKind::indi: {
                const double r = grid[k + 1] / grid[k];
                x = lincomb(r, x, 1.0 - r, den);
                break;
            }
            case ConditionalKind::fm: {
                const double t_cur = grid[k] / (grid[k] + 1.0);
                const double t_next = grid[k + 1] / (grid[k + 1] + 1.0);
                // velocity (x - den)/t_cur, one Euler step
                x = lincomb(1.0 + (t_next - t_cur) / t_cur, x, -(t_next - t_cur) / t_cur, den);
                break;
            }
        }
    }
    return den;
}

inline ConditionalKind conditional_kind_of(Algorithm a) {
    switch (a) {
        case Algorithm::cond_ddim: return ConditionalKind::ddim;
        case Algorithm::cond_indi: return ConditionalKind::indi;
        case Algorithm::cond_fm: return ConditionalKind::fm;
        default: throw DomainError("not a conditional sampler");
    }
}

}  // namespace proximap

#include <catch_amalgamated.hpp>

#include <cmath>

#include "proximap/metrics.hpp"
#include "proximap/solvers.hpp"
#include "proximap/worlds.hpp"

#include "helpers.hpp"

using namespace proximap;
using testutil::level_prior;
using testutil::random_field;

namespace {

DataFidelity blur_fidelity(const Field& truth, double sigma_y, uint64_t noise_seed,
                           int ksize = 5, double kstd = 1.0) {
    const DegradationOp op =
        DegradationOp::blur(Degradation::gaussian_blur, make_gaussian_kernel(ksize, kstd), sigma_y);
    Rng rng(noise_seed);
    Field y = apply(op, truth);
    y += gaussian_like(rng, y, sigma_y);
    return DataFidelity{op, std::move(y)};
}

}  // namespace

TEST_CASE("dpir sigma schedule is log-spaced", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.5}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.5), 0.01, 7);
    SolverConfig cfg;
    cfg.outer_iters = 3;
    cfg.dpir.sigma_max = 1.0;
    const RunRecord rec = run_dpir(fid.y, fid, D, cfg);
    REQUIRE(rec.sigma_targets.size() == 3);
    CHECK(rec.sigma_targets[0] == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(rec.sigma_targets[1] == Catch::Approx(0.1).epsilon(1e-12));
    CHECK(rec.sigma_targets[2] == Catch::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("mmse mode and one-step inner mode produce identical records", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.35, 0.65}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    Rng rng(8);
    const auto [truth, idx] = sample_world_image(p, rng);
    (void)idx;
    const DataFidelity fid = blur_fidelity(truth, 0.05, 9);

    for (int variant = 0; variant < 2; ++variant) {
        SolverConfig a, b;
        a.outer_iters = b.outer_iters = 6;
        a.mode = DenoiseMode::parse("mmse");
        b.mode = DenoiseMode::parse("proximap");
        b.proximap.steps = 1;
        b.proximap.sigma_final = 0.001;
        a.seed = b.seed = 33;
        RunRecord ra, rb;
        if (variant == 0) {
            ra = run_dpir(fid.y, fid, D, a);
            rb = run_dpir(fid.y, fid, D, b);
        } else {
            ra = run_diffpir(fid.y, fid, D, a);
            rb = run_diffpir(fid.y, fid, D, b);
        }
        CHECK(ra.nfe == rb.nfe);
        REQUIRE(ra.final.size() == rb.final.size());
        for (size_t i = 0; i < ra.final.size(); ++i)
            CHECK(ra.final.data[i] == rb.final.data[i]);
        for (size_t k = 0; k < ra.trace.size(); ++k)
            CHECK(ra.trace[k].fidelity == rb.trace[k].fidelity);
    }
}

TEST_CASE("dpir beats the adjoint baseline by 3 dB on deblurring", "[solvers]") {
    WorldConfig wc;
    wc.height = wc.width = 16;
    wc.modes = 4;
    wc.s2 = 1e-6;
    const GmmPrior world = build_world(wc, 100);
    const DenoiserHandle D = make_gmm_denoiser(world);
    int improved = 0;
    double gain_sum = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        const auto [truth, idx] = sample_world_image(world, rng);
        (void)idx;
        const DegradationOp op = DegradationOp::blur(Degradation::gaussian_blur,
                                                     make_gaussian_kernel(5, 1.0), 0.05);
        Field y = apply(op, truth);
        y += gaussian_like(rng, y, 0.05);
        const DataFidelity fid{op, y};
        SolverConfig cfg;
        cfg.outer_iters = 10;
        cfg.dpir.sigma_max = 0.5;
        cfg.dpir.gamma = 3.0;
        cfg.seed = seed;
        const RunRecord rec = run_dpir(fid.y, fid, D, cfg);
        const double base = psnr(adjoint(op, y), truth);
        const double got = psnr(rec.final, truth);
        gain_sum += got - base;
        if (got > base + 3.0) ++improved;
    }
    INFO("mean gain " << gain_sum / 20.0 << " dB");
    CHECK(improved == 20);
}

TEST_CASE("diffpir with zeta 0 is fully deterministic", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.3, 0.7}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.7), 0.05, 21);
    SolverConfig cfg;
    cfg.outer_iters = 5;
    cfg.diffpir.zeta = 0.0;
    cfg.seed = 5;
    const RunRecord a = run_diffpir(fid.y, fid, D, cfg);
    const RunRecord b = run_diffpir(fid.y, fid, D, cfg);
    for (size_t i = 0; i < a.final.size(); ++i) CHECK(a.final.data[i] == b.final.data[i]);
    cfg.diffpir.zeta = 1.5;
    CHECK_THROWS_AS(run_diffpir(fid.y, fid, D, cfg), DomainError);
}

TEST_CASE("ddpm cumulative product matches direct evaluation", "[solvers]") {
    const std::vector<double> abar = ddpm_alphabar();
    REQUIRE(abar.size() == 1000);
    // direct product at the first subsampled index of a K=20 run (t = 999)
    double acc = 1.0;
    for (int t = 0; t < 1000; ++t)
        acc *= 1.0 - (1e-4 + (0.02 - 1e-4) * static_cast<double>(t) / 999.0);
    CHECK(abar.back() == Catch::Approx(acc).epsilon(1e-12));
    CHECK(abar[0] == Catch::Approx(1.0 - 1e-4).epsilon(1e-15));
    for (size_t t = 1; t < abar.size(); ++t) CHECK(abar[t] < abar[t - 1]);
}

TEST_CASE("one diffpir step is affine in (x, y, eps) for the affine setup", "[solvers]") {
    // identity operator (delta kernel) + single-Gaussian prior: probing the
    // step at unit perturbations recovers the affine coefficients exactly
    const double s2 = 0.01, mu = 0.4, sigma_y = 0.1, abar_k = 0.9, zeta = 0.3, lambda = 5.0;
    const GmmPrior p = level_prior(4, 4, 1, {mu}, s2);
    Field delta(3, 3, 1);
    delta.at(1, 1) = 1.0;
    const DegradationOp op = DegradationOp::blur(Degradation::gaussian_blur, delta, sigma_y);
    const double rho_k = lambda * sigma_y * sigma_y * abar_k / (1.0 - abar_k);
    const double sigma_q = std::sqrt(1.0 - abar_k) / std::sqrt(abar_k);

    const auto step = [&](const Field& x, const Field& y, const Field& eps) {
        const DataFidelity fid{op, y};
        const Field x0_hat = mmse_denoise(p, (1.0 / std::sqrt(abar_k)) * x, sigma_q);
        return diffpir_step(x, abar_k, fid, x0_hat, zeta, rho_k, eps);
    };

    // independent symbolic composition: denoiser a = s2/(s2+sigma_q^2);
    // prox shrink c = lam/(lam+1) toward y with lam = 1/(rho sigma_y^2)
    const double sa = std::sqrt(abar_k), sn = std::sqrt(1.0 - abar_k);
    const double a = s2 / (s2 + sigma_q * sigma_q);
    const double lam = 1.0 / (rho_k * sigma_y * sigma_y);
    const double cx = sa * ((a / sa) * 1.0 / (lam + 1.0)) +
                      sn * std::sqrt(1.0 - zeta) * (1.0 / sn) * (1.0 - a);
    const double cy = sa * (lam / (lam + 1.0));
    const double ceps = sn * std::sqrt(zeta);
    const double cmu = sa * ((1.0 - a) / (lam + 1.0)) -
                       sn * std::sqrt(1.0 - zeta) * (sa / sn) * (1.0 - a);

    Rng rng(77);
    const Field x = random_field(rng, 4, 4, 1);
    const Field y = random_field(rng, 4, 4, 1);
    const Field eps = random_field(rng, 4, 4, 1, -1.0, 1.0);
    const Field out = step(x, y, eps);
    for (size_t i = 0; i < out.size(); ++i) {
        const double expected =
            cx * x.data[i] + cy * y.data[i] + ceps * eps.data[i] + cmu * mu;
        CHECK(out.data[i] == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("daps langevin step size anneals from lr to lr/100", "[solvers]") {
    const double lr = 3e-4;
    const int K = 40;
    const auto gamma_at = [&](int k) {
        return lr * (1.0 + (static_cast<double>(k) / K) * (0.01 - 1.0));
    };
    CHECK(gamma_at(0) == Catch::Approx(lr).epsilon(1e-15));
    CHECK(gamma_at(K) == Catch::Approx(0.01 * lr).epsilon(1e-12));
}

TEST_CASE("daps degenerate inner loop stays finite", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.4, 0.6}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.6), 0.05, 31);
    SolverConfig cfg;
    cfg.outer_iters = 4;
    cfg.daps.langevin_steps = 0;  // pure outer denoising
    cfg.daps.inner_steps = 2;
    cfg.daps.sigma_max = 1.0;
    cfg.seed = 17;
    const RunRecord rec = run_daps(fid.y, fid, D, cfg);
    CHECK(rec.final.same_shape(fid.y));
    CHECK(all_finite(rec.final));
    CHECK(rec.nfe == 4 * 2);
}

TEST_CASE("daps is deterministic under a fixed seed", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.4, 0.6}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.4), 0.05, 41);
    SolverConfig cfg;
    cfg.outer_iters = 3;
    cfg.daps.langevin_steps = 5;
    cfg.daps.langevin_lr = 1e-5;
    cfg.daps.inner_steps = 2;
    cfg.daps.sigma_max = 1.0;
    cfg.seed = 99;
    const RunRecord a = run_daps(fid.y, fid, D, cfg);
    const RunRecord b = run_daps(fid.y, fid, D, cfg);
    for (size_t i = 0; i < a.final.size(); ++i) CHECK(a.final.data[i] == b.final.data[i]);
}

TEST_CASE("daps divergence raises with the iteration index", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.5}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.5), 0.05, 51);
    SolverConfig cfg;
    cfg.outer_iters = 4;
    cfg.daps.langevin_lr = 1e10;  // wildly unstable on purpose
    cfg.daps.langevin_steps = 50;
    cfg.daps.inner_steps = 1;
    cfg.seed = 3;
    try {
        run_daps(fid.y, fid, D, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration >= 0);
    }
}

TEST_CASE("daps with inner MAP approximation helps on phase retrieval", "[solvers]") {
    WorldConfig wc;
    wc.height = wc.width = 16;
    wc.modes = 4;
    wc.s2 = 1e-6;
    const GmmPrior world = build_world(wc, 2024);
    const DenoiserHandle D = make_gmm_denoiser(world);
    const double sigma_y = 0.05;

    int pm_at_least = 0;
    const int n = 20;
    for (int seed = 0; seed < n; ++seed) {
        Rng rng(7000 + seed);
        const auto [truth, idx] = sample_world_image(world, rng);
        (void)idx;
        const DegradationOp op = DegradationOp::phase_retrieval(sigma_y);
        Field y = apply(op, truth);
        y += gaussian_like(rng, y, sigma_y);
        const DataFidelity fid{op, y};

        SolverConfig cfg;
        cfg.outer_iters = 30;
        cfg.daps.langevin_steps = 20;
        cfg.daps.langevin_lr = 3e-5;
        cfg.daps.inner_steps = 6;
        cfg.daps.sigma_max = 1.0;
        cfg.daps.sigma_min = 0.02;
        cfg.daps.outer_sigma_final = 0.02;
        cfg.proximap.sigma_final = 0.005;
        cfg.seed = seed;

        const RunRecord base = run_daps(Field(truth.height, truth.width, truth.channels, 0.0),
                                        fid, D, cfg);
        const RunRecord pm = run_daps_proximap(
            Field(truth.height, truth.width, truth.channels, 0.0), fid, D, cfg);
        const auto metric = [](const Field& a, const Field& b) { return psnr(a, b); };
        const double psnr_base = evaluate_with_flip(metric, base.final, truth);
        const double psnr_pm = evaluate_with_flip(metric, pm.final, truth);
        if (psnr_pm >= psnr_base) ++pm_at_least;
    }
    CHECK(pm_at_least >= n * 6 / 10);
}

TEST_CASE("conditional samplers collapse to the posterior mean at one step", "[solvers]") {
    const GmmPrior p = level_prior(4, 4, 1, {0.3, 0.7}, 1e-3);
    const DenoiserHandle D = make_gmm_denoiser(p);
    Rng rng(61);
    const Field y = random_field(rng, 4, 4, 1);
    const double sigma_y = 0.15;
    const Field expected = mmse_denoise(p, y, sigma_y);
    for (ConditionalKind kind :
         {ConditionalKind::ddim, ConditionalKind::indi, ConditionalKind::fm}) {
        const Field out = conditional_sampler(y, sigma_y, D, kind, 1);
        CHECK(max_abs_diff(out, expected) == 0.0);
    }
}

TEST_CASE("ddim trajectory matches the symbolic affine composition", "[solvers]") {
    const double s2 = 0.01, mu = 0.4, sigma_y = 0.2;
    const GmmPrior p = level_prior(2, 2, 1, {mu}, s2);
    const DenoiserHandle D = make_gmm_denoiser(p);
    Rng rng(62);
    const Field y = random_field(rng, 2, 2, 1);
    const int steps = 6;
    const Field out = conditional_sampler(y, sigma_y, D, ConditionalKind::ddim, steps);

    // scalar composition: x = py*y + pm*mu through the same grid
    const double sigma_min = std::min(1e-3, 0.5 * sigma_y);
    std::vector<double> grid(steps);
    for (int k = 0; k < steps; ++k)
        grid[k] = std::exp(std::log(sigma_y) +
                           (std::log(sigma_min) - std::log(sigma_y)) * k / (steps - 1));
    double py = 1.0, pm = 0.0, dy = 0.0, dm = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double a = s2 / (s2 + grid[k] * grid[k]);
        dy = a * py;
        dm = a * pm + (1.0 - a);
        if (k + 1 == steps) break;
        const double r = grid[k + 1] / grid[k];
        py = dy + r * (py - dy);
        pm = dm + r * (pm - dm);
    }
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.data[i] == Catch::Approx(dy * y.data[i] + dm * mu).margin(1e-12));
}

TEST_CASE("MAP-approximation denoiser dominates conditional baselines at equal NFE",
          "[solvers]") {
    // ambiguous two-mode world: mode gap (L2) = 2 sigma_y, far above the
    // prior scale so the anneal has room to commit
    const double s = 1e-3, sigma_y = 0.1;
    const GmmPrior p = level_prior(4, 4, 1, {0.4, 0.45}, s * s);  // norm gap 0.2
    const DenoiserHandle D = make_gmm_denoiser(p);
    ProximapConfig cfg;
    cfg.sigma_final = 0.03 * sigma_y;

    const int n = 100;
    int wins_vs[3] = {0, 0, 0};
    Rng rng(63);
    for (int t = 0; t < n; ++t) {
        const auto [truth, idx] = sample_world_image(p, rng);
        (void)idx;
        const Field y = truth + gaussian_like(rng, truth, sigma_y);
        const double d_pm = nearest_mode_distance(p, proximap_denoise(y, sigma_y, D, cfg));
        const ConditionalKind kinds[3] = {ConditionalKind::ddim, ConditionalKind::indi,
                                          ConditionalKind::fm};
        for (int b = 0; b < 3; ++b) {
            const double d_base =
                nearest_mode_distance(p, conditional_sampler(y, sigma_y, D, kinds[b], 8));
            if (d_pm <= d_base) ++wins_vs[b];
        }
    }
    for (int b = 0; b < 3; ++b) CHECK(wins_vs[b] >= n * 7 / 10);
}

TEST_CASE("NFE accounting across modes", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.4, 0.6}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const DataFidelity fid = blur_fidelity(Field(8, 8, 1, 0.4), 0.05, 71);

    const auto nfe_of = [&](const std::string& mode, int k_inner) {
        SolverConfig cfg;
        cfg.outer_iters = 20;
        cfg.mode = DenoiseMode::parse(mode);
        cfg.proximap.steps = k_inner;
        cfg.proximap.sigma_final = 0.001;
        cfg.seed = 1;
        return run_dpir(fid.y, fid, D, cfg).nfe;
    };
    CHECK(nfe_of("mmse", 8) == 20);
    CHECK(nfe_of("proximap", 8) == 160);
    CHECK(nfe_of("hybrid:19", 8) == 27);
    CHECK(nfe_of("hybrid:0", 8) == 160);
    CHECK(nfe_of("hybrid:20", 8) == 20);

    SolverConfig bad;
    bad.outer_iters = 20;
    bad.mode = DenoiseMode::parse("hybrid:21");
    CHECK_THROWS_AS(run_dpir(fid.y, fid, D, bad), DomainError);
}

TEST_CASE("nonlinear tasks are rejected by the splitting solvers", "[solvers]") {
    const GmmPrior p = level_prior(8, 8, 1, {0.5}, 1e-4);
    const DenoiserHandle D = make_gmm_denoiser(p);
    const Field y(8, 8, 1, 0.5);
    const DataFidelity hdr{DegradationOp::hdr(0.05), y};
    const DataFidelity pr{DegradationOp::phase_retrieval(0.05), y};
    SolverConfig cfg;
    CHECK_THROWS_AS(run_dpir(y, hdr, D, cfg), UnsupportedError);
    CHECK_THROWS_AS(run_diffpir(y, pr, D, cfg), UnsupportedError);
}

#pragma once

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "proximap/core.hpp"
#include "proximap/degradations.hpp"
#include "proximap/denoiser.hpp"
#include "proximap/errors.hpp"
#include "proximap/metrics.hpp"
#include "proximap/pnm.hpp"
#include "proximap/solvers.hpp"
#include "proximap/threading.hpp"
#include "proximap/tuning.hpp"
#include "proximap/worlds.hpp"

namespace proximap {

using json = nlohmann::json;

// -- configuration ---------------------------------------------------------------

struct TaskConfig {
    Degradation variant = Degradation::gaussian_blur;
    double sigma_y = 0.05;
    int kernel_size = 61;
    double kernel_sigma = 3.0;
    int motion_size = 61;
    double motion_intensity = 0.5;
    int sr_factor = 4;
    double mask_fraction = 0.7;
    bool block = false;
    int block_x = 0, block_y = 0, block_w = 8, block_h = 8;
};

struct WorldSpec {
    WorldConfig base;
    bool clustered = false;
    int clusters = 4;
    int members = 4;
    double member_radius = 0.006;
};

struct BenchSpec {
    std::vector<int> steps = {1, 2, 4, 8, 16};
    int seeds = 200;
    double sigma_y = 0.1;
};

struct DiagnoseSpec {
    double delta2_mul = 25.0;
    int seeds = 200;
    int horizon = 500;
    double sigma_y = 0.02;
};

struct ExperimentConfig {
    uint64_t seed = 0;
    std::string out_dir = "runs/out";
    WorldSpec world;
    TaskConfig task;
    SolverConfig solver;
    int images = 20;
    int tune_images = 6;
    int budget = 30;
    BenchSpec bench;
    DiagnoseSpec diagnose;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (j.contains(key)) return j.at(key).get<T>();
    return fallback;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    cfg.seed = detail::get_or<uint64_t>(j, "seed", 0);
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", "runs/out");
    if (j.contains("world")) {
        const json& w = j.at("world");
        cfg.world.base.height = detail::get_or(w, "height", 32);
        cfg.world.base.width = detail::get_or(w, "width", 32);
        cfg.world.base.channels = detail::get_or(w, "channels", 1);
        cfg.world.base.modes = detail::get_or(w, "modes", 8);
        cfg.world.base.s2 = detail::get_or(w, "s2", 1e-6);
        cfg.world.base.level_lo = detail::get_or(w, "level_lo", 0.2);
        cfg.world.base.level_hi = detail::get_or(w, "level_hi", 0.8);
        cfg.world.clustered = detail::get_or(w, "clustered", false);
        cfg.world.clusters = detail::get_or(w, "clusters", 4);
        cfg.world.members = detail::get_or(w, "members", 4);
        cfg.world.member_radius = detail::get_or(w, "member_radius", 0.006);
    }
    if (j.contains("task")) {
        const json& t = j.at("task");
        cfg.task.variant =
            degradation_from_name(detail::get_or<std::string>(t, "variant", "gaussian_blur"));
        cfg.task.sigma_y = detail::get_or(t, "sigma_y", 0.05);
        cfg.task.kernel_size = detail::get_or(t, "kernel_size", 61);
        cfg.task.kernel_sigma = detail::get_or(t, "kernel_sigma", 3.0);
        cfg.task.motion_size = detail::get_or(t, "motion_size", 61);
        cfg.task.motion_intensity = detail::get_or(t, "motion_intensity", 0.5);
        cfg.task.sr_factor = detail::get_or(t, "sr_factor", 4);
        cfg.task.mask_fraction = detail::get_or(t, "mask_fraction", 0.7);
        if (t.contains("block")) {
            const json& b = t.at("block");
            cfg.task.block = true;
            cfg.task.block_x = detail::get_or(b, "x", 0);
            cfg.task.block_y = detail::get_or(b, "y", 0);
            cfg.task.block_w = detail::get_or(b, "w", 8);
            cfg.task.block_h = detail::get_or(b, "h", 8);
        }
    }
    cfg.solver.algorithm =
        algorithm_from_name(detail::get_or<std::string>(j, "algorithm", "dpir"));
    cfg.solver.mode = DenoiseMode::parse(detail::get_or<std::string>(j, "mode", "mmse"));
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        const bool daps_like = cfg.solver.algorithm == Algorithm::daps ||
                               cfg.solver.algorithm == Algorithm::daps_proximap;
        cfg.solver.outer_iters = detail::get_or(s, "outer_iters", daps_like ? 200 : 20);
        if (s.contains("dpir")) {
            cfg.solver.dpir.sigma_max = detail::get_or(s.at("dpir"), "sigma_max", 1.0);
            cfg.solver.dpir.gamma = detail::get_or(s.at("dpir"), "gamma", 5.0);
        }
        if (s.contains("diffpir")) {
            cfg.solver.diffpir.lambda = detail::get_or(s.at("diffpir"), "lambda", 7.0);
            cfg.solver.diffpir.zeta = detail::get_or(s.at("diffpir"), "zeta", 0.3);
        }
        if (s.contains("daps")) {
            const json& d = s.at("daps");
            cfg.solver.daps.langevin_lr = detail::get_or(d, "langevin_lr", 1e-5);
            cfg.solver.daps.langevin_steps = detail::get_or(d, "langevin_steps", 50);
            cfg.solver.daps.inner_steps = detail::get_or(d, "inner_steps", 6);
            cfg.solver.daps.sigma_max = detail::get_or(d, "sigma_max", 10.0);
            cfg.solver.daps.sigma_min = detail::get_or(d, "sigma_min", 0.01);
            cfg.solver.daps.rho = detail::get_or(d, "rho", 7.0);
            cfg.solver.daps.outer_sigma_final = detail::get_or(d, "outer_sigma_final", 0.1);
        }
    } else {
        const bool daps_like = cfg.solver.algorithm == Algorithm::daps ||
                               cfg.solver.algorithm == Algorithm::daps_proximap;
        cfg.solver.outer_iters = daps_like ? 200 : 20;
    }
    if (j.contains("proximap")) {
        const json& p = j.at("proximap");
        cfg.solver.proximap.tau_mul = detail::get_or(p, "tau_mul", 10.0);
        cfg.solver.proximap.steps = detail::get_or(p, "k", 8);
        cfg.solver.proximap.sigma_final = detail::get_or(p, "sigma_final", 0.005);
    }
    cfg.images = detail::get_or(j, "images", 20);
    cfg.tune_images = detail::get_or(j, "tune_images", 6);
    cfg.budget = detail::get_or(j, "budget", 30);
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        cfg.bench.steps = detail::get_or(b, "steps", std::vector<int>{1, 2, 4, 8, 16});
        cfg.bench.seeds = detail::get_or(b, "seeds", 200);
        cfg.bench.sigma_y = detail::get_or(b, "sigma_y", 0.1);
    }
    if (j.contains("diagnose")) {
        const json& d = j.at("diagnose");
        cfg.diagnose.delta2_mul = detail::get_or(d, "delta2_mul", 25.0);
        cfg.diagnose.seeds = detail::get_or(d, "seeds", 200);
        cfg.diagnose.horizon = detail::get_or(d, "horizon", 500);
        cfg.diagnose.sigma_y = detail::get_or(d, "sigma_y", 0.02);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path);
    try {
        return parse_config(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config parse: ") + e.what(), static_cast<long>(e.byte));
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what(), 0);
    }
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["world"] = {{"height", cfg.world.base.height},     {"width", cfg.world.base.width},
                  {"channels", cfg.world.base.channels}, {"modes", cfg.world.base.modes},
                  {"s2", cfg.world.base.s2},             {"level_lo", cfg.world.base.level_lo},
                  {"level_hi", cfg.world.base.level_hi}, {"clustered", cfg.world.clustered},
                  {"clusters", cfg.world.clusters},      {"members", cfg.world.members},
                  {"member_radius", cfg.world.member_radius}};
    j["task"] = {{"variant", degradation_name(cfg.task.variant)},
                 {"sigma_y", cfg.task.sigma_y},
                 {"kernel_size", cfg.task.kernel_size},
                 {"kernel_sigma", cfg.task.kernel_sigma},
                 {"motion_size", cfg.task.motion_size},
                 {"motion_intensity", cfg.task.motion_intensity},
                 {"sr_factor", cfg.task.sr_factor},
                 {"mask_fraction", cfg.task.mask_fraction}};
    if (cfg.task.block)
        j["task"]["block"] = {{"x", cfg.task.block_x},
                              {"y", cfg.task.block_y},
                              {"w", cfg.task.block_w},
                              {"h", cfg.task.block_h}};
    j["algorithm"] = algorithm_name(cfg.solver.algorithm);
    j["mode"] = cfg.solver.mode.str();
    j["solver"] = {
        {"outer_iters", cfg.solver.outer_iters},
        {"dpir", {{"sigma_max", cfg.solver.dpir.sigma_max}, {"gamma", cfg.solver.dpir.gamma}}},
        {"diffpir",
         {{"lambda", cfg.solver.diffpir.lambda}, {"zeta", cfg.solver.diffpir.zeta}}},
        {"daps",
         {{"langevin_lr", cfg.solver.daps.langevin_lr},
          {"langevin_steps", cfg.solver.daps.langevin_steps},
          {"inner_steps", cfg.solver.daps.inner_steps},
          {"sigma_max", cfg.solver.daps.sigma_max},
          {"sigma_min", cfg.solver.daps.sigma_min},
          {"rho", cfg.solver.daps.rho},
          {"outer_sigma_final", cfg.solver.daps.outer_sigma_final}}}};
    j["proximap"] = {{"tau_mul", cfg.solver.proximap.tau_mul},
                     {"k", cfg.solver.proximap.steps},
                     {"sigma_final", cfg.solver.proximap.sigma_final}};
    j["images"] = cfg.images;
    j["tune_images"] = cfg.tune_images;
    j["budget"] = cfg.budget;
    return j;
}

// -- world / task assembly ---------------------------------------------------------

inline GmmPrior make_world(const ExperimentConfig& cfg) {
    if (cfg.world.clustered)
        return build_clustered_world(cfg.world.base.height, cfg.world.base.width,
                                     cfg.world.base.channels, cfg.world.clusters,
                                     cfg.world.members, cfg.world.member_radius,
                                     cfg.world.base.s2, cfg.seed);
    return build_world(cfg.world.base, cfg.seed);
}

inline DegradationOp make_operator(const ExperimentConfig& cfg) {
    const TaskConfig& t = cfg.task;
    Rng rng(fnv1a("op:" + std::to_string(cfg.seed)));
    switch (t.variant) {
        case Degradation::gaussian_blur:
            return DegradationOp::blur(Degradation::gaussian_blur,
                                       make_gaussian_kernel(t.kernel_size, t.kernel_sigma),
                                       t.sigma_y);
        case Degradation::motion_blur:
            return DegradationOp::blur(Degradation::motion_blur,
                                       make_motion_kernel(rng, t.motion_intensity, t.motion_size),
                                       t.sigma_y);
        case Degradation::sr:
            return DegradationOp::super_resolution(t.sr_factor, t.sigma_y);
        case Degradation::inpaint: {
            Field mask = t.block ? make_block_mask(cfg.world.base.height, cfg.world.base.width,
                                                   t.block_x, t.block_y, t.block_w, t.block_h)
                                 : make_random_mask(rng, cfg.world.base.height,
                                                    cfg.world.base.width, t.mask_fraction);
            return DegradationOp::inpaint(std::move(mask), t.sigma_y);
        }
        case Degradation::hdr:
            return DegradationOp::hdr(t.sigma_y);
        case Degradation::phase_retrieval:
            return DegradationOp::phase_retrieval(t.sigma_y);
    }
    throw Error("make_operator: unreachable");
}

/// Degrade a ground-truth image. Masked pixels are filled with the mid-range
/// value and receive no noise; every other variant gets measurement-space
/// Gaussian noise at sigma_y.
inline Field synthesize_measurement(const DegradationOp& op, const Field& truth, Rng& rng) {
    if (op.variant == Degradation::inpaint) {
        Field y(truth.height, truth.width, truth.channels);
        for (int ch = 0; ch < truth.channels; ++ch)
            for (int r = 0; r < truth.height; ++r)
                for (int c = 0; c < truth.width; ++c)
                    y.at(r, c, ch) =
                        op.mask.at(r, c) != 0.0
                            ? truth.at(r, c, ch) + op.sigma_y * rng.normal()
                            : 0.5;
        return y;
    }
    Field y = apply(op, truth);
    if (op.sigma_y > 0.0) y += gaussian_like(rng, y, op.sigma_y);
    return y;
}

inline RunRecord solve_one(const Field& y, const DataFidelity& fid, const DenoiserHandle& D,
                           const SolverConfig& cfg) {
    switch (cfg.algorithm) {
        case Algorithm::dpir: return run_dpir(y, fid, D, cfg);
        case Algorithm::diffpir: return run_diffpir(y, fid, D, cfg);
        case Algorithm::daps: return run_daps(y, fid, D, cfg);
        case Algorithm::daps_proximap: return run_daps_proximap(y, fid, D, cfg);
        default:
            throw DomainError("solve_one: " + algorithm_name(cfg.algorithm) +
                              " is a denoising bench method, not an inverse-problem solver");
    }
}

// -- result rows and files ------------------------------------------------------------

struct ResultRow {
    std::string task;
    std::string algorithm;
    std::string mode;
    long seed = 0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    long long nfe = 0;
    long wall_ms = 0;
};

namespace detail {

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

/// Fixed column order; byte-stable apart from the wall_ms column.
inline void write_results_csv(const std::string& path, std::vector<ResultRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.task, a.algorithm, a.mode, a.seed) <
               std::tie(b.task, b.algorithm, b.mode, b.seed);
    });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_results_csv: cannot open " + path);
    out << "task,algorithm,mode,seed,psnr,ssim,nfe,wall_ms\n";
    for (const auto& r : rows)
        out << r.task << ',' << r.algorithm << ',' << r.mode << ',' << r.seed << ','
            << detail::format_metric(r.psnr_db) << ',' << detail::format_metric(r.ssim_val) << ','
            << r.nfe << ',' << r.wall_ms << '\n';
}

inline void write_trace_csv(const std::string& path, const RunRecord& rec) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_trace_csv: cannot open " + path);
    out << "k,sigma_k,fidelity,nfe_so_far\n";
    char buf[96];
    for (const auto& row : rec.trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%lld\n", row.step, row.sigma,
                      row.fidelity, row.nfe_so_far);
        out << buf;
    }
}

inline json record_to_json(const RunRecord& rec) {
    return json{{"config_hash", rec.config_hash}, {"sigma_targets", rec.sigma_targets},
                {"nfe", rec.nfe},                 {"psnr", rec.psnr},
                {"ssim", rec.ssim},               {"mse", rec.mse},
                {"nearest_mode", rec.nearest_mode}};
}

/// Minimal scatter report: one dot per run on the (psnr, ssim) plane, colored
/// by algorithm/mode group.
inline void write_report_svg(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_report_svg: cannot open " + path);
    const int W = 640, H = 480, M = 60;
    double px_lo = 1e300, px_hi = -1e300, py_lo = 1e300, py_hi = -1e300;
    for (const auto& r : rows) {
        if (std::isinf(r.psnr_db)) continue;
        px_lo = std::min(px_lo, r.psnr_db);
        px_hi = std::max(px_hi, r.psnr_db);
        py_lo = std::min(py_lo, r.ssim_val);
        py_hi = std::max(py_hi, r.ssim_val);
    }
    if (px_lo > px_hi) {
        px_lo = 0;
        px_hi = 1;
    }
    if (py_lo > py_hi) {
        py_lo = 0;
        py_hi = 1;
    }
    if (px_hi - px_lo < 1e-12) px_hi = px_lo + 1;
    if (py_hi - py_lo < 1e-12) py_hi = py_lo + 1;
    const auto sx = [&](double v) { return M + (v - px_lo) / (px_hi - px_lo) * (W - 2 * M); };
    const auto sy = [&](double v) { return H - M - (v - py_lo) / (py_hi - py_lo) * (H - 2 * M); };

    std::vector<std::string> groups;
    const auto group_of = [](const ResultRow& r) { return r.algorithm + "/" + r.mode; };
    for (const auto& r : rows) {
        const std::string g = group_of(r);
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
        << H - M << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 15
        << "\" text-anchor=\"middle\" font-size=\"14\">PSNR (dB)</text>\n";
    out << "<text x=\"18\" y=\"" << H / 2
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 " << H / 2
        << ")\">SSIM</text>\n";
    char buf[160];
    for (const auto& r : rows) {
        if (std::isinf(r.psnr_db)) continue;
        const size_t gi =
            std::find(groups.begin(), groups.end(), group_of(r)) - groups.begin();
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                      sx(r.psnr_db), sy(r.ssim_val), palette[gi % 8]);
        out << buf;
    }
    for (size_t g = 0; g < groups.size(); ++g) {
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%d\" cy=\"%zu\" r=\"5\" fill=\"%s\"/>"
                      "<text x=\"%d\" y=\"%zu\" font-size=\"12\">%s</text>\n",
                      W - M - 150, M + 20 * g, palette[g % 8], W - M - 140, M + 20 * g + 4,
                      groups[g].c_str());
        out << buf;
    }
    out << "</svg>\n";
}

// -- experiment drivers ----------------------------------------------------------------

struct ImageOutcome {
    RunRecord record;
    ResultRow row;
};

inline uint64_t derive_seed(uint64_t base, const std::string& tag, long index) {
    return fnv1a(tag + ":" + std::to_string(base) + ":" + std::to_string(index));
}

/// Solve one seeded image of the experiment. image_id indexes the global
/// seed sequence: tuning owns [0, tune_images), the test phase starts at
/// tune_images, so the two splits never share an image. Phase-retrieval
/// metrics are evaluated on the better of the two reflection orientations.
inline ImageOutcome run_image(const ExperimentConfig& cfg, const GmmPrior& world,
                              const DegradationOp& op, long image_id) {
    Rng rng(derive_seed(cfg.seed, "img", image_id));
    const auto [truth, mode_index] = sample_world_image(world, rng);
    (void)mode_index;
    const Field y = synthesize_measurement(op, truth, rng);
    const DataFidelity fid{op, y};
    const DenoiserHandle D = make_gmm_denoiser(world);

    SolverConfig scfg = cfg.solver;
    scfg.seed = derive_seed(cfg.seed, "solver", image_id);

    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec = solve_one(y, fid, D, scfg);
    const auto t1 = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    const bool flip_aware = op.variant == Degradation::phase_retrieval;
    const auto psnr_fn = [](const Field& a, const Field& b) { return psnr(a, b); };
    const auto ssim_fn = [](const Field& a, const Field& b) { return ssim(a, b); };
    const auto mse_fn = [](const Field& a, const Field& b) { return mse(a, b); };
    rec.psnr = flip_aware ? evaluate_with_flip(psnr_fn, rec.final, truth)
                          : psnr(rec.final, truth);
    rec.ssim = flip_aware ? evaluate_with_flip(ssim_fn, rec.final, truth)
                          : ssim(rec.final, truth);
    rec.mse = flip_aware ? evaluate_with_flip(mse_fn, rec.final, truth) : mse(rec.final, truth);
    rec.nearest_mode = nearest_mode_distance(world, rec.final);

    ImageOutcome out;
    out.row = ResultRow{degradation_name(op.variant),
                        algorithm_name(cfg.solver.algorithm),
                        cfg.solver.mode.str(),
                        image_id,
                        rec.psnr,
                        rec.ssim,
                        rec.nfe,
                        static_cast<long>(std::llround(rec.wall_ms))};
    out.record = std::move(rec);
    return out;
}

/// Full pipeline: synthesize the world, degrade seeded images, solve, score,
/// and persist every artifact (prior, operator, images, traces, CSV, SVG).
inline std::vector<ImageOutcome> run_experiment(const ExperimentConfig& cfg,
                                                bool write_artifacts = true) {
    namespace fs = std::filesystem;
    const GmmPrior world = make_world(cfg);
    const DegradationOp op = make_operator(cfg);

    std::vector<ImageOutcome> outcomes(cfg.images);
    parallel_for(cfg.images,
                 [&](long i) { outcomes[i] = run_image(cfg, world, op, cfg.tune_images + i); });

    if (write_artifacts) {
        fs::create_directories(cfg.out_dir);
        fs::create_directories(cfg.out_dir + "/images");
        {
            std::ofstream out(cfg.out_dir + "/config.json");
            out << config_to_json(cfg).dump(2) << "\n";
        }
        {
            std::ofstream out(cfg.out_dir + "/prior.json");
            out << prior_to_json(world).dump() << "\n";
        }
        {
            json oj = op_to_json(op);
            oj["seed"] = cfg.seed;
            std::ofstream out(cfg.out_dir + "/op.json");
            out << oj.dump() << "\n";
        }
        std::vector<ResultRow> rows;
        json records = json::array();
        for (long i = 0; i < cfg.images; ++i) {
            const long id = cfg.tune_images + i;
            Rng rng(derive_seed(cfg.seed, "img", id));
            const auto [truth, mode_index] = sample_world_image(world, rng);
            (void)mode_index;
            const Field y = synthesize_measurement(op, truth, rng);
            char name[64];
            std::snprintf(name, sizeof(name), "/images/truth_%03ld.pnm", id);
            write_pnm(cfg.out_dir + name, truth);
            std::snprintf(name, sizeof(name), "/images/y_%03ld.pnm", id);
            write_pnm(cfg.out_dir + name, y);
            std::snprintf(name, sizeof(name), "/images/y_%03ld.json", id);
            {
                json side = op_to_json(op);
                side["seed"] = derive_seed(cfg.seed, "img", id);
                side["sigma_y"] = op.sigma_y;
                std::ofstream out(cfg.out_dir + name);
                out << side.dump() << "\n";
            }
            std::snprintf(name, sizeof(name), "/images/recon_%03ld.pnm", id);
            write_pnm(cfg.out_dir + name, outcomes[i].record.final);
            std::snprintf(name, sizeof(name), "/trace_%03ld.csv", id);
            write_trace_csv(cfg.out_dir + name, outcomes[i].record);
            rows.push_back(outcomes[i].row);
            records.push_back(record_to_json(outcomes[i].record));
        }
        write_results_csv(cfg.out_dir + "/runs.csv", rows);
        write_report_svg(cfg.out_dir + "/report.svg", rows);
        {
            std::ofstream out(cfg.out_dir + "/records.json");
            out << records.dump(2) << "\n";
        }
        // metric sanity is reported, never asserted
        double mean_psnr = 0.0, mean_ssim = 0.0, mean_nmd = 0.0, baseline = 0.0;
        bool have_baseline = op.linear();
        for (long i = 0; i < cfg.images; ++i) {
            mean_psnr += outcomes[i].record.psnr / cfg.images;
            mean_ssim += outcomes[i].record.ssim / cfg.images;
            mean_nmd += outcomes[i].record.nearest_mode / cfg.images;
            if (have_baseline) {
                Rng rng(derive_seed(cfg.seed, "img", cfg.tune_images + i));
                const auto [truth, mi] = sample_world_image(world, rng);
                (void)mi;
                const Field y = synthesize_measurement(op, truth, rng);
                baseline += psnr(adjoint(op, y), truth) / cfg.images;
            }
        }
        json summary{{"mean_psnr", mean_psnr},
                     {"mean_ssim", mean_ssim},
                     {"mean_nearest_mode", mean_nmd},
                     {"images", cfg.images},
                     {"nfe_per_image", outcomes.empty() ? 0 : outcomes[0].record.nfe}};
        if (have_baseline) summary["baseline_adjoint_psnr"] = baseline;
        std::ofstream out(cfg.out_dir + "/summary.json");
        out << summary.dump(2) << "\n";
    }
    return outcomes;
}

// -- standalone denoising bench -----------------------------------------------------------

struct BenchRow {
    std::string method;
    int steps = 0;
    long seed = 0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double nearest_mode = 0.0;
    long long nfe = 0;
};

/// Gaussian denoising comparison on a world: posterior mean, the iterative
/// MAP approximation across step counts, and the three conditional samplers
/// at matched NFE.
inline std::vector<BenchRow> run_denoise_bench(const ExperimentConfig& cfg) {
    const GmmPrior world = make_world(cfg);
    const double sigma_y = cfg.bench.sigma_y;
    struct Job {
        std::string method;
        int steps;
    };
    std::vector<Job> jobs = {{"mmse", 1}};
    for (int k : cfg.bench.steps)
        if (k > 1) {
            jobs.push_back({"proximap", k});
            jobs.push_back({"cond_ddim", k});
            jobs.push_back({"cond_indi", k});
            jobs.push_back({"cond_fm", k});
        }
    std::vector<BenchRow> rows(jobs.size() * cfg.bench.seeds);
    parallel_for(static_cast<long>(rows.size()), [&](long idx) {
        const Job& job = jobs[idx / cfg.bench.seeds];
        const long seed = idx % cfg.bench.seeds;
        Rng rng(derive_seed(cfg.seed, "bench", seed));
        const auto [truth, mi] = sample_world_image(world, rng);
        (void)mi;
        const Field y = truth + gaussian_like(rng, truth, sigma_y);
        const DenoiserHandle D = make_gmm_denoiser(world);
        Field out;
        if (job.method == "mmse") {
            out = D(y, sigma_y);
        } else if (job.method == "proximap") {
            ProximapConfig pc = cfg.solver.proximap;
            pc.steps = job.steps;
            pc.sigma_final = std::min(cfg.solver.proximap.sigma_final, 0.5 * sigma_y);
            out = proximap_denoise(y, sigma_y, D, pc);
        } else if (job.method == "cond_ddim") {
            out = conditional_sampler(y, sigma_y, D, ConditionalKind::ddim, job.steps);
        } else if (job.method == "cond_indi") {
            out = conditional_sampler(y, sigma_y, D, ConditionalKind::indi, job.steps);
        } else {
            out = conditional_sampler(y, sigma_y, D, ConditionalKind::fm, job.steps);
        }
        rows[idx] = BenchRow{job.method, job.steps,          seed,
                             psnr(out, truth),  ssim(out, truth),
                             nearest_mode_distance(world, out), *D.calls};
    });
    return rows;
}

inline void write_bench_csv(const std::string& path, std::vector<BenchRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
        return std::tie(a.method, a.steps, a.seed) < std::tie(b.method, b.steps, b.seed);
    });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_bench_csv: cannot open " + path);
    out << "method,steps,seed,psnr,ssim,nearest_mode,nfe\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.method << ',' << r.steps << ',' << r.seed << ','
            << detail::format_metric(r.psnr_db) << ',' << detail::format_metric(r.ssim_val)
            << ',';
        std::snprintf(buf, sizeof(buf), "%.9e", r.nearest_mode);
        out << buf << ',' << r.nfe << '\n';
    }
}

// -- score-bias diagnosis -------------------------------------------------------------------

struct DiagnoseRow {
    std::string method;  // naive_exact | naive_biased | proximap_biased
    long seed = 0;
    double nearest_mode = 0.0;
};

/// The controlled comparison behind the design: the naive MAP-targeting
/// iteration with exact vs bias-inflated denoisers, against the early-stopped
/// run with the same biased denoiser.
inline std::vector<DiagnoseRow> run_diagnose(const ExperimentConfig& cfg) {
    const GmmPrior world = make_world(cfg);
    const double sigma_y = cfg.diagnose.sigma_y;
    const double delta2 = cfg.diagnose.delta2_mul * world.s2;
    const double tau = tau_from_multiplier(cfg.solver.proximap.tau_mul, sigma_y);
    const DenoiserHandle D_exact = make_gmm_denoiser(world);
    const DenoiserHandle D_biased = make_gmm_denoiser(world, delta2);

    std::vector<DiagnoseRow> rows(3 * cfg.diagnose.seeds);
    parallel_for(cfg.diagnose.seeds, [&](long seed) {
        Rng rng(derive_seed(cfg.seed, "diag", seed));
        const auto [truth, mi] = sample_world_image(world, rng);
        (void)mi;
        const Field y = truth + gaussian_like(rng, truth, sigma_y);

        const auto exact_fn = [&](const Field& x, double sg) { return D_exact.fn(x, sg); };
        const auto biased_fn = [&](const Field& x, double sg) { return D_biased.fn(x, sg); };
        const Field naive_exact =
            naive_map_iterate(y, sigma_y, tau, cfg.diagnose.horizon, exact_fn).back();
        const Field naive_biased =
            naive_map_iterate(y, sigma_y, tau, cfg.diagnose.horizon, biased_fn).back();
        ProximapConfig pc = cfg.solver.proximap;
        pc.sigma_final = std::min(pc.sigma_final, 0.05 * sigma_y);
        const Field pm_biased = proximap_denoise(y, sigma_y, D_biased, pc);

        rows[3 * seed + 0] = {"naive_exact", seed, nearest_mode_distance(world, naive_exact)};
        rows[3 * seed + 1] = {"naive_biased", seed, nearest_mode_distance(world, naive_biased)};
        rows[3 * seed + 2] = {"proximap_biased", seed, nearest_mode_distance(world, pm_biased)};
    });
    return rows;
}

inline void write_diagnose_csv(const std::string& path, const std::vector<DiagnoseRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_diagnose_csv: cannot open " + path);
    out << "method,seed,nearest_mode\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9e", r.nearest_mode);
        out << r.method << ',' << r.seed << ',' << buf << '\n';
    }
}

// -- tuning driver ----------------------------------------------------------------------------

/// Random-search tuning on the held-out tuning split (image indices
/// [0, tune_images)); the test split starts at tune_images. Objectives are the
/// mean PSNR and mean structural sharpness over the split.
inline ParetoFront tune_experiment(const ExperimentConfig& cfg,
                                   std::vector<TuneCandidate>* all_out = nullptr) {
    const GmmPrior world = make_world(cfg);
    const DegradationOp op = make_operator(cfg);
    const std::vector<TuneRange> ranges =
        default_ranges(cfg.solver.algorithm, cfg.solver.mode);
    TuneBudget budget;
    budget.n_random = cfg.budget;
    budget.tune_set_size = cfg.tune_images;
    budget.test_set_size = cfg.images;
    budget.seed = derive_seed(cfg.seed, "tune", 0);

    const auto evaluate = [&](const SolverConfig& scfg) {
        MetricPair m;
        std::vector<MetricPair> per(budget.tune_set_size);
        parallel_for(budget.tune_set_size, [&](long i) {
            Rng rng(derive_seed(cfg.seed, "img", i));
            const auto [truth, mi] = sample_world_image(world, rng);
            (void)mi;
            const Field y = synthesize_measurement(op, truth, rng);
            const DataFidelity fid{op, y};
            const DenoiserHandle D = make_gmm_denoiser(world);
            SolverConfig run_cfg = scfg;
            run_cfg.seed = derive_seed(cfg.seed, "solver", i);
            const RunRecord rec = solve_one(y, fid, D, run_cfg);
            const bool flip_aware = op.variant == Degradation::phase_retrieval;
            const auto psnr_fn = [](const Field& a, const Field& b) { return psnr(a, b); };
            const auto ssim_fn = [](const Field& a, const Field& b) { return ssim(a, b); };
            per[i].psnr = flip_aware ? evaluate_with_flip(psnr_fn, rec.final, truth)
                                     : psnr(rec.final, truth);
            per[i].sharpness = flip_aware ? evaluate_with_flip(ssim_fn, rec.final, truth)
                                          : ssim(rec.final, truth);
            per[i].mse = mse(rec.final, truth);
        });
        for (const auto& p : per) {
            m.psnr += p.psnr / budget.tune_set_size;
            m.sharpness += p.sharpness / budget.tune_set_size;
            m.mse += p.mse / budget.tune_set_size;
        }
        return m;
    };
    return random_search_tune(ranges, budget, cfg.solver, evaluate, all_out);
}

inline void write_front_json(const std::string& path, const ParetoFront& front) {
    json arr = json::array();
    for (const auto& c : front.members)
        arr.push_back(json{{"config_hash", c.config.hash()},
                           {"psnr", c.metrics.psnr},
                           {"sharpness", c.metrics.sharpness},
                           {"mse", c.metrics.mse},
                           {"dpir_sigma_max", c.config.dpir.sigma_max},
                           {"dpir_gamma", c.config.dpir.gamma},
                           {"diffpir_lambda", c.config.diffpir.lambda},
                           {"diffpir_zeta", c.config.diffpir.zeta},
                           {"daps_langevin_lr", c.config.daps.langevin_lr},
                           {"proximap_sigma_final", c.config.proximap.sigma_final}});
    std::ofstream out(path);
    out << arr.dump(2) << "\n";
}

}  // namespace proximap

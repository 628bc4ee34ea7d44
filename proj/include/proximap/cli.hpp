#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proximap/experiment.hpp"

namespace proximap {

// Exit codes: 0 ok, 2 config error, 3 divergence, 4 infeasible schedule.

namespace cli_detail {

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("results csv: empty file", 0);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> cols;
        while (std::getline(ss, field, ',')) cols.push_back(field);
        if (cols.size() != 8) throw ParseError("results csv: expected 8 columns", 0);
        ResultRow r;
        r.task = cols[0];
        r.algorithm = cols[1];
        r.mode = cols[2];
        r.seed = std::stol(cols[3]);
        r.psnr_db = cols[4] == "inf" ? std::numeric_limits<double>::infinity()
                                     : std::stod(cols[4]);
        r.ssim_val = std::stod(cols[5]);
        r.nfe = std::stoll(cols[6]);
        r.wall_ms = std::stol(cols[7]);
        rows.push_back(r);
    }
    return rows;
}

inline ExperimentConfig config_from_option(const std::string& config_path) {
    if (config_path.empty()) return ExperimentConfig{};
    return load_config(config_path);
}

}  // namespace cli_detail

inline int cli_main(int argc, char** argv) {
    CLI::App app{"iterative MAP-approximation denoising bench"};
    app.require_subcommand(1);

    // schedule
    auto* sched_cmd = app.add_subcommand("schedule", "dump the (sigma_k, gamma_k) schedule as CSV");
    double s_sigma_y = 0.05, s_tau_mul = 10.0, s_sigma_final = 0.005;
    int s_k = 8;
    std::string s_out;
    sched_cmd->add_option("--sigma-y", s_sigma_y, "measurement noise std")->required();
    sched_cmd->add_option("--tau-mul", s_tau_mul, "tau multiplier (> 1)");
    sched_cmd->add_option("--k", s_k, "number of steps");
    sched_cmd->add_option("--sigma-final", s_sigma_final, "target final sigma")->required();
    sched_cmd->add_option("--out", s_out, "output file (default stdout)");

    // denoise-bench
    auto* bench_cmd = app.add_subcommand("denoise-bench", "standalone denoising comparison");
    std::string b_config, b_out = "runs/denoise-bench";
    bench_cmd->add_option("--config", b_config, "config JSON");
    bench_cmd->add_option("--out", b_out, "output directory");

    // diagnose
    auto* diag_cmd = app.add_subcommand("diagnose", "naive MAP iteration vs early stopping");
    std::string d_config, d_out = "runs/diagnose";
    double d_delta2 = -1.0;
    int d_seeds = -1;
    diag_cmd->add_option("--delta2", d_delta2, "score-bias variance inflation (absolute)");
    diag_cmd->add_option("--seeds", d_seeds, "number of seeded trials");
    diag_cmd->add_option("--config", d_config, "config JSON");
    diag_cmd->add_option("--out", d_out, "output directory");

    // pnp-run
    auto* run_cmd = app.add_subcommand("pnp-run", "run one inverse-problem experiment");
    std::string r_config, r_task, r_algorithm, r_mode, r_out;
    run_cmd->add_option("--config", r_config, "config JSON")->required();
    run_cmd->add_option("--task", r_task, "override task variant");
    run_cmd->add_option("--algorithm", r_algorithm, "override algorithm");
    run_cmd->add_option("--mode", r_mode, "override mode (mmse|proximap|hybrid:N)");
    run_cmd->add_option("--out", r_out, "override output directory");

    // tune
    auto* tune_cmd = app.add_subcommand("tune", "random-search tuning, Pareto front out");
    std::string t_config, t_task, t_algorithm, t_out;
    int t_budget = -1;
    tune_cmd->add_option("--config", t_config, "config JSON")->required();
    tune_cmd->add_option("--task", t_task, "override task variant");
    tune_cmd->add_option("--algorithm", t_algorithm, "override algorithm");
    tune_cmd->add_option("--budget", t_budget, "number of random candidates");
    tune_cmd->add_option("--out", t_out, "override output directory");

    // report
    auto* report_cmd = app.add_subcommand("report", "render runs.csv as an SVG scatter");
    std::string rep_in, rep_out = "report.svg";
    report_cmd->add_option("--in", rep_in, "directory containing runs.csv")->required();
    report_cmd->add_option("--out", rep_out, "output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sched_cmd->parsed()) {
            const double tau = tau_from_multiplier(s_tau_mul, s_sigma_y);
            const double beta = solve_beta(s_sigma_y, tau, s_k, s_sigma_final);
            const Schedule sched = build_schedule(s_sigma_y, tau, beta, s_k);
            std::ostringstream csv;
            csv << "k,sigma_k,gamma_k\n";
            char buf[96];
            for (int k = 0; k <= sched.steps; ++k) {
                if (k < sched.steps)
                    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", k, sched.sigma[k],
                                  sched.gamma[k]);
                else
                    std::snprintf(buf, sizeof(buf), "%d,%.17g,\n", k, sched.sigma[k]);
                csv << buf;
            }
            if (s_out.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream out(s_out, std::ios::binary);
                if (!out) throw Error("cannot open " + s_out);
                out << csv.str();
            }
            return 0;
        }

        if (bench_cmd->parsed()) {
            ExperimentConfig cfg = cli_detail::config_from_option(b_config);
            if (!b_out.empty()) cfg.out_dir = b_out;
            const auto rows = run_denoise_bench(cfg);
            std::filesystem::create_directories(cfg.out_dir);
            write_bench_csv(cfg.out_dir + "/bench.csv", rows);
            std::cout << "wrote " << cfg.out_dir << "/bench.csv (" << rows.size() << " rows)\n";
            return 0;
        }

        if (diag_cmd->parsed()) {
            ExperimentConfig cfg = cli_detail::config_from_option(d_config);
            if (d_config.empty()) {  // sensible desk-scale default world
                cfg.world.clustered = true;
                cfg.world.base.height = cfg.world.base.width = 16;
                cfg.world.base.s2 = 1e-6;
                cfg.world.member_radius = 6e-3;
                cfg.seed = 4242;
            }
            if (d_delta2 >= 0.0) cfg.diagnose.delta2_mul = d_delta2 / cfg.world.base.s2;
            if (d_seeds > 0) cfg.diagnose.seeds = d_seeds;
            if (!d_out.empty()) cfg.out_dir = d_out;
            const auto rows = run_diagnose(cfg);
            std::filesystem::create_directories(cfg.out_dir);
            write_diagnose_csv(cfg.out_dir + "/diagnose.csv", rows);
            // quick console summary
            double naive_e = 0, naive_b = 0, pm_b = 0;
            int wins = 0;
            for (const auto& r : rows) {
                if (r.method == "naive_exact") naive_e += r.nearest_mode;
                if (r.method == "naive_biased") naive_b += r.nearest_mode;
                if (r.method == "proximap_biased") pm_b += r.nearest_mode;
            }
            for (int s = 0; s < cfg.diagnose.seeds; ++s)
                if (rows[3 * s + 1].nearest_mode > rows[3 * s + 2].nearest_mode) ++wins;
            const int n = cfg.diagnose.seeds;
            std::printf("naive/exact mean drift   %.3e\n", naive_e / n);
            std::printf("naive/biased mean drift  %.3e\n", naive_b / n);
            std::printf("early-stop biased drift  %.3e\n", pm_b / n);
            std::printf("early stopping closer on %d/%d seeds\n", wins, n);
            return 0;
        }

        if (run_cmd->parsed()) {
            ExperimentConfig cfg = load_config(r_config);
            if (!r_task.empty()) cfg.task.variant = degradation_from_name(r_task);
            if (!r_algorithm.empty()) cfg.solver.algorithm = algorithm_from_name(r_algorithm);
            if (!r_mode.empty()) cfg.solver.mode = DenoiseMode::parse(r_mode);
            if (!r_out.empty()) cfg.out_dir = r_out;
            const auto outcomes = run_experiment(cfg);
            double mean_psnr = 0;
            for (const auto& o : outcomes) mean_psnr += o.record.psnr / outcomes.size();
            std::printf("%s/%s/%s: %zu images, mean PSNR %.2f dB, NFE %lld\n",
                        degradation_name(cfg.task.variant).c_str(),
                        algorithm_name(cfg.solver.algorithm).c_str(),
                        cfg.solver.mode.str().c_str(), outcomes.size(), mean_psnr,
                        outcomes.empty() ? 0 : outcomes[0].record.nfe);
            std::cout << "artifacts in " << cfg.out_dir << "\n";
            return 0;
        }

        if (tune_cmd->parsed()) {
            ExperimentConfig cfg = load_config(t_config);
            if (!t_task.empty()) cfg.task.variant = degradation_from_name(t_task);
            if (!t_algorithm.empty()) cfg.solver.algorithm = algorithm_from_name(t_algorithm);
            if (t_budget > 0) cfg.budget = t_budget;
            if (!t_out.empty()) cfg.out_dir = t_out;
            std::vector<TuneCandidate> all;
            const ParetoFront front = tune_experiment(cfg, &all);
            std::filesystem::create_directories(cfg.out_dir);
            write_front_json(cfg.out_dir + "/front.json", front);
            const TuneCandidate& pick = pareto_select_sharpest(front);
            const size_t viable = static_cast<size_t>(std::count_if(
                all.begin(), all.end(), [](const TuneCandidate& c) { return c.viable; }));
            std::printf("%zu/%zu candidates viable, front size %zu\n", viable, all.size(),
                        front.members.size());
            std::printf("sharpest member: psnr %.2f dB, ssim %.4f, hash %016" PRIx64 "\n",
                        pick.metrics.psnr, pick.metrics.sharpness, pick.config.hash());
            std::cout << "front in " << cfg.out_dir << "/front.json\n";
            return 0;
        }

        if (report_cmd->parsed()) {
            const auto rows = cli_detail::read_results_csv(rep_in + "/runs.csv");
            write_report_svg(rep_out, rows);
            std::cout << "wrote " << rep_out << " (" << rows.size() << " runs)\n";
            return 0;
        }
    } catch (const InfeasibleTarget& e) {
        std::cerr << "infeasible schedule: " << e.what() << "\n";
        return 4;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NoViableConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace proximap

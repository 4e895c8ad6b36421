#include "popest/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace popest;

namespace {

struct CommonArgs {
    std::string config;
    std::string data;
    std::string out = ".";
    std::int64_t seed = -1; // -1: use the config seed
    int threads = 0;
    std::string grad = "adjoint";
    int multistart = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_data) {
    cmd->add_option("--config", args.config, "experiment configuration (JSON)")->required();
    if (needs_data) {
        cmd->add_option("--data", args.data, "dataset CSV produced by `simulate`")->required();
    }
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--seed", args.seed, "override the configured seed");
    cmd->add_option("--threads", args.threads, "worker threads (0 = all cores)");
    cmd->add_option("--grad", args.grad, "gradient mode: adjoint or fd")
        ->check(CLI::IsMember({"adjoint", "fd"}));
    cmd->add_option("--multistart", args.multistart, "extra random feasible starts");
}

ExperimentConfig configure(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config);
    cfg.threads = args.threads;
    cfg.optimizer.threads = args.threads;
    if (args.grad == "fd") cfg.optimizer.grad_mode = GradientMode::FiniteDifference;
    if (args.multistart > 0) cfg.optimizer.multistart = args.multistart;
    return cfg;
}

Dataset load_data(const CommonArgs& args) {
    Dataset ds = read_dataset_csv(args.data);
    const fs::path sidecar = fs::path(args.data).replace_extension(".json");
    apply_dataset_sidecar(sidecar.string(), ds);
    return ds;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
    fs::create_directories(args.out);
    return (fs::path(args.out) / name).string();
}

void finish_manifest(const CommonArgs& args, const std::string& command,
                     std::vector<std::string> outputs) {
    RunManifest manifest;
    manifest.command = command;
    manifest.config_path = args.config;
    manifest.config_hash = config_hash(args.config);
    manifest.outputs = std::move(outputs);
    const std::string path = out_path(args, "manifest.json");
    write_manifest(path, manifest);
}

int run_simulate(const CommonArgs& args) {
    ExperimentConfig cfg = configure(args);
    if (args.seed >= 0) cfg.data_seed = static_cast<std::uint64_t>(args.seed);
    const Dataset data = generate_data(cfg);
    const std::string csv = out_path(args, "dataset.csv");
    const std::string sidecar = out_path(args, "dataset.json");
    write_dataset_csv(csv, data);
    write_dataset_sidecar(sidecar, data);
    finish_manifest(args, "simulate", {csv, sidecar});
    std::printf("simulate: %d samples, %d time steps -> %s\n", cfg.data_samples,
                static_cast<int>(data.u.size()), csv.c_str());
    return 0;
}

int run_estimate(const CommonArgs& args) {
    ExperimentConfig cfg = configure(args);
    if (args.seed >= 0) cfg.optimizer.multistart_seed = static_cast<std::uint64_t>(args.seed);
    const Dataset data = load_data(args);
    const DiscretizationLevel level = cfg.levels.back();
    const Vector init = cfg.init.size() > 0 ? cfg.init : midpoint_init(cfg.bounds);
    const EstimateResult result =
        minimize(cfg.model, level, cfg.fit_family, {data}, init, cfg.bounds, cfg.optimizer);
    const std::string est = out_path(args, "estimate.json");
    const std::string hist = out_path(args, "history.csv");
    write_estimate_json(est, cfg.fit_family, result);
    write_history_csv(hist, cfg.fit_family, result);
    finish_manifest(args, "estimate", {est, hist});
    std::printf("estimate: J=%.6g after %d iterations (%s) -> %s\n", result.objective,
                result.iterations, convergence_flag_name(result.flag).c_str(), est.c_str());
    return 0;
}

int run_sweep(const CommonArgs& args) {
    ExperimentConfig cfg = configure(args);
    const Dataset data = load_data(args);
    const SweepTable table = convergence_sweep(cfg, data);
    const std::string csv = out_path(args, "sweep.csv");
    write_sweep_csv(csv, table);
    finish_manifest(args, "sweep", {csv});
    int failed = 0;
    for (const auto& row : table.rows)
        if (!row.result) ++failed;
    std::printf("sweep: %zu levels, %d failed -> %s\n", table.rows.size(), failed, csv.c_str());
    return 0;
}

int run_bands(const CommonArgs& args, const std::string& estimate_path) {
    ExperimentConfig cfg = configure(args);
    if (args.seed >= 0) cfg.band_seed = static_cast<std::uint64_t>(args.seed);
    const Dataset data = load_data(args);

    TruncatedDensity fitted;
    if (!estimate_path.empty()) {
        fitted = make_density(cfg.fit_family, read_estimate_rho(estimate_path, cfg.fit_family));
    } else if (cfg.truth.family == cfg.fit_family) {
        fitted = cfg.truth; // fall back to the configured truth density
    } else {
        throw ConfigError("bands", "no --estimate file and the truth family differs from fit");
    }
    const DiscretizationLevel level = cfg.band_level ? *cfg.band_level : cfg.levels.back();
    const BandResult band = credible_band(cfg.model, level, fitted, data.u, cfg.band_coverage,
                                          cfg.band_samples, cfg.band_seed, cfg.threads);
    const std::string csv = out_path(args, "bands.csv");
    write_band_csv(csv, band);
    finish_manifest(args, "bands", {csv});
    std::printf("bands: coverage %.2f from %d samples -> %s\n", band.coverage, band.samples,
                csv.c_str());
    return 0;
}

int run_gradcheck(const CommonArgs& args, int samples) {
    ExperimentConfig cfg = configure(args);
    const Dataset data = load_data(args);
    const DiscretizationLevel level = cfg.levels.back();
    const std::uint64_t seed = args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : 1234;

    Rng rng(seed);
    const auto labels = rho_labels(cfg.fit_family);
    std::vector<GradCheckRow> rows;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const Vector rho = random_feasible_rho(cfg.bounds, rng);
        const auto [jval, adj] = objective_with_gradient(cfg.model, level, cfg.fit_family, rho,
                                                         cfg.bounds, {data}, cfg.threads);
        const Vector fd = finite_difference_gradient(cfg.model, level, cfg.fit_family, rho,
                                                     cfg.bounds, {data}, cfg.optimizer.fd_step,
                                                     cfg.threads);
        for (Eigen::Index k = 0; k < rho.size(); ++k) {
            // Entries below the finite-difference resolution eps_J / h are
            // floored so noise-level disagreements do not register.
            const double h = cfg.optimizer.fd_step * std::max(std::abs(rho[k]), 1.0);
            const double denom = std::max(
                {std::abs(adj[k]), std::abs(fd[k]), 1e-7 * std::max(1.0, jval) / h});
            GradCheckRow row;
            row.sample = s;
            row.entry = static_cast<int>(k);
            row.label = labels[k];
            row.adjoint = adj[k];
            row.finite_difference = fd[k];
            row.rel_err = std::abs(adj[k] - fd[k]) / denom;
            worst = std::max(worst, row.rel_err);
            rows.push_back(std::move(row));
        }
    }
    const std::string csv = out_path(args, "gradcheck.csv");
    write_gradcheck_csv(csv, rows);
    finish_manifest(args, "gradcheck", {csv});
    std::printf("gradcheck: %d samples, worst rel err %.3g -> %s\n", samples, worst, csv.c_str());
    return worst <= 1e-4 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"population-model estimation of random-parameter distributions"};
    app.set_version_flag("--version", "popest 0.1.0");
    app.require_subcommand(1);

    CommonArgs args;
    std::string estimate_path;
    int gradcheck_samples = 10;

    auto* simulate = app.add_subcommand("simulate", "generate an averaged synthetic dataset");
    add_common(simulate, args, false);
    auto* estimate = app.add_subcommand("estimate", "fit the density parameters to a dataset");
    add_common(estimate, args, true);
    auto* sweep = app.add_subcommand("sweep", "fit across a list of discretization levels");
    add_common(sweep, args, true);
    auto* bands = app.add_subcommand("bands", "credible band of the fitted population model");
    add_common(bands, args, true);
    bands->add_option("--estimate", estimate_path, "estimate JSON providing the fitted rho");
    auto* gradcheck = app.add_subcommand("gradcheck", "adjoint vs finite-difference gradients");
    add_common(gradcheck, args, true);
    gradcheck->add_option("--samples", gradcheck_samples, "number of random feasible points");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_simulate(args);
        if (estimate->parsed()) return run_estimate(args);
        if (sweep->parsed()) return run_sweep(args);
        if (bands->parsed()) return run_bands(args, estimate_path);
        if (gradcheck->parsed()) return run_gradcheck(args, gradcheck_samples);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

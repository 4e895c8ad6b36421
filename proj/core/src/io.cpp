#include "popest/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace popest {

using nlohmann::json;

void Dataset::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("dataset: tau must be positive");
    if (y.size() != u.size() + 1)
        throw std::invalid_argument("dataset: output length must be input length + 1");
    const double expected = horizon / tau;
    if (std::abs(expected - static_cast<double>(u.size())) > 1e-6)
        throw std::invalid_argument("dataset: horizon/tau does not match the input length");
}

namespace {

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

json require_object(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError(context + key, "missing required section");
    if (!j.at(key).is_object()) throw ConfigError(context + key, "expected an object");
    return j.at(key);
}

double require_number(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError(context + key, "missing required number");
    if (!j.at(key).is_number()) throw ConfigError(context + key, "expected a number");
    return j.at(key).get<double>();
}

std::string require_string(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError(context + key, "missing required string");
    if (!j.at(key).is_string()) throw ConfigError(context + key, "expected a string");
    return j.at(key).get<std::string>();
}

double number_or(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::uint64_t seed_or(const json& j, const std::string& key, std::uint64_t fallback) {
    return j.contains(key) ? j.at(key).get<std::uint64_t>() : fallback;
}

Vector vector_from(const json& arr, const std::string& context) {
    if (!arr.is_array()) throw ConfigError(context, "expected an array of numbers");
    Vector v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ConfigError(context, "expected an array of numbers");
        v[i] = arr[i].get<double>();
    }
    return v;
}

json vector_to(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

DiscretizationLevel level_from(const json& j, const std::string& context, int p) {
    DiscretizationLevel level;
    level.n = static_cast<int>(require_number(j, "n", context));
    if (!j.contains("m")) throw ConfigError(context + "m", "missing cell counts");
    const json& m = j.at("m");
    if (m.is_number()) {
        level.cells[0] = m.get<int>();
        level.cells[1] = m.get<int>();
    } else if (m.is_array()) {
        if (static_cast<int>(m.size()) != p)
            throw ConfigError(context + "m", "expected " + std::to_string(p) + " cell counts");
        for (int k = 0; k < p; ++k) level.cells[k] = m[k].get<int>();
    } else {
        throw ConfigError(context + "m", "expected a number or an array");
    }
    return level;
}

json level_to(const DiscretizationLevel& level, int p) {
    json j;
    j["n"] = level.n;
    json m = json::array();
    for (int k = 0; k < p; ++k) m.push_back(level.cells[k]);
    j["m"] = m;
    return j;
}

ModelSpec model_from(const json& j) {
    ModelSpec model;
    model.bc = bc_from_name(require_string(j, "bc", "model."));
    model.eta0 = require_number(j, "eta0", "model.");
    model.tau = require_number(j, "tau", "model.");
    model.horizon = require_number(j, "horizon", "model.");
    try {
        validate_model(model);
    } catch (const std::exception& e) {
        throw ConfigError("model", e.what());
    }
    return model;
}

json canonical_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("(root)", std::string("JSON parse error: ") + e.what());
    }
    return j;
}

} // namespace

ExperimentConfig load_config(const std::string& path) {
    const json j = canonical_config(path);
    ExperimentConfig cfg;

    cfg.model = model_from(require_object(j, "model", ""));

    const json truth = require_object(j, "truth", "");
    const Family truth_family = family_from_name(require_string(truth, "family", "truth."));
    if (!truth.contains("rho")) throw ConfigError("truth.rho", "missing density parameters");
    try {
        cfg.truth = make_density(truth_family, vector_from(truth.at("rho"), "truth.rho"));
    } catch (const std::exception& e) {
        throw ConfigError("truth.rho", e.what());
    }

    if (j.contains("input")) {
        const json input = j.at("input");
        const std::string kind = require_string(input, "kind", "input.");
        if (kind == "cos_burst") {
            cfg.input = cos_burst_input(cfg.model, number_or(input, "duration", 2.0));
        } else if (kind == "values") {
            cfg.input = vector_from(input.at("values"), "input.values");
            if (cfg.input.size() != cfg.model.steps())
                throw ConfigError("input.values", "length does not match horizon/tau");
        } else {
            throw ConfigError("input.kind", "expected cos_burst or values");
        }
    } else {
        cfg.input = cos_burst_input(cfg.model);
    }

    if (j.contains("data")) {
        const json data = j.at("data");
        cfg.data_samples = static_cast<int>(number_or(data, "samples", 100));
        cfg.fine_n = static_cast<int>(number_or(data, "fine_n", 128));
        cfg.data_seed = seed_or(data, "seed", 1);
        cfg.noise_sigma = number_or(data, "noise_sigma", 0.0);
        cfg.noise_seed = seed_or(data, "noise_seed", 1);
    }

    const json fit = require_object(j, "fit", "");
    cfg.fit_family = family_from_name(require_string(fit, "family", "fit."));
    const int p = param_dim(cfg.fit_family);
    cfg.bounds = default_bounds(cfg.fit_family);
    if (fit.contains("bounds")) {
        const json b = fit.at("bounds");
        if (b.contains("lower")) cfg.bounds.lower = vector_from(b.at("lower"), "fit.bounds.lower");
        if (b.contains("upper")) cfg.bounds.upper = vector_from(b.at("upper"), "fit.bounds.upper");
        cfg.bounds.eps_width = number_or(b, "eps_width", cfg.bounds.eps_width);
        if (cfg.bounds.lower.size() != rho_dim(cfg.fit_family) ||
            cfg.bounds.upper.size() != rho_dim(cfg.fit_family))
            throw ConfigError("fit.bounds", "bound length does not match the family");
        try {
            cfg.bounds.validate();
        } catch (const std::exception& e) {
            throw ConfigError("fit.bounds", e.what());
        }
    }
    if (fit.contains("init")) {
        cfg.init = vector_from(fit.at("init"), "fit.init");
        if (cfg.init.size() != rho_dim(cfg.fit_family))
            throw ConfigError("fit.init", "init length does not match the family");
    }
    if (fit.contains("levels")) {
        const json& levels = fit.at("levels");
        if (!levels.is_array() || levels.empty())
            throw ConfigError("fit.levels", "expected a nonempty array");
        for (std::size_t i = 0; i < levels.size(); ++i)
            cfg.levels.push_back(level_from(levels[i], "fit.levels.", p));
    }
    if (fit.contains("level")) {
        // A single estimation level is stored at the end of the list.
        cfg.levels.push_back(level_from(fit.at("level"), "fit.level.", p));
    }
    if (cfg.levels.empty()) throw ConfigError("fit.levels", "no estimation level given");
    cfg.warm_start = fit.contains("warm_start") && fit.at("warm_start").get<bool>();

    if (fit.contains("optimizer")) {
        const json o = fit.at("optimizer");
        cfg.optimizer.max_iters = static_cast<int>(number_or(o, "max_iters", 500));
        cfg.optimizer.grad_tol = number_or(o, "grad_tol", 1e-6);
        cfg.optimizer.armijo_c = number_or(o, "armijo_c", 1e-4);
        cfg.optimizer.backtrack = number_or(o, "backtrack", 0.5);
        cfg.optimizer.fd_step = number_or(o, "fd_step", 1e-5);
        cfg.optimizer.multistart = static_cast<int>(number_or(o, "multistart", 0));
        cfg.optimizer.multistart_seed = seed_or(o, "seed", 0);
        if (o.contains("mode")) {
            const std::string mode = o.at("mode").get<std::string>();
            if (mode == "adjoint") cfg.optimizer.grad_mode = GradientMode::Adjoint;
            else if (mode == "fd") cfg.optimizer.grad_mode = GradientMode::FiniteDifference;
            else throw ConfigError("fit.optimizer.mode", "expected adjoint or fd");
        }
    }

    if (j.contains("bands")) {
        const json b = j.at("bands");
        cfg.band_samples = static_cast<int>(number_or(b, "samples", 1000));
        cfg.band_coverage = number_or(b, "coverage", 0.75);
        cfg.band_seed = seed_or(b, "seed", 1);
        if (b.contains("level")) cfg.band_level = level_from(b.at("level"), "bands.level.", p);
    }

    try {
        validate_config(cfg);
    } catch (const std::exception& e) {
        throw ConfigError("(config)", e.what());
    }
    return cfg;
}

std::uint64_t config_hash(const std::string& path) {
    const std::string dump = canonical_config(path).dump(); // keys sorted by nlohmann
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "t,u,y\n";
    const int steps = data.steps();
    for (int jdx = 0; jdx <= steps; ++jdx) {
        const double u = jdx < steps ? data.u[jdx] : 0.0; // u applies on [t_j, t_j + tau)
        out << fmt17(jdx * data.tau) << ',' << fmt17(u) << ',' << fmt17(data.y[jdx]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,u,y", 0) != 0)
        throw IoError("dataset is missing the t,u,y header: " + path);
    std::vector<double> t, u, y;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double a, b, c;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3)
            throw IoError("malformed dataset row: " + line);
        t.push_back(a);
        u.push_back(b);
        y.push_back(c);
    }
    if (t.size() < 2) throw IoError("dataset has fewer than two rows: " + path);
    Dataset ds;
    ds.tau = t[1] - t[0];
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (std::abs(t[i] - t[i - 1] - ds.tau) > 1e-9 * std::max(1.0, std::abs(t.back())))
            throw IoError("dataset time grid is not uniform: " + path);
    }
    ds.horizon = t.back();
    ds.u = Eigen::Map<Vector>(u.data(), u.size() - 1);
    ds.y = Eigen::Map<Vector>(y.data(), y.size());
    ds.validate();
    return ds;
}

void write_dataset_sidecar(const std::string& path, const Dataset& data) {
    json j;
    j["tau"] = data.tau;
    j["horizon"] = data.horizon;
    if (data.noise) {
        j["noise"] = {{"sigma", data.noise->sigma}, {"seed", data.noise->seed}};
    }
    if (data.provenance) {
        j["provenance"] = {{"family", family_name(data.provenance->truth_family)},
                           {"rho", vector_to(data.provenance->truth_rho)},
                           {"samples", data.provenance->samples},
                           {"fine_n", data.provenance->fine_n},
                           {"seed", data.provenance->seed}};
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

void apply_dataset_sidecar(const std::string& path, Dataset& data) {
    std::ifstream in(path);
    if (!in) return; // sidecar is optional
    json j;
    in >> j;
    if (j.contains("noise"))
        data.noise = NoiseRecord{j["noise"]["sigma"].get<double>(),
                                 j["noise"]["seed"].get<std::uint64_t>()};
    if (j.contains("provenance")) {
        DataProvenance prov;
        prov.truth_family = family_from_name(j["provenance"]["family"].get<std::string>());
        prov.truth_rho = vector_from(j["provenance"]["rho"], "provenance.rho");
        prov.samples = j["provenance"]["samples"].get<int>();
        prov.fine_n = j["provenance"]["fine_n"].get<int>();
        prov.seed = j["provenance"]["seed"].get<std::uint64_t>();
        data.provenance = prov;
    }
}

void write_estimate_json(const std::string& path, Family family, const EstimateResult& result) {
    json j;
    j["family"] = family_name(family);
    j["labels"] = rho_labels(family);
    j["rho"] = vector_to(result.rho);
    j["objective"] = result.objective;
    j["iterations"] = result.iterations;
    j["convergence"] = convergence_flag_name(result.flag);
    j["reason"] = result.reason;
    j["level"] = level_to(result.level, param_dim(family));
    j["wall_seconds"] = result.wall_seconds;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

Vector read_estimate_rho(const std::string& path, Family expected_family) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open estimate file: " + path);
    json j;
    in >> j;
    if (family_from_name(j.at("family").get<std::string>()) != expected_family)
        throw IoError("estimate family does not match the configuration");
    return vector_from(j.at("rho"), "estimate.rho");
}

void write_history_csv(const std::string& path, Family family, const EstimateResult& result) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "iter,objective,pg_norm,step";
    for (const auto& label : rho_labels(family)) out << ',' << label;
    out << '\n';
    for (std::size_t i = 0; i < result.history.size(); ++i) {
        const auto& rec = result.history[i];
        out << i << ',' << fmt17(rec.objective) << ',' << fmt17(rec.pg_norm) << ','
            << fmt17(rec.step);
        for (Eigen::Index k = 0; k < rec.rho.size(); ++k) out << ',' << fmt17(rec.rho[k]);
        out << '\n';
    }
}

void write_sweep_csv(const std::string& path, const SweepTable& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int p = param_dim(table.family);
    out << "n";
    for (int k = 0; k < p; ++k) out << ",m" << (k + 1);
    for (const auto& label : rho_labels(table.family)) out << ',' << label;
    out << ",objective,iterations,convergence,error\n";
    for (const auto& row : table.rows) {
        out << row.level.n;
        for (int k = 0; k < p; ++k) out << ',' << row.level.cells[k];
        if (row.result) {
            for (Eigen::Index k = 0; k < row.result->rho.size(); ++k)
                out << ',' << fmt17(row.result->rho[k]);
            out << ',' << fmt17(row.result->objective) << ',' << row.result->iterations << ','
                << convergence_flag_name(row.result->flag) << ',';
        } else {
            for (int k = 0; k < rho_dim(table.family); ++k) out << ',';
            out << ",,," << row.error;
        }
        out << '\n';
    }
    if (table.truth_rho.size() > 0) {
        out << "true";
        for (int k = 0; k < p; ++k) out << ',';
        for (Eigen::Index k = 0; k < table.truth_rho.size(); ++k)
            out << ',' << fmt17(table.truth_rho[k]);
        out << ",,,,\n";
    }
}

void write_band_csv(const std::string& path, const BandResult& band) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "t,lower,mean,upper\n";
    for (Eigen::Index jdx = 0; jdx < band.mean.size(); ++jdx) {
        out << fmt17(jdx * band.tau) << ',' << fmt17(band.lower[jdx]) << ','
            << fmt17(band.mean[jdx]) << ',' << fmt17(band.upper[jdx]) << '\n';
    }
}

void write_gradcheck_csv(const std::string& path, const std::vector<GradCheckRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "sample,entry,label,adjoint,fd,rel_err\n";
    for (const auto& row : rows) {
        out << row.sample << ',' << row.entry << ',' << row.label << ',' << fmt17(row.adjoint)
            << ',' << fmt17(row.finite_difference) << ',' << fmt17(row.rel_err) << '\n';
    }
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    json j;
    j["schema"] = "popest-manifest-v1";
    j["command"] = manifest.command;
    j["config"] = manifest.config_path.empty() ? json() : canonical_config(manifest.config_path);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(manifest.config_hash));
    j["config_hash"] = hex;
    j["outputs"] = manifest.outputs;
    j["version"] = "0.1.0";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

Vector random_feasible_rho(const RhoBounds& bounds, Rng& rng, double margin_frac) {
    const Eigen::Index nr = bounds.lower.size();
    for (int attempt = 0; attempt < 256; ++attempt) {
        Vector rho(nr);
        for (Eigen::Index k = 0; k < nr; ++k) {
            const double w = bounds.upper[k] - bounds.lower[k];
            rho[k] = rng.uniform(bounds.lower[k] + margin_frac * w,
                                 bounds.upper[k] - margin_frac * w);
        }
        bool ok = true;
        for (const auto& [i, jdx] : bounds.orderings) {
            const double sep = margin_frac * (bounds.upper[jdx] - bounds.lower[i]);
            if (rho[i] + std::max(sep, bounds.eps_width) > rho[jdx]) ok = false;
        }
        if (ok) return rho;
    }
    return bounds.project(0.5 * (bounds.lower + bounds.upper));
}

} // namespace popest

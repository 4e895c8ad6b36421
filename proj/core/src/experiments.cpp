#include "popest/experiments.hpp"

#include "popest/parallel.hpp"
#include "popest/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace popest {

void validate_config(const ExperimentConfig& config) {
    validate_model(config.model);
    validate_density(config.truth);
    if (config.data_samples < 1) throw std::invalid_argument("config: data samples must be >= 1");
    if (config.fine_n < 2) throw std::invalid_argument("config: fine grid must have n >= 2");
    if (!(config.band_coverage > 0.0 && config.band_coverage < 1.0))
        throw std::invalid_argument("config: band coverage must lie in (0,1)");
    if (config.input.size() != config.model.steps())
        throw std::invalid_argument("config: input length does not match horizon/tau");
    const int p = param_dim(config.fit_family);
    for (const auto& level : config.levels) validate_level(level, p);
}

Vector cos_burst_input(const ModelSpec& model, double duration) {
    const int steps = model.steps();
    Vector u = Vector::Zero(steps);
    for (int j = 0; j < steps; ++j) {
        const double t = j * model.tau;
        if (t < duration) u[j] = std::abs(std::cos(t));
    }
    return u;
}

Vector midpoint_init(const RhoBounds& bounds) {
    return bounds.project(0.5 * (bounds.lower + bounds.upper));
}

Dataset generate_data(const ExperimentConfig& config) {
    validate_model(config.model);
    validate_density(config.truth);
    const auto samples = sample(config.truth, config.data_samples, config.data_seed);
    for (const auto& q : samples) {
        if (!(q[0] > 0.0) ||
            (config.model.bc == BcVariant::RobinNeumann && !(q[1] > 0.0)))
            throw std::invalid_argument("generate_data: sampled parameter violates positivity");
    }

    const int steps = static_cast<int>(config.input.size());
    std::vector<Vector> outputs(samples.size());
    parallel_for(samples.size(), config.threads, [&](std::size_t i) {
        outputs[i] =
            deterministic_simulate(config.model, config.fine_n, samples[i], config.input).y;
    });

    Dataset ds;
    ds.tau = config.model.tau;
    ds.horizon = config.model.horizon;
    ds.u = config.input;
    ds.y = Vector::Zero(steps + 1);
    for (const auto& yi : outputs) ds.y += yi;
    ds.y /= static_cast<double>(samples.size());

    if (config.noise_sigma > 0.0) {
        Rng rng(config.noise_seed);
        for (int j = 0; j <= steps; ++j) ds.y[j] += config.noise_sigma * rng.normal();
        ds.noise = NoiseRecord{config.noise_sigma, config.noise_seed};
    }
    ds.provenance = DataProvenance{config.truth.family, pack_rho(config.truth),
                                   config.data_samples, config.fine_n, config.data_seed};
    return ds;
}

SweepTable convergence_sweep(const ExperimentConfig& config, const Dataset& data) {
    validate_config(config);
    if (config.levels.empty()) throw std::invalid_argument("sweep: levels must be nonempty");

    SweepTable table;
    table.family = config.fit_family;
    if (config.truth.family == config.fit_family) table.truth_rho = pack_rho(config.truth);

    Vector init = config.init.size() > 0 ? config.init : midpoint_init(config.bounds);
    for (const auto& level : config.levels) {
        LevelEstimate row;
        row.level = level;
        try {
            EstimateResult res = minimize(config.model, level, config.fit_family, {data}, init,
                                          config.bounds, config.optimizer);
            if (config.warm_start) init = res.rho;
            row.result = std::move(res);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

BandResult credible_band(const ModelSpec& model, const DiscretizationLevel& level,
                         const TruncatedDensity& fitted, const Vector& input, double coverage,
                         int samples, std::uint64_t seed, int threads) {
    if (!(coverage >= 0.0 && coverage < 1.0))
        throw std::invalid_argument("credible_band: coverage must lie in [0,1)");
    if (samples < 1) throw std::invalid_argument("credible_band: need at least one sample");

    const GalerkinSystem sys = assemble(model, level, fitted);
    const SampledSystem sam = discretize(sys, model.tau, threads);
    const SimulationTrace trace = simulate_trace(sam, input, nullptr, threads);
    const int steps = static_cast<int>(input.size());

    const auto qs = sample(fitted, samples, seed);

    // curves(s, j): output of the block trajectory of the cell containing q_s.
    Matrix curves(samples, steps + 1);
    for (int s = 0; s < samples; ++s) {
        const int c = cell_index_of(fitted, level, qs[s]);
        curves.row(s) = sam.c_eta.transpose() * trace.states[c];
    }

    const double qlo = 0.5 * (1.0 - coverage);
    const double qhi = 0.5 * (1.0 + coverage);
    auto quantile = [](std::vector<double>& v, double q) {
        // Linear interpolation between order statistics.
        const double pos = q * (v.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - i;
        std::nth_element(v.begin(), v.begin() + i, v.end());
        const double lo = v[i];
        if (frac == 0.0 || i + 1 >= v.size()) return lo;
        const double hi = *std::min_element(v.begin() + i + 1, v.end());
        return lo + frac * (hi - lo);
    };

    BandResult band;
    band.tau = model.tau;
    band.coverage = coverage;
    band.samples = samples;
    band.mean = trace.output.y;
    band.lower = Vector::Zero(steps + 1);
    band.upper = Vector::Zero(steps + 1);
    std::vector<double> column(samples);
    for (int j = 0; j <= steps; ++j) {
        for (int s = 0; s < samples; ++s) column[s] = curves(s, j);
        std::vector<double> tmp = column;
        band.lower[j] = quantile(tmp, qlo);
        tmp = column;
        band.upper[j] = quantile(tmp, qhi);
    }
    return band;
}

} // namespace popest

#pragma once

#include "popest/dataset.hpp"
#include "popest/estimator.hpp"

#include <optional>
#include <string>
#include <vector>

namespace popest {

/// Full description of a simulation study: truth density, data-generation
/// protocol, estimation levels, optimizer options, and band settings.
struct ExperimentConfig {
    ModelSpec model;
    Vector input; // zero-order-hold input sequence u_0..u_{T-1}

    TruncatedDensity truth;
    int data_samples = 100;
    int fine_n = 128;
    std::uint64_t data_seed = 1;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 1;

    Family fit_family = Family::Uniform;
    RhoBounds bounds;
    Vector init; // empty: midpoint of the box, projected
    std::vector<DiscretizationLevel> levels;
    OptimOptions optimizer;
    bool warm_start = false; // reuse each level's estimate as the next init

    int band_samples = 1000;
    double band_coverage = 0.75;
    std::uint64_t band_seed = 1;
    std::optional<DiscretizationLevel> band_level;

    int threads = 0;
};

void validate_config(const ExperimentConfig& config);

/// u(t) = |cos t| on [0, duration), 0 afterwards, sampled on the model grid.
Vector cos_burst_input(const ModelSpec& model, double duration = 2.0);

Vector midpoint_init(const RhoBounds& bounds);

/// Draws `data_samples` parameter values from the truth density, solves the
/// fine-grid deterministic model for each, and averages the outputs pointwise
/// in time; optional additive Gaussian measurement noise.
Dataset generate_data(const ExperimentConfig& config);

struct LevelEstimate {
    DiscretizationLevel level;
    std::optional<EstimateResult> result;
    std::string error; // set when the level failed
};

struct SweepTable {
    Family family = Family::Uniform;
    std::vector<LevelEstimate> rows;
    Vector truth_rho; // empty when the truth is not expressible in the family
};

/// Runs minimize at each level against the same dataset; failures are
/// recorded per level, not fatal.
SweepTable convergence_sweep(const ExperimentConfig& config, const Dataset& data);

struct BandResult {
    double tau = 0.1;
    Vector lower;
    Vector upper;
    Vector mean;     // population-model output
    double coverage = 0.75;
    int samples = 0;
    bool heuristic = true; // pointwise-in-q evaluation of an L2-in-q state
};

/// Empirical central quantile envelope of per-sample model outputs under the
/// fitted density; each sample's curve is the block trajectory of the cell
/// containing the sampled parameter.
BandResult credible_band(const ModelSpec& model, const DiscretizationLevel& level,
                         const TruncatedDensity& fitted, const Vector& input, double coverage,
                         int samples, std::uint64_t seed, int threads = 0);

} // namespace popest

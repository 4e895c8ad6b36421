#pragma once

#include "popest/dataset.hpp"
#include "popest/estimator.hpp"
#include "popest/experiments.hpp"
#include "popest/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace popest {

/// Malformed or inconsistent configuration; `field` names the offending key.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string field_, const std::string& message)
        : std::runtime_error(field_ + ": " + message), field(std::move(field_)) {}
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses the JSON experiment configuration (schema documented in the README).
ExperimentConfig load_config(const std::string& path);

/// FNV-1a hash of the canonical (key-sorted) serialized config; stable under
/// key reordering in the source file.
std::uint64_t config_hash(const std::string& path);

// Dataset files: CSV with columns t,u,y (17 significant digits) plus a JSON
// sidecar carrying tau/horizon, noise record, and provenance.
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);
void write_dataset_sidecar(const std::string& path, const Dataset& data);
void apply_dataset_sidecar(const std::string& path, Dataset& data);

void write_estimate_json(const std::string& path, Family family, const EstimateResult& result);
void write_history_csv(const std::string& path, Family family, const EstimateResult& result);
Vector read_estimate_rho(const std::string& path, Family expected_family);

void write_sweep_csv(const std::string& path, const SweepTable& table);
void write_band_csv(const std::string& path, const BandResult& band);

struct GradCheckRow {
    int sample = 0;
    int entry = 0;
    std::string label;
    double adjoint = 0.0;
    double finite_difference = 0.0;
    double rel_err = 0.0;
};
void write_gradcheck_csv(const std::string& path, const std::vector<GradCheckRow>& rows);

struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t config_hash = 0;
    std::vector<std::string> outputs;
};
void write_manifest(const std::string& path, const RunManifest& manifest);

/// Draws a feasible rho uniformly inside the box, kept away from the box
/// faces and ordering boundaries by `margin_frac` of the local widths.
Vector random_feasible_rho(const RhoBounds& bounds, Rng& rng, double margin_frac = 0.05);

} // namespace popest

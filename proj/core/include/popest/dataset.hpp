#pragma once

#include "popest/density.hpp"
#include "popest/types.hpp"

#include <cstdint>
#include <optional>

namespace popest {

struct NoiseRecord {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// How a synthetic dataset was produced (written to the JSON sidecar).
struct DataProvenance {
    Family truth_family = Family::Uniform;
    Vector truth_rho;
    int samples = 0;
    int fine_n = 0;
    std::uint64_t seed = 0;
};

/// One observation episode: zero-order-hold inputs u_0..u_{T-1} and aggregate
/// outputs y_0..y_T on the uniform grid t_j = j tau.
struct Dataset {
    Vector u;
    Vector y;
    double tau = 0.1;
    double horizon = 20.0;
    std::optional<NoiseRecord> noise;
    std::optional<DataProvenance> provenance;

    int steps() const { return static_cast<int>(u.size()); }
    void validate() const;
};

} // namespace popest

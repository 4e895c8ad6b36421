#pragma once

#include "popest/density.hpp"
#include "popest/fem1d.hpp"
#include "popest/types.hpp"

#include <vector>

namespace popest {

/// Discretization level N: spatial subintervals n plus parameter-cell counts
/// per axis (m for p = 1, (m1, m2) for p = 2).
struct DiscretizationLevel {
    int n = 2;
    std::array<int, 2> cells{1, 1};

    int cell_count(int dim) const {
        int total = 1;
        for (int k = 0; k < dim; ++k) total *= cells[k];
        return total;
    }
};

void validate_level(const DiscretizationLevel& level, int dim);

/// Scalar weights multiplying the shared spatial factors in one parameter
/// cell: M_j = mass * M_eta, K_j = k_diff * K_diff + mass * K_bdry,
/// B_j = input * b_eta, C_j = mass * c_eta^T.
struct CellWeights {
    double mass = 0.0;
    double k_diff = 0.0;
    double input = 0.0;
};

/// Parameter-averaged Galerkin operators in block-decoupled form: disjoint
/// piecewise-constant parameter cells never couple, so the global matrices
/// are block-diagonal with one dof(n)-sized block per cell.
struct GalerkinSystem {
    ModelSpec model;
    DiscretizationLevel level;
    TruncatedDensity density;
    SpatialMesh mesh;
    SpatialOperators ops;

    std::vector<Box> cells;
    std::vector<CellWeights> weights;
    std::vector<bool> degenerate; // cell mass below the weight floor

    int block_count() const { return static_cast<int>(cells.size()); }
    int block_dim() const { return mesh.dofs(); }

    Matrix mass_block(int j) const;
    Matrix stiffness_block(int j) const;
    Vector input_block(int j) const;
    RowVector output_block(int j) const;
};

/// Mass weights below this are treated as exact zeros; the cell keeps its
/// rows so matrix shapes are stable across optimizer iterates.
constexpr double kCellMassFloor = 1e-300;

GalerkinSystem assemble(const ModelSpec& model, const DiscretizationLevel& level,
                        const TruncatedDensity& density);

/// Per-rho-entry derivatives of every cell weight, including the motion of
/// the (support-anchored) cell endpoints with the support bounds.
struct SystemPartials {
    std::vector<std::vector<CellWeights>> d; // [rho_entry][cell]
    int rho_entries() const { return static_cast<int>(d.size()); }
};

SystemPartials assemble_partials(const GalerkinSystem& system);

/// Cell boxes of the uniform partition of the density support.
std::vector<Box> partition_cells(const TruncatedDensity& density,
                                 const DiscretizationLevel& level);

/// Linear cell index of a parameter point under the partition (clamped).
int cell_index_of(const TruncatedDensity& density, const DiscretizationLevel& level,
                  const ParamPoint& q);

} // namespace popest

#include "popest/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace popest {

void validate_level(const DiscretizationLevel& level, int dim) {
    if (level.n < 2) throw std::invalid_argument("level: n must be >= 2");
    for (int k = 0; k < dim; ++k) {
        if (level.cells[k] < 1) throw std::invalid_argument("level: cell counts must be >= 1");
    }
}

Matrix GalerkinSystem::mass_block(int j) const { return weights[j].mass * ops.mass; }

Matrix GalerkinSystem::stiffness_block(int j) const {
    return weights[j].k_diff * ops.k_diff + weights[j].mass * ops.k_bdry;
}

Vector GalerkinSystem::input_block(int j) const { return weights[j].input * ops.input; }

RowVector GalerkinSystem::output_block(int j) const {
    return weights[j].mass * ops.output.transpose();
}

std::vector<Box> partition_cells(const TruncatedDensity& density,
                                 const DiscretizationLevel& level) {
    const int p = param_dim(density.family);
    std::vector<Box> cells;
    auto axis_edge = [&](int axis, int j) {
        const double a = density.support.lo[axis];
        const double b = density.support.hi[axis];
        const int m = level.cells[axis];
        return a + (b - a) * (static_cast<double>(j) / m);
    };
    if (p == 1) {
        cells.reserve(level.cells[0]);
        for (int j = 0; j < level.cells[0]; ++j)
            cells.push_back(Box::interval(axis_edge(0, j), axis_edge(0, j + 1)));
    } else {
        cells.reserve(level.cell_count(2));
        for (int j2 = 0; j2 < level.cells[1]; ++j2) {
            for (int j1 = 0; j1 < level.cells[0]; ++j1) {
                cells.push_back(Box::rect(axis_edge(0, j1), axis_edge(0, j1 + 1),
                                          axis_edge(1, j2), axis_edge(1, j2 + 1)));
            }
        }
    }
    return cells;
}

int cell_index_of(const TruncatedDensity& density, const DiscretizationLevel& level,
                  const ParamPoint& q) {
    const int p = param_dim(density.family);
    int idx[2] = {0, 0};
    for (int axis = 0; axis < p; ++axis) {
        const double a = density.support.lo[axis];
        const double w = density.support.width(axis);
        const int m = level.cells[axis];
        int j = static_cast<int>(std::floor((q[axis] - a) / w * m));
        idx[axis] = std::clamp(j, 0, m - 1);
    }
    return p == 1 ? idx[0] : idx[1] * level.cells[0] + idx[0];
}

namespace {

void check_compatibility(const ModelSpec& model, const TruncatedDensity& density) {
    const int p = param_dim(density.family);
    if (model.bc == BcVariant::DirichletNeumann && p != 1)
        throw std::invalid_argument("DirichletNeumann expects one random parameter (q1)");
    if (model.bc == BcVariant::RobinNeumann && p != 2)
        throw std::invalid_argument("RobinNeumann expects two random parameters (q1, q2)");
    // Diffusivity (and gain) must stay nonnegative on the support.
    for (int axis = 0; axis < p; ++axis) {
        if (density.support.lo[axis] < 0.0)
            throw std::invalid_argument("density support must not extend below zero");
    }
}

CellWeights weights_from_moments(const CellMoments& cm, int p) {
    CellWeights w;
    w.mass = cm.mass;
    w.k_diff = cm.first[0];
    w.input = p == 1 ? cm.mass : cm.first[1];
    return w;
}

} // namespace

GalerkinSystem assemble(const ModelSpec& model, const DiscretizationLevel& level,
                        const TruncatedDensity& density) {
    validate_model(model);
    validate_density(density);
    const int p = param_dim(density.family);
    validate_level(level, p);
    check_compatibility(model, density);

    GalerkinSystem sys;
    sys.model = model;
    sys.level = level;
    sys.density = density;
    sys.mesh = SpatialMesh{level.n, model.bc};
    sys.ops = spatial_operators(sys.mesh, model.eta0);
    sys.cells = partition_cells(density, level);

    const DensityWorkspace ws = make_workspace(density);
    sys.weights.resize(sys.cells.size());
    sys.degenerate.assign(sys.cells.size(), false);
    for (std::size_t j = 0; j < sys.cells.size(); ++j) {
        const double mass = cell_mass(density, ws, sys.cells[j]);
        if (!(mass >= kCellMassFloor)) {
            sys.weights[j] = CellWeights{0.0, 0.0, 0.0};
            sys.degenerate[j] = true;
            continue;
        }
        CellWeights w;
        w.mass = mass;
        w.k_diff = cell_first_moment(density, ws, sys.cells[j], 0);
        w.input = p == 1 ? mass : cell_first_moment(density, ws, sys.cells[j], 1);
        sys.weights[j] = w;
    }
    return sys;
}

SystemPartials assemble_partials(const GalerkinSystem& system) {
    const TruncatedDensity& density = system.density;
    const Family family = density.family;
    const int p = param_dim(family);
    const int nr = rho_dim(family);
    const int ncells = system.block_count();

    const DensityWorkspace ws = make_workspace(density);

    SystemPartials out;
    out.d.assign(nr, std::vector<CellWeights>(ncells));

    // Cell endpoints are affine in the support bounds: on each axis, cell j of
    // m spans [A + j w/m, A + (j+1) w/m] with w = B - A.
    for (int c = 0; c < ncells; ++c) {
        if (system.degenerate[c]) continue;
        CellGeometryJacobian geo;
        geo.d_lo = Matrix::Zero(p, nr);
        geo.d_hi = Matrix::Zero(p, nr);
        int rest = c;
        for (int axis = 0; axis < p; ++axis) {
            const int m = system.level.cells[axis];
            const int j = rest % m;
            rest /= m;
            const int ilo = support_bound_rho_index(family, axis, 0);
            const int ihi = support_bound_rho_index(family, axis, 1);
            const double frac_lo = static_cast<double>(j) / m;
            const double frac_hi = static_cast<double>(j + 1) / m;
            if (ilo >= 0) {
                geo.d_lo(axis, ilo) = 1.0 - frac_lo;
                geo.d_hi(axis, ilo) = 1.0 - frac_hi;
            }
            if (ihi >= 0) {
                geo.d_lo(axis, ihi) = frac_lo;
                geo.d_hi(axis, ihi) = frac_hi;
            }
        }
        const CellMoments cm = cell_moments_with_partials(density, ws, system.cells[c], geo);
        for (int k = 0; k < nr; ++k) {
            CellWeights dw;
            dw.mass = cm.d_mass[k];
            dw.k_diff = cm.d_first(0, k);
            dw.input = p == 1 ? cm.d_mass[k] : cm.d_first(1, k);
            out.d[k][c] = dw;
        }
    }
    return out;
}

} // namespace popest

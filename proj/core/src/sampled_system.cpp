#include "popest/sampled_system.hpp"

#include "popest/expm.hpp"
#include "popest/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace popest {

namespace {

// b_hat = ∫_0^tau e^{As} ds b via exp([[A, b],[0, 0]] tau): the top-right
// column of the augmented exponential.
Vector bhat_augmented(const Matrix& a, const Vector& b, double tau) {
    const Eigen::Index d = a.rows();
    Matrix aug = Matrix::Zero(d + 1, d + 1);
    aug.topLeftCorner(d, d) = a;
    aug.topRightCorner(d, 1) = b;
    const Matrix e = matrix_exponential(aug * tau);
    return e.topRightCorner(d, 1);
}

} // namespace

SampledBlock make_sampled_block(const Matrix& a, const Vector& b_state, double tau,
                                double out_weight, bool degenerate) {
    SampledBlock blk;
    blk.a = a;
    blk.b_state = b_state;
    blk.a_hat = matrix_exponential(a * tau);
    blk.a_lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(a);
    blk.a_invertible = blk.a_lu->rcond() > kResolventRcondFloor;
    if (blk.a_invertible) {
        blk.b_hat = (blk.a_hat - Matrix::Identity(a.rows(), a.cols())) * blk.a_lu->solve(b_state);
    } else {
        blk.b_hat = bhat_augmented(a, b_state, tau);
    }
    blk.out_weight = out_weight;
    blk.degenerate = degenerate;
    return blk;
}

SampledSystem discretize(const GalerkinSystem& system, double tau, int threads) {
    if (!(tau > 0.0)) throw std::invalid_argument("discretize: tau must be positive");
    SampledSystem out;
    out.model = system.model;
    out.level = system.level;
    out.tau = tau;
    out.c_eta = system.ops.output;

    Eigen::PartialPivLU<Matrix> mass_lu(system.ops.mass);
    if (mass_lu.rcond() < 1e-14)
        throw AssemblyDegenerate("discretize: spatial mass matrix is singular");
    out.s_diff = mass_lu.solve(system.ops.k_diff);
    out.m_inv_b = mass_lu.solve(system.ops.input);
    const bool robin = system.model.bc == BcVariant::RobinNeumann;
    const Matrix s_bdry = robin ? Matrix(mass_lu.solve(system.ops.k_bdry))
                                : Matrix(Matrix::Zero(out.s_diff.rows(), out.s_diff.cols()));

    const int ncells = system.block_count();
    out.blocks.resize(ncells);
    parallel_for(ncells, threads, [&](std::size_t j) {
        const auto& w = system.weights[j];
        double qbar, input_ratio, out_weight;
        if (system.degenerate[j]) {
            // Zero-mass cell: keep well-defined dynamics at the cell midpoint,
            // contribute nothing to input or output.
            qbar = 0.5 * (system.cells[j].lo[0] + system.cells[j].hi[0]);
            input_ratio = 0.0;
            out_weight = 0.0;
        } else {
            qbar = w.k_diff / w.mass;
            input_ratio = w.input / w.mass;
            out_weight = w.mass;
            if (!std::isfinite(qbar) || !std::isfinite(input_ratio))
                throw AssemblyDegenerate("discretize: cell " + std::to_string(j) +
                                         " has a singular mass block");
        }
        const Matrix a = robin ? Matrix(-qbar * out.s_diff - s_bdry)
                               : Matrix(-qbar * out.s_diff);
        out.blocks[j] = make_sampled_block(a, input_ratio * out.m_inv_b, tau, out_weight,
                                   system.degenerate[j]);
    });
    return out;
}

OutputSeries simulate(const SampledSystem& sampled, const Vector& inputs, int threads) {
    const int steps = static_cast<int>(inputs.size());
    const int d = sampled.dof();
    OutputSeries out;
    out.tau = sampled.tau;
    out.y = Vector::Zero(steps + 1);

    std::vector<Vector> partial(sampled.cell_count());
    parallel_for(sampled.cell_count(), threads, [&](std::size_t c) {
        const auto& blk = sampled.blocks[c];
        Vector yc = Vector::Zero(steps + 1);
        if (blk.out_weight != 0.0) {
            Vector x = Vector::Zero(d);
            const Vector cw = blk.out_weight * sampled.c_eta;
            yc[0] = 0.0;
            for (int j = 0; j < steps; ++j) {
                x = blk.a_hat * x + blk.b_hat * inputs[j];
                yc[j + 1] = cw.dot(x);
            }
        }
        partial[c] = std::move(yc);
    });
    for (int c = 0; c < sampled.cell_count(); ++c) out.y += partial[c];
    return out;
}

SimulationTrace simulate_trace(const SampledSystem& sampled, const Vector& inputs,
                               const std::vector<Vector>* x0, int threads) {
    const int steps = static_cast<int>(inputs.size());
    const int d = sampled.dof();
    if (x0 && static_cast<int>(x0->size()) != sampled.cell_count())
        throw std::invalid_argument("simulate: initial state count does not match cells");

    SimulationTrace trace;
    trace.output.tau = sampled.tau;
    trace.output.y = Vector::Zero(steps + 1);
    trace.states.resize(sampled.cell_count());

    parallel_for(sampled.cell_count(), threads, [&](std::size_t c) {
        const auto& blk = sampled.blocks[c];
        Matrix xs(d, steps + 1);
        Vector x = x0 ? (*x0)[c] : Vector::Zero(d);
        xs.col(0) = x;
        for (int j = 0; j < steps; ++j) {
            x = blk.a_hat * x + blk.b_hat * inputs[j];
            xs.col(j + 1) = x;
        }
        trace.states[c] = std::move(xs);
    });
    for (int c = 0; c < sampled.cell_count(); ++c) {
        const auto& blk = sampled.blocks[c];
        if (blk.out_weight == 0.0) continue;
        trace.output.y +=
            (blk.out_weight * sampled.c_eta.transpose() * trace.states[c]).transpose();
    }
    return trace;
}

SampledBlock deterministic_block(const ModelSpec& model, int n, const ParamPoint& q, double tau) {
    const bool robin = model.bc == BcVariant::RobinNeumann;
    if (!(q[0] > 0.0)) throw std::invalid_argument("deterministic block needs q1 > 0");
    if (robin && !(q[1] > 0.0)) throw std::invalid_argument("deterministic block needs q2 > 0");
    const SpatialMesh mesh{n, model.bc};
    const SpatialOperators ops = spatial_operators(mesh, model.eta0);
    Eigen::PartialPivLU<Matrix> mass_lu(ops.mass);
    const Matrix a = robin ? Matrix(-q[0] * mass_lu.solve(ops.k_diff) - mass_lu.solve(ops.k_bdry))
                           : Matrix(-q[0] * mass_lu.solve(ops.k_diff));
    const double gain = robin ? q[1] : 1.0;
    return make_sampled_block(a, gain * mass_lu.solve(ops.input), tau, 1.0, false);
}

OutputSeries deterministic_simulate(const ModelSpec& model, int n, const ParamPoint& q,
                                    const Vector& inputs) {
    const SampledBlock blk = deterministic_block(model, n, q, model.tau);
    const SpatialMesh mesh{n, model.bc};
    const Vector c = spatial_output_vector(mesh, model.eta0);
    const int steps = static_cast<int>(inputs.size());
    OutputSeries out;
    out.tau = model.tau;
    out.y = Vector::Zero(steps + 1);
    Vector x = Vector::Zero(mesh.dofs());
    for (int j = 0; j < steps; ++j) {
        x = blk.a_hat * x + blk.b_hat * inputs[j];
        out.y[j + 1] = c.dot(x);
    }
    return out;
}

} // namespace popest

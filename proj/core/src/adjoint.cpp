#include "popest/adjoint.hpp"

#include "popest/expm.hpp"
#include "popest/parallel.hpp"

#include <stdexcept>

namespace popest {

namespace {

// d(∫_0^tau e^{As} ds) b via the 2d+1 augmented exponential
// exp([[A, dA, 0],[0, A, b],[0, 0, 0]] tau): its top-right column.
Vector dphi1_times_b(const Matrix& a, const Matrix& da, const Vector& b, double tau) {
    const Eigen::Index d = a.rows();
    Matrix aug = Matrix::Zero(2 * d + 1, 2 * d + 1);
    aug.topLeftCorner(d, d) = a;
    aug.block(0, d, d, d) = da;
    aug.block(d, d, d, d) = a;
    aug.block(d, 2 * d, d, 1) = b;
    return matrix_exponential(aug * tau).topRightCorner(d, 1);
}

// Phi1 = ∫_0^tau e^{As} ds.
Matrix phi1(const Matrix& a, double tau) {
    const Eigen::Index d = a.rows();
    Matrix aug = Matrix::Zero(2 * d, 2 * d);
    aug.topLeftCorner(d, d) = a;
    aug.topRightCorner(d, d) = Matrix::Identity(d, d);
    return matrix_exponential(aug * tau).topRightCorner(d, d);
}

void check_lengths(const SampledSystem& sampled, const Dataset& data,
                   const SimulationTrace& trace) {
    const int steps = data.steps();
    if (data.y.size() != steps + 1)
        throw std::invalid_argument("gradient: dataset output length must be steps + 1");
    if (trace.states.empty() ||
        static_cast<int>(trace.states.size()) != sampled.cell_count() ||
        trace.states[0].cols() != steps + 1)
        throw std::invalid_argument("gradient: trace does not match dataset inputs");
}

} // namespace

Matrix sensitivity_exponential(const Matrix& a, const Matrix& da, double tau) {
    const Eigen::Index d = a.rows();
    Matrix aug = Matrix::Zero(2 * d, 2 * d);
    aug.topLeftCorner(d, d) = a;
    aug.topRightCorner(d, d) = da;
    aug.bottomRightCorner(d, d) = a;
    return matrix_exponential(aug * tau).topRightCorner(d, d);
}

SensitivityTensor sensitivity_blocks(const GalerkinSystem& system, const SampledSystem& sampled,
                                     const SystemPartials& partials, double tau, int threads) {
    const int nr = partials.rho_entries();
    const int ncells = sampled.cell_count();
    const int d = sampled.dof();

    SensitivityTensor sens;
    sens.d_a_hat.assign(nr, std::vector<Matrix>(ncells));
    sens.d_b_hat.assign(nr, std::vector<Vector>(ncells));
    sens.d_out_weight.assign(nr, std::vector<double>(ncells, 0.0));

    // Flatten (rho, cell) pairs for the parallel loop.
    parallel_for(static_cast<std::size_t>(nr) * ncells, threads, [&](std::size_t idx) {
        const int k = static_cast<int>(idx / ncells);
        const int c = static_cast<int>(idx % ncells);
        const auto& blk = sampled.blocks[c];
        if (blk.degenerate) {
            sens.d_a_hat[k][c] = Matrix::Zero(d, d);
            sens.d_b_hat[k][c] = Vector::Zero(d);
            return;
        }
        const auto& w = system.weights[c];
        const auto& dw = partials.d[k][c];
        // qbar = k_diff / mass; input_ratio = input / mass.
        const double dqbar = (dw.k_diff * w.mass - w.k_diff * dw.mass) / (w.mass * w.mass);
        const double dinput = (dw.input * w.mass - w.input * dw.mass) / (w.mass * w.mass);
        const Matrix da = -dqbar * sampled.s_diff;
        const Vector db_state = dinput * sampled.m_inv_b;

        Matrix da_hat;
        if (dqbar == 0.0) {
            da_hat = Matrix::Zero(d, d);
        } else {
            da_hat = sensitivity_exponential(blk.a, da, tau);
        }

        Vector db_hat;
        if (blk.a_invertible) {
            // b_hat = (a_hat - I) A^{-1} b_state; product rule with
            // d(A^{-1}) = -A^{-1} dA A^{-1}.
            const Vector t = blk.a_lu->solve(blk.b_state);
            const Matrix ahat_m_i = blk.a_hat - Matrix::Identity(d, d);
            db_hat = da_hat * t;
            if (dqbar != 0.0) db_hat -= ahat_m_i * blk.a_lu->solve((da * t).eval());
            db_hat += ahat_m_i * blk.a_lu->solve(db_state);
        } else {
            db_hat = dphi1_times_b(blk.a, da, blk.b_state, tau) + phi1(blk.a, tau) * db_state;
        }

        sens.d_a_hat[k][c] = std::move(da_hat);
        sens.d_b_hat[k][c] = std::move(db_hat);
        sens.d_out_weight[k][c] = dw.mass;
    });
    return sens;
}

Vector adjoint_gradient(const SampledSystem& sampled, const SensitivityTensor& sens,
                        const Dataset& data, const SimulationTrace& trace) {
    check_lengths(sampled, data, trace);
    const int nr = sens.rho_entries();
    const int ncells = sampled.cell_count();
    const int d = sampled.dof();
    const int steps = data.steps();

    const Vector residual = 2.0 * (trace.output.y - data.y); // 2 r_j

    Vector grad = Vector::Zero(nr);
    for (int c = 0; c < ncells; ++c) {
        const auto& blk = sampled.blocks[c];
        const Matrix& xs = trace.states[c];
        const Vector cw = blk.out_weight * sampled.c_eta;

        // One backward sweep accumulating the contractions that the per-rho
        // sensitivities multiply into: W = Σ_j z_j x_{j-1}^T, wu = Σ_j z_j u_{j-1},
        // sx = Σ_j 2 r_j x_j.
        Matrix w_acc = Matrix::Zero(d, d);
        Vector wu = Vector::Zero(d);
        Vector sx = Vector::Zero(d);
        for (int j = 0; j <= steps; ++j) sx += residual[j] * xs.col(j);

        Vector z = residual[steps] * cw; // terminal adjoint z_T = v_T
        const Matrix ahat_t = blk.a_hat.transpose();
        for (int j = steps; j >= 1; --j) {
            w_acc.noalias() += z * xs.col(j - 1).transpose();
            wu.noalias() += z * data.u[j - 1];
            if (j > 1) z = ahat_t * z + residual[j - 1] * cw;
        }

        const double c_dot_sx = sampled.c_eta.dot(sx);
        for (int k = 0; k < nr; ++k) {
            double g = sens.d_a_hat[k][c].cwiseProduct(w_acc).sum();
            g += sens.d_b_hat[k][c].dot(wu);
            g += sens.d_out_weight[k][c] * c_dot_sx;
            grad[k] += g;
        }
    }
    return grad;
}

Vector forward_gradient(const SampledSystem& sampled, const SensitivityTensor& sens,
                        const Dataset& data, const SimulationTrace& trace) {
    check_lengths(sampled, data, trace);
    const int nr = sens.rho_entries();
    const int ncells = sampled.cell_count();
    const int d = sampled.dof();
    const int steps = data.steps();

    const Vector residual = 2.0 * (trace.output.y - data.y);

    Vector grad = Vector::Zero(nr);
    for (int k = 0; k < nr; ++k) {
        // dy_j accumulated across cells, then contracted with the residuals.
        Vector dy = Vector::Zero(steps + 1);
        for (int c = 0; c < ncells; ++c) {
            const auto& blk = sampled.blocks[c];
            const Matrix& xs = trace.states[c];
            const Vector cw = blk.out_weight * sampled.c_eta;
            const Vector dcw = sens.d_out_weight[k][c] * sampled.c_eta;
            Vector dx = Vector::Zero(d);
            dy[0] += dcw.dot(xs.col(0));
            for (int j = 0; j < steps; ++j) {
                dx = blk.a_hat * dx + sens.d_a_hat[k][c] * xs.col(j) +
                     sens.d_b_hat[k][c] * data.u[j];
                dy[j + 1] += dcw.dot(xs.col(j + 1)) + cw.dot(dx);
            }
        }
        grad[k] = residual.dot(dy);
    }
    return grad;
}

} // namespace popest

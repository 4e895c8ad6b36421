#pragma once

#include "popest/assembly.hpp"
#include "popest/types.hpp"

#include <Eigen/LU>

#include <memory>
#include <vector>

namespace popest {

/// Exact zero-order-hold discretization of one parameter-cell block:
/// A = -M_j^{-1} K_j, a_hat = e^{A tau}, b_hat = ∫_0^tau e^{As} ds M_j^{-1} B_j.
struct SampledBlock {
    Matrix a;       // continuous state matrix
    Vector b_state; // M^{-1} B input vector of the first-order form
    Matrix a_hat;
    Vector b_hat;
    std::shared_ptr<Eigen::PartialPivLU<Matrix>> a_lu;
    bool a_invertible = true; // rcond above threshold: resolvent formula used
    double out_weight = 0.0;  // f1(cell): weight of c_eta in the output sum
    bool degenerate = false;
};

struct SampledSystem {
    ModelSpec model;
    DiscretizationLevel level;
    double tau = 0.1;
    Vector c_eta;   // spatial output functional
    Matrix s_diff;  // M^{-1} K_diff, shared across cells
    Vector m_inv_b; // M^{-1} b_eta, shared across cells
    std::vector<SampledBlock> blocks;

    int dof() const { return static_cast<int>(c_eta.size()); }
    int cell_count() const { return static_cast<int>(blocks.size()); }
};

struct AssemblyDegenerate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Condition threshold below which b_hat falls back to the augmented
/// exponential identity instead of the resolvent formula.
constexpr double kResolventRcondFloor = 1e-12;

/// Discretizes one continuous block (A, b): a_hat = e^{A tau} and b_hat by
/// the resolvent formula (A - I)A^{-1}b when A is safely invertible, else by
/// the augmented exponential.
SampledBlock make_sampled_block(const Matrix& a, const Vector& b_state, double tau,
                                double out_weight = 1.0, bool degenerate = false);

SampledSystem discretize(const GalerkinSystem& system, double tau, int threads = 0);

struct OutputSeries {
    double tau = 0.1;
    Vector y; // y_0 .. y_T

    double time(int j) const { return j * tau; }
};

struct SimulationTrace {
    OutputSeries output;
    std::vector<Matrix> states; // per cell: dof x (steps + 1)
};

/// Advances the per-cell recurrences x_{j+1} = a_hat x_j + b_hat u_j from
/// x_0 = 0 (or the supplied per-cell initial states) and reduces the output
/// in ascending cell order.
OutputSeries simulate(const SampledSystem& sampled, const Vector& inputs, int threads = 0);
SimulationTrace simulate_trace(const SampledSystem& sampled, const Vector& inputs,
                               const std::vector<Vector>* x0 = nullptr, int threads = 0);

/// Single-sample model: the density collapsed to a point mass at q.
OutputSeries deterministic_simulate(const ModelSpec& model, int n, const ParamPoint& q,
                                    const Vector& inputs);

/// The deterministic sampled block at parameter q (used by credible bands and
/// the data-generation oracle).
SampledBlock deterministic_block(const ModelSpec& model, int n, const ParamPoint& q, double tau);

} // namespace popest

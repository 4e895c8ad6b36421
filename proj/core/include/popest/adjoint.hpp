#pragma once

#include "popest/assembly.hpp"
#include "popest/dataset.hpp"
#include "popest/sampled_system.hpp"
#include "popest/types.hpp"

#include <vector>

namespace popest {

/// Derivatives of the discrete-time block operators with respect to every rho
/// entry. d a_hat is obtained from the augmented block exponential
/// exp([[A, dA],[0, A]] tau) whose top-right block solves the sensitivity ODE.
struct SensitivityTensor {
    std::vector<std::vector<Matrix>> d_a_hat;     // [rho][cell]
    std::vector<std::vector<Vector>> d_b_hat;     // [rho][cell]
    std::vector<std::vector<double>> d_out_weight;// [rho][cell]

    int rho_entries() const { return static_cast<int>(d_a_hat.size()); }
};

/// Psi(tau) = d/d rho e^{A tau} for a direction dA, read off the top-right
/// block of exp([[A, dA],[0, A]] tau).
Matrix sensitivity_exponential(const Matrix& a, const Matrix& da, double tau);

SensitivityTensor sensitivity_blocks(const GalerkinSystem& system, const SampledSystem& sampled,
                                     const SystemPartials& partials, double tau, int threads = 0);

/// Exact gradient of the squared-residual objective for one dataset via the
/// backward adjoint recursion z_{j-1} = a_hat^T z_j + v_{j-1},
/// v_j = 2 C^T (C x_j - y~_j); the trace must come from simulate_trace under
/// the dataset inputs.
Vector adjoint_gradient(const SampledSystem& sampled, const SensitivityTensor& sens,
                        const Dataset& data, const SimulationTrace& trace);

/// Same derivative by forward sensitivity propagation; kept as an independent
/// algebraic route for cross-checks on small instances.
Vector forward_gradient(const SampledSystem& sampled, const SensitivityTensor& sens,
                        const Dataset& data, const SimulationTrace& trace);

} // namespace popest

#pragma once

#include "popest/adjoint.hpp"
#include "popest/assembly.hpp"
#include "popest/dataset.hpp"
#include "popest/density.hpp"
#include "popest/sampled_system.hpp"

#include <string>
#include <vector>

namespace popest {

enum class GradientMode { Adjoint, FiniteDifference };

struct OptimOptions {
    int max_iters = 500;
    double grad_tol = 1e-6;    // on the projected-gradient norm
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_halvings = 60;
    double step_collapse = 1e-14;
    GradientMode grad_mode = GradientMode::Adjoint;
    double fd_step = 1e-5; // relative step for finite-difference gradients
    int multistart = 0;    // additional random feasible starts
    std::uint64_t multistart_seed = 0;
    int threads = 0;
};

enum class ConvergenceFlag { GradientTolerance, StepCollapse, MaxIterations, Stalled };

std::string convergence_flag_name(ConvergenceFlag flag);

struct IterationRecord {
    Vector rho;
    double objective = 0.0;
    double pg_norm = 0.0;
    double step = 0.0;
};

struct EstimateResult {
    Vector rho;
    double objective = 0.0;
    int iterations = 0;
    std::vector<IterationRecord> history;
    ConvergenceFlag flag = ConvergenceFlag::MaxIterations;
    std::string reason;
    DiscretizationLevel level;
    double wall_seconds = 0.0;
};

/// J^N(rho) = sum_i sum_j |y^N_{i,j} - y~_{i,j}|^2. Throws std::domain_error
/// when rho is infeasible; the objective never projects silently.
double objective(const ModelSpec& model, const DiscretizationLevel& level, Family family,
                 const Vector& rho, const RhoBounds& bounds, const std::vector<Dataset>& data,
                 int threads = 0);

/// Objective and its exact adjoint gradient at rho.
std::pair<double, Vector> objective_with_gradient(const ModelSpec& model,
                                                  const DiscretizationLevel& level, Family family,
                                                  const Vector& rho, const RhoBounds& bounds,
                                                  const std::vector<Dataset>& data,
                                                  int threads = 0);

/// Central finite differences of the objective, bound-aware (steps shrink near
/// the box so every evaluation stays feasible).
Vector finite_difference_gradient(const ModelSpec& model, const DiscretizationLevel& level,
                                  Family family, const Vector& rho, const RhoBounds& bounds,
                                  const std::vector<Dataset>& data, double rel_step = 1e-5,
                                  int threads = 0);

/// Projected-gradient descent with Armijo backtracking over the box and
/// ordering constraints; the objective history is nonincreasing by
/// construction.
EstimateResult minimize(const ModelSpec& model, const DiscretizationLevel& level, Family family,
                        const std::vector<Dataset>& data, const Vector& init,
                        const RhoBounds& bounds, const OptimOptions& options = {});

} // namespace popest

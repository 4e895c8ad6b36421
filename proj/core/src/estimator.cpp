#include "popest/estimator.hpp"

#include "popest/parallel.hpp"
#include "popest/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace popest {

namespace {

void validate_inputs(const ModelSpec& model, const std::vector<Dataset>& data) {
    if (data.empty()) throw std::invalid_argument("estimator: no datasets given");
    for (const auto& ds : data) {
        ds.validate();
        if (std::abs(ds.tau - model.tau) > 1e-12 * std::max(1.0, model.tau))
            throw std::invalid_argument("estimator: dataset tau does not match the model");
    }
}

struct Evaluation {
    double j = 0.0;
    GalerkinSystem sys;
    SampledSystem sam;
    std::vector<SimulationTrace> traces;
};

Evaluation evaluate(const ModelSpec& model, const DiscretizationLevel& level, Family family,
                    const Vector& rho, const std::vector<Dataset>& data, int threads,
                    bool keep_traces) {
    Evaluation ev;
    ev.sys = assemble(model, level, make_density(family, rho));
    ev.sam = discretize(ev.sys, model.tau, threads);
    ev.j = 0.0;
    if (keep_traces) ev.traces.reserve(data.size());
    for (const auto& ds : data) {
        if (keep_traces) {
            ev.traces.push_back(simulate_trace(ev.sam, ds.u, nullptr, threads));
            ev.j += (ev.traces.back().output.y - ds.y).squaredNorm();
        } else {
            ev.j += (simulate(ev.sam, ds.u, threads).y - ds.y).squaredNorm();
        }
    }
    return ev;
}

Vector gradient_of(const Evaluation& ev, const std::vector<Dataset>& data, int threads) {
    const SystemPartials partials = assemble_partials(ev.sys);
    const SensitivityTensor sens =
        sensitivity_blocks(ev.sys, ev.sam, partials, ev.sam.tau, threads);
    Vector grad = Vector::Zero(rho_dim(ev.sys.density.family));
    for (std::size_t i = 0; i < data.size(); ++i)
        grad += adjoint_gradient(ev.sam, sens, data[i], ev.traces[i]);
    return grad;
}

void require_feasible(const RhoBounds& bounds, const Vector& rho) {
    if (rho.size() != bounds.lower.size())
        throw std::domain_error("rho length does not match the feasible set");
    if (!bounds.contains(rho, 1e-12))
        throw std::domain_error("rho is outside the feasible set");
}

struct CoreResult {
    EstimateResult res;
};

EstimateResult minimize_single(const ModelSpec& model, const DiscretizationLevel& level,
                               Family family, const std::vector<Dataset>& data,
                               const Vector& init, const RhoBounds& bounds,
                               const OptimOptions& opt) {
    EstimateResult result;
    result.level = level;

    Vector rho = init;
    Evaluation ev = evaluate(model, level, family, rho, data, opt.threads, true);

    auto grad_at = [&](const Evaluation& e, const Vector& x) {
        if (opt.grad_mode == GradientMode::Adjoint) return gradient_of(e, data, opt.threads);
        return finite_difference_gradient(model, level, family, x, bounds, data, opt.fd_step,
                                          opt.threads);
    };

    double step = 1.0;
    ConvergenceFlag flag = ConvergenceFlag::MaxIterations;
    std::string reason = "maximum iterations reached";
    Vector prev_rho, prev_grad;

    int iter = 0;
    for (; iter < opt.max_iters; ++iter) {
        const Vector grad = grad_at(ev, rho);
        const Vector pg = rho - bounds.project(rho - grad);
        const double pg_norm = pg.norm();
        result.history.push_back({rho, ev.j, pg_norm, step});
        if (pg_norm <= opt.grad_tol) {
            flag = ConvergenceFlag::GradientTolerance;
            reason = "projected-gradient norm below tolerance";
            break;
        }

        // Spectral (Barzilai-Borwein) trial step, safeguarded by Armijo
        // backtracking on the projected point.
        if (iter > 0) {
            const Vector s = rho - prev_rho;
            const Vector yv = grad - prev_grad;
            const double sy = s.dot(yv);
            if (sy > 0.0) step = std::clamp(s.dot(s) / sy, 1e-12, 1e8);
        }
        prev_rho = rho;
        prev_grad = grad;

        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h) {
            const Vector cand = bounds.project(rho - step * grad);
            const double decrease = grad.dot(rho - cand); // >= 0
            if (decrease <= 0.0 || (rho - cand).norm() < opt.step_collapse) {
                step *= opt.backtrack;
                continue;
            }
            Evaluation cev = evaluate(model, level, family, cand, data, opt.threads, true);
            if (cev.j <= ev.j - opt.armijo_c * decrease) {
                rho = cand;
                ev = std::move(cev);
                accepted = true;
                break;
            }
            step *= opt.backtrack;
        }
        if (!accepted) {
            if ((rho - bounds.project(rho - step * grad)).norm() < opt.step_collapse) {
                flag = ConvergenceFlag::StepCollapse;
                reason = "projected step collapsed below threshold";
            } else {
                flag = ConvergenceFlag::Stalled;
                reason = "line search failed after maximum halvings";
            }
            break;
        }
    }
    if (iter == opt.max_iters) {
        const Vector grad = grad_at(ev, rho);
        const double pg_norm = (rho - bounds.project(rho - grad)).norm();
        result.history.push_back({rho, ev.j, pg_norm, step});
    }

    result.rho = rho;
    result.objective = ev.j;
    result.iterations = iter;
    result.flag = flag;
    result.reason = reason;
    return result;
}

} // namespace

std::string convergence_flag_name(ConvergenceFlag flag) {
    switch (flag) {
        case ConvergenceFlag::GradientTolerance: return "gradient_tolerance";
        case ConvergenceFlag::StepCollapse: return "step_collapse";
        case ConvergenceFlag::MaxIterations: return "max_iterations";
        case ConvergenceFlag::Stalled: return "stalled";
    }
    return "?";
}

double objective(const ModelSpec& model, const DiscretizationLevel& level, Family family,
                 const Vector& rho, const RhoBounds& bounds, const std::vector<Dataset>& data,
                 int threads) {
    validate_inputs(model, data);
    require_feasible(bounds, rho);
    return evaluate(model, level, family, rho, data, threads, false).j;
}

std::pair<double, Vector> objective_with_gradient(const ModelSpec& model,
                                                  const DiscretizationLevel& level, Family family,
                                                  const Vector& rho, const RhoBounds& bounds,
                                                  const std::vector<Dataset>& data, int threads) {
    validate_inputs(model, data);
    require_feasible(bounds, rho);
    Evaluation ev = evaluate(model, level, family, rho, data, threads, true);
    return {ev.j, gradient_of(ev, data, threads)};
}

Vector finite_difference_gradient(const ModelSpec& model, const DiscretizationLevel& level,
                                  Family family, const Vector& rho, const RhoBounds& bounds,
                                  const std::vector<Dataset>& data, double rel_step,
                                  int threads) {
    validate_inputs(model, data);
    require_feasible(bounds, rho);
    const int nr = static_cast<int>(rho.size());
    auto shrink_to_feasible = [&](int k, double h, double direction) {
        // Shrink against the box and ordering constraints so that every
        // evaluation stays feasible.
        for (int tries = 0; tries < 60 && h > 0.0; ++tries) {
            Vector x = rho;
            x[k] += direction * h;
            if (bounds.contains(x)) return h;
            h *= 0.5;
        }
        return 0.0;
    };
    Vector grad(nr);
    for (int k = 0; k < nr; ++k) {
        const double h = rel_step * std::max(std::abs(rho[k]), 1.0);
        const double hp = shrink_to_feasible(k, std::min(h, 0.5 * (bounds.upper[k] - rho[k])), 1.0);
        const double hm = shrink_to_feasible(k, std::min(h, 0.5 * (rho[k] - bounds.lower[k])), -1.0);
        if (hp + hm <= 0.0) {
            grad[k] = 0.0;
            continue;
        }
        Vector xp = rho, xm = rho;
        xp[k] += hp;
        xm[k] -= hm;
        const double jp = evaluate(model, level, family, xp, data, threads, false).j;
        const double jm = evaluate(model, level, family, xm, data, threads, false).j;
        grad[k] = (jp - jm) / (hp + hm);
    }
    return grad;
}

EstimateResult minimize(const ModelSpec& model, const DiscretizationLevel& level, Family family,
                        const std::vector<Dataset>& data, const Vector& init,
                        const RhoBounds& bounds, const OptimOptions& options) {
    validate_inputs(model, data);
    bounds.validate();
    require_feasible(bounds, init);
    const auto t0 = std::chrono::steady_clock::now();

    EstimateResult best = minimize_single(model, level, family, data, init, bounds, options);
    if (options.multistart > 0) {
        Rng rng(options.multistart_seed);
        for (int s = 0; s < options.multistart; ++s) {
            Vector start(init.size());
            for (Eigen::Index k = 0; k < start.size(); ++k)
                start[k] = rng.uniform(bounds.lower[k], bounds.upper[k]);
            start = bounds.project(start);
            EstimateResult r = minimize_single(model, level, family, data, start, bounds, options);
            if (r.objective < best.objective) best = std::move(r);
        }
    }

    best.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return best;
}

} // namespace popest

#include "structcox/optimizer.hpp"

#include <cmath>
#include <fmt/format.h>

#include "structcox/error.hpp"

namespace structcox {

void check_config(const FitConfig& c)
{
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw InputError("lambda must be finite and non-negative");
    if (!(c.tol > 0.0)) throw InputError("tol must be positive");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(c.q0 > 0.0) || !std::isfinite(c.q0)) throw InputError("q0 must be positive");
    if (c.max_iter < 1) throw InputError("max_iter must be at least 1");
    if (c.max_backtracks < 0) throw InputError("max_backtracks must be non-negative");
}

double penalty(const Vector& beta, const GroupingStructure& structure)
{
    double total = 0.0;
    for (const auto& g : structure.groups) {
        double m = 0.0;
        for (int j : g.members) m = std::max(m, std::abs(beta[j]));
        total += g.weight * m;
    }
    return total;
}

FitResult fit(const RiskIndex& index, const ProxSolver& prox, const FitConfig& config,
              const std::optional<Vector>& warm_start)
{
    check_config(config);
    const auto& structure = prox.structure();
    const int p = structure.p;
    if (index.num_covariates() != p) {
        throw InputError(fmt::format("data has {} covariates but the grouping has {}", index.num_covariates(), p));
    }
    Vector beta = Vector::Zero(p);
    if (warm_start) {
        if (warm_start->size() != p) throw InputError("warm start has the wrong length");
        if (!warm_start->allFinite()) throw InputError("warm start must be finite");
        beta = *warm_start;
    }

    const double lambda = config.lambda;
    auto current = loss_and_gradient(index, beta);
    double objective = current.value + lambda * penalty(beta, structure);
    FitResult result;
    result.objective_trace.push_back(objective);
    double q = config.q0;

    Vector best = beta;
    double best_objective = objective;
    // Candidate prox point for the current beta and q, reused after a
    // convergence check rejects.
    std::optional<Vector> candidate;

    for (int iter = 0; iter < config.max_iter; ++iter) {
        Vector next;
        LossAndGradient trial;
        int backtracks = 0;
        while (true) {
            if (candidate) {
                next = std::move(*candidate);
                candidate.reset();
            } else {
                next = prox.apply(beta - q * current.gradient, q * lambda);
            }
            const Vector delta = next - beta;
            bool finite = true;
            try {
                trial = loss_and_gradient(index, next);
            } catch (const NumericalError&) {
                finite = false;
            }
            const double bound = current.value + current.gradient.dot(delta) + delta.squaredNorm() / (2.0 * q);
            if (finite && std::isfinite(trial.value) && trial.value <= bound) break;
            q *= config.alpha;
            if (++backtracks > config.max_backtracks || q < 1e-14 * config.q0) {
                throw NumericalError(fmt::format("line search failed at iteration {} (step {:g})", iter + 1, q));
            }
        }

        const double change = (next - beta).lpNorm<1>();
        beta = std::move(next);
        current = std::move(trial);
        objective = current.value + lambda * penalty(beta, structure);
        result.objective_trace.push_back(objective);
        result.iterations = iter + 1;
        if (objective < best_objective) {
            best_objective = objective;
            best = beta;
        }

        if (change < config.tol) {
            candidate = prox.apply(beta - q * current.gradient, q * lambda);
            const double residual = (*candidate - beta).lpNorm<1>();
            if (residual < config.tol) {
                result.converged = true;
                result.fixed_point_residual = residual;
                break;
            }
        }
    }

    if (!result.converged) {
        beta = best;
        current = loss_and_gradient(index, beta);
        result.fixed_point_residual = (prox.apply(beta - q * current.gradient, q * lambda) - beta).lpNorm<1>();
    }
    result.beta = std::move(beta);
    result.final_step = q;
    result.penalty_value = penalty(result.beta, structure);
    if (config.observer) config.observer(result);
    return result;
}

FitResult fit(const RiskIndex& index, const GroupingStructure& structure, const FitConfig& config,
              const std::optional<Vector>& warm_start)
{
    return fit(index, ProxSolver(structure), config, warm_start);
}

} // namespace structcox

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "structcox/grouping.hpp"
#include "structcox/prox.hpp"
#include "structcox/survival.hpp"

namespace structcox {

struct FitResult;

/// Called with every finished fit, including those made inside paths and
/// cross-validation. May run on worker threads concurrently.
using FitObserver = std::function<void(const FitResult&)>;

struct FitConfig {
    double lambda = 0.0;
    /// Stop once an accepted step moves less than this in l1 norm.
    double tol = 1e-5;
    /// Step shrinkage factor on a failed line search.
    double alpha = 0.5;
    double q0 = 1.0;
    int max_iter = 10000;
    int max_backtracks = 60;
    FitObserver observer;
};

/// Throws InputError on out-of-range settings.
void check_config(const FitConfig& config);

struct FitResult {
    Vector beta;
    /// f + λΩ at the starting point followed by every accepted iterate.
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    double final_step = 0.0;
    double penalty_value = 0.0;
    /// ‖β − prox(β − q∇f(β))‖₁ at the returned β with the final step q.
    double fixed_point_residual = 0.0;

    double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// Σ_g ω_g max_{j∈g} |β_j|.
double penalty(const Vector& beta, const GroupingStructure& structure);

/// Proximal gradient descent with backtracking on the step q.
///
/// Returns the best iterate with converged = false when max_iter is reached.
/// Throws NumericalError when the line search cannot find an acceptable step.
FitResult fit(const RiskIndex& index, const ProxSolver& prox, const FitConfig& config,
              const std::optional<Vector>& warm_start = std::nullopt);

FitResult fit(const RiskIndex& index, const GroupingStructure& structure, const FitConfig& config,
              const std::optional<Vector>& warm_start = std::nullopt);

} // namespace structcox

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "structcox/grouping.hpp"
#include "structcox/optimizer.hpp"
#include "structcox/survival.hpp"

namespace structcox {

/// max_g ‖∇f(0)_g‖₁ / ω_g, an upper bound on the smallest λ whose solution is
/// zero. Throws InputError when the gradient at zero vanishes.
double lambda_max(const RiskIndex& index, const GroupingStructure& structure);

/// `count` log-spaced values from `hi` down to `hi * min_ratio`.
std::vector<double> log_spaced(double hi, int count, double min_ratio);

/// log_spaced(lambda_max(index, structure), n_lambda, min_ratio).
std::vector<double> lambda_sequence(const RiskIndex& index, const GroupingStructure& structure, int n_lambda,
                                    double min_ratio);

struct LambdaPath {
    std::vector<double> lambdas;
    std::vector<FitResult> fits;
};

/// Fits each λ (strictly decreasing) warm-started from the previous solution.
LambdaPath solution_path(const RiskIndex& index, const ProxSolver& prox, std::span<const double> lambdas,
                         const FitConfig& config);

/// 2(f_full(β) − f_train(β)) / R, where f is the negative log partial likelihood.
double cv_error(const RiskIndex& full, const RiskIndex& train, int test_events, const Vector& beta);

/// Fold label in [0, k) per subject. Subjects with and without an event are
/// shuffled separately and dealt round-robin, so event counts differ by at
/// most one between folds.
std::vector<int> assign_folds(const SurvivalDataset& data, int k, std::uint64_t seed);

struct CvOptions {
    int folds = 10;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct CvResult {
    std::vector<double> lambdas;
    std::vector<double> mean_cve;
    std::vector<double> se_cve;
    /// Support size of the full-data fit at each λ.
    std::vector<int> nonzero;
    /// fold_errors[k][l]: error of fold k at λ index l.
    std::vector<std::vector<double>> fold_errors;
    std::vector<int> fold_of_subject;
    int index_min = 0;
    int index_1se = 0;
    double lambda_min = 0.0;
    double lambda_1se = 0.0;
    /// Full-data fits along `lambdas`.
    LambdaPath full_path;
};

struct LambdaChoice {
    int index_min = 0;
    int index_1se = 0;
};

/// Index of the smallest mean (first on ties) and of the largest λ whose mean
/// is within one standard error of it. `lambdas` must be decreasing.
LambdaChoice choose_lambdas(std::span<const double> lambdas, std::span<const double> mean,
                            std::span<const double> se);

CvResult cross_validate(const SurvivalDataset& data, const GroupingStructure& structure,
                        std::span<const double> lambdas, const CvOptions& options, const FitConfig& config);

/// Same structure with ω_g = 1 / max(max_{j∈g} |β_j|, 1e-16).
GroupingStructure adaptive_weights(const Vector& beta, const GroupingStructure& structure);
GroupingStructure adaptive_weights(const FitResult& prior, const GroupingStructure& structure);

/// Risk-set concordance of the linear predictor; ties count one half.
/// Throws InputError when no comparable pair exists.
double concordance(const RiskIndex& index, const Vector& beta);

struct MetricReport {
    /// Share of true covariates not selected; absent without true covariates.
    std::optional<double> miss_rate;
    /// Share of noise covariates selected; absent without noise covariates.
    std::optional<double> false_alarm_rate;
    double mse = 0.0;
    std::vector<bool> rules;
    std::vector<std::string> rule_families;
    std::optional<double> c_index;

    /// True when every rule of the family holds (vacuously without rules).
    bool family_satisfied(const std::string& family) const;
};

MetricReport metrics(std::span<const int> selected, const Vector& beta_hat, const Vector& truth,
                     std::span<const SelectionRule> rules);

} // namespace structcox

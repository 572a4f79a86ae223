#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "structcox/grouping.hpp"
#include "structcox/model_select.hpp"
#include "structcox/optimizer.hpp"
#include "structcox/survival.hpp"

namespace structcox {

enum class ScenarioKind { CategoricalS1, CategoricalS2, Interactions, SparseGroup };

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::CategoricalS1;
    int n = 100;
    /// Main terms for the interactions design.
    int p_main = 20;
    /// 1, 2 or 3 copies of the block signal for the sparse-group design.
    int sparse_case = 1;
    std::uint64_t seed = 0;
    double censoring = 0.5;
};

/// "categorical_s1", "categorical_s2", "interactions", "sparse_group_case1".."3".
std::string scenario_name(const ScenarioSpec& spec);
/// Sets kind (and sparse_case) from a name; throws InputError when unknown.
void set_scenario(ScenarioSpec& spec, const std::string& name);
void check_spec(const ScenarioSpec& spec);

/// Covariates may change at integer times 0..horizon-1; the last value holds
/// beyond the horizon.
int horizon(const ScenarioSpec& spec);

struct Segment {
    double value = 0.0;
    int length = 0;
};

/// Draws values, repeats each for a uniform length in [min_len, max_len], and
/// truncates the concatenation to `horizon` time points. Only the final
/// segment can be shorter than min_len.
std::vector<Segment> draw_segments(std::mt19937_64& rng, int horizon, int min_len, int max_len,
                                   const std::function<double(std::mt19937_64&)>& draw);

/// Piecewise-constant covariate history of one subject. Row k of `rows` holds
/// on (change_times[k], change_times[k+1]]; the last row holds from its change
/// time onward. Consecutive rows differ.
struct CovariatePath {
    std::vector<double> change_times;
    Matrix rows;
};

std::vector<std::string> covariate_names(const ScenarioSpec& spec);
CovariatePath gen_subject_covariates(const ScenarioSpec& spec, std::mt19937_64& rng);
std::vector<CovariatePath> gen_piecewise_covariates(int n, const ScenarioSpec& spec, std::mt19937_64& rng);

struct ScenarioTruth {
    Vector beta;
    std::vector<int> true_set;
    std::vector<int> noise_set;
    std::vector<SelectionRule> rules;
    GroupingStructure structure;
};

/// Coefficients, rules (families "heredity" and "collective") and grouping
/// structure of a design.
ScenarioTruth scenario_truth(const ScenarioSpec& spec);

/// Event time with cumulative hazard h0 ∫ exp(x(s)ᵀβ) ds equal to `exposure`.
double event_time(const CovariatePath& path, const Vector& beta, double h0, double exposure);

/// Baseline hazard and censoring bound fitted on a Monte Carlo sample.
struct Calibration {
    double baseline_hazard = 0.0;
    /// Censoring times are uniform on (0, censoring_max). There is no
    /// administrative cutoff.
    double censoring_max = 0.0;
    double realized_censoring = 0.0;
    double median_event_time = 0.0;
    int draws = 0;
    std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kCalibrationSeed = 20240101;

/// Bisection so that on `draws` simulated subjects the censored fraction
/// equals `spec.censoring` and the median observed event time equals half the
/// horizon. Throws InputError when the target is unattainable.
Calibration calibrate(const ScenarioSpec& spec, const Vector& beta, int draws = 10000,
                      std::uint64_t seed = kCalibrationSeed);

/// Outcomes for the given histories in counting-process form. Records split
/// only where the covariate row changes.
SurvivalDataset gen_event_times(std::span<const CovariatePath> paths, const Vector& beta,
                                const Calibration& calibration, std::vector<std::string> names,
                                std::mt19937_64& rng);

/// Replication `replication` of the design (streams derived from spec.seed).
SurvivalDataset generate_dataset(const ScenarioSpec& spec, const Calibration& calibration, int replication);

struct ExperimentConfig {
    int replications = 1;
    int folds = 10;
    int n_lambda = 30;
    double min_ratio = 0.01;
    FitConfig fit;
    /// Also refit with adaptive weights from the min-rule fit.
    bool debias = false;
    int threads = 1;
};

struct MetricRow {
    int replication = 0;
    std::string method;
    std::string rule;
    double lambda = 0.0;
    double cv_error = 0.0;
    int nonzero = 0;
    MetricReport report;
    bool converged = true;
    Vector beta;
};

struct ExperimentResult {
    Calibration calibration;
    ScenarioTruth truth;
    std::vector<MetricRow> rows;
};

ExperimentResult run_experiment(const ScenarioSpec& spec, const ExperimentConfig& config);

/// One MetricRow per line plus per-(method, rule) means.
std::string format_metrics(const ExperimentResult& result);

} // namespace structcox

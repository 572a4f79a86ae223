#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace structcox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One counting-process interval (start, stop] for a subject. Covariates are
/// constant on the interval; `event` marks a failure at `stop`.
struct CountingRecord {
    std::string subject_id;
    double start = 0.0;
    double stop = 0.0;
    bool event = false;
    std::vector<double> covariates;
};

/// Column-oriented store of counting-process records.
///
/// `subject[i]` indexes into `subject_ids`; records of one subject need not be
/// contiguous. Row i of `x` holds the covariates of record i.
struct SurvivalDataset {
    std::vector<std::string> covariate_names;
    std::vector<std::string> subject_ids;
    std::vector<int> subject;
    std::vector<double> start;
    std::vector<double> stop;
    std::vector<std::uint8_t> event;
    Matrix x;

    int num_records() const { return static_cast<int>(start.size()); }
    int num_covariates() const { return static_cast<int>(x.cols()); }
    int num_subjects() const { return static_cast<int>(subject_ids.size()); }
    int num_events() const;

    static SurvivalDataset from_records(std::span<const CountingRecord> records,
                                        std::vector<std::string> covariate_names);
    std::vector<CountingRecord> to_records() const;

    /// Records belonging to the listed subjects, in original record order.
    SurvivalDataset subset_subjects(std::span<const int> subjects) const;
};

/// Throws InputError describing the first violated invariant: finite values,
/// start < stop, non-overlapping ordered intervals per subject, at most one
/// event per subject and only on its last interval, at least one event.
void validate(const SurvivalDataset& data);

/// Event-time bookkeeping for the Breslow partial likelihood.
///
/// Risk membership at event time t is start < t <= stop. Each record covers
/// the contiguous range [first_time(i), end_time(i)) of event-time indices.
/// `event_set(l)` and `risk_set(l)` give record indices in ascending order.
class RiskIndex {
public:
    RiskIndex() = default;

    int num_event_times() const { return static_cast<int>(event_times_.size()); }
    int num_covariates() const { return static_cast<int>(x_.cols()); }
    int num_records() const { return static_cast<int>(x_.rows()); }
    int total_events() const { return total_events_; }

    const std::vector<double>& event_times() const { return event_times_; }
    int tie_count(int l) const { return event_offsets_[l + 1] - event_offsets_[l]; }
    std::span<const int> event_set(int l) const;
    /// Linear scan over records.
    std::vector<int> risk_set(int l) const;
    int first_time(int i) const { return first_[i]; }
    int end_time(int i) const { return end_[i]; }
    const Matrix& covariates() const { return x_; }
    /// Sum over all events of the failing record's covariate row.
    const Vector& event_covariate_sum() const { return event_x_sum_; }

    bool operator==(const RiskIndex&) const = default;

private:
    friend RiskIndex build_risk_index(const SurvivalDataset&);

    std::vector<double> event_times_;
    std::vector<int> event_offsets_;
    std::vector<int> event_members_;
    std::vector<int> first_;
    std::vector<int> end_;
    Matrix x_;
    Vector event_x_sum_;
    int total_events_ = 0;
};

RiskIndex build_risk_index(const SurvivalDataset& data);

/// f(beta): Breslow negative log partial likelihood.
double neg_log_partial_likelihood(const RiskIndex& index, const Vector& beta);

/// Gradient of neg_log_partial_likelihood.
Vector gradient(const RiskIndex& index, const Vector& beta);

struct LossAndGradient {
    double value = 0.0;
    Vector gradient;
};

/// Value and gradient sharing one pass over the risk sets.
LossAndGradient loss_and_gradient(const RiskIndex& index, const Vector& beta);

/// Result of replacing one covariate by interval-indicator copies.
struct IntervalExpansion {
    SurvivalDataset data;
    /// Column indices of the new Z_{j,m} covariates, one per interval.
    std::vector<int> new_columns;
};

/// Replaces column `target` by M columns I(T_m < t <= T_{m+1}) * X_target(t),
/// splitting records at interior cut points. The new columns take the place of
/// `target` (named "<name>@m" for m = 1..M); other columns keep their order.
IntervalExpansion expand_interval_coefficients(const SurvivalDataset& data,
                                               std::span<const double> cut_points,
                                               int target);

/// Column scaling to unit (population) variance over records.
struct Standardization {
    SurvivalDataset data;
    Vector scale;
};

/// Divides each column by its standard deviation. Constant columns keep
/// scale 1. Coefficients fitted on the result map back via `unscale`.
Standardization standardize_columns(const SurvivalDataset& data);
Vector unscale(const Vector& beta, const Vector& scale);

} // namespace structcox

#include "structcox/survival.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "structcox/error.hpp"

namespace structcox {

int SurvivalDataset::num_events() const
{
    return static_cast<int>(std::count(event.begin(), event.end(), std::uint8_t{1}));
}

SurvivalDataset SurvivalDataset::from_records(std::span<const CountingRecord> records,
                                              std::vector<std::string> covariate_names)
{
    SurvivalDataset data;
    const auto p = static_cast<Eigen::Index>(covariate_names.size());
    data.covariate_names = std::move(covariate_names);
    data.x.resize(static_cast<Eigen::Index>(records.size()), p);
    std::unordered_map<std::string, int> subject_lookup;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (static_cast<Eigen::Index>(r.covariates.size()) != p) {
            throw InputError(fmt::format("record {}: expected {} covariates, got {}", i + 1, p,
                                         r.covariates.size()));
        }
        auto [it, inserted] =
            subject_lookup.try_emplace(r.subject_id, static_cast<int>(data.subject_ids.size()));
        if (inserted) data.subject_ids.push_back(r.subject_id);
        data.subject.push_back(it->second);
        data.start.push_back(r.start);
        data.stop.push_back(r.stop);
        data.event.push_back(r.event ? 1 : 0);
        for (Eigen::Index j = 0; j < p; ++j) data.x(static_cast<Eigen::Index>(i), j) = r.covariates[j];
    }
    validate(data);
    return data;
}

std::vector<CountingRecord> SurvivalDataset::to_records() const
{
    std::vector<CountingRecord> out;
    out.reserve(start.size());
    for (int i = 0; i < num_records(); ++i) {
        CountingRecord r;
        r.subject_id = subject_ids[subject[i]];
        r.start = start[i];
        r.stop = stop[i];
        r.event = event[i] != 0;
        r.covariates.assign(x.row(i).data(), x.row(i).data() + x.cols());
        out.push_back(std::move(r));
    }
    return out;
}

SurvivalDataset SurvivalDataset::subset_subjects(std::span<const int> subjects) const
{
    std::vector<int> remap(subject_ids.size(), -1);
    std::vector<int> sorted(subjects.begin(), subjects.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    SurvivalDataset out;
    out.covariate_names = covariate_names;
    for (int s : sorted) {
        if (s < 0 || s >= num_subjects()) throw InputError(fmt::format("subject index {} out of range", s));
        remap[s] = static_cast<int>(out.subject_ids.size());
        out.subject_ids.push_back(subject_ids[s]);
    }
    std::vector<Eigen::Index> rows;
    for (int i = 0; i < num_records(); ++i) {
        if (remap[subject[i]] < 0) continue;
        rows.push_back(i);
        out.subject.push_back(remap[subject[i]]);
        out.start.push_back(start[i]);
        out.stop.push_back(stop[i]);
        out.event.push_back(event[i]);
    }
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.x.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    return out;
}

void validate(const SurvivalDataset& data)
{
    const int n = data.num_records();
    if (n == 0) throw InputError("dataset has no records");
    if (static_cast<int>(data.covariate_names.size()) != data.num_covariates()) {
        throw InputError("covariate name count does not match covariate columns");
    }
    if (static_cast<int>(data.stop.size()) != n || static_cast<int>(data.event.size()) != n ||
        static_cast<int>(data.subject.size()) != n || data.x.rows() != n) {
        throw InputError("dataset columns have inconsistent lengths");
    }
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(data.start[i]) || !std::isfinite(data.stop[i])) {
            throw InputError(fmt::format("record {}: non-finite time", i + 1));
        }
        if (!(data.start[i] < data.stop[i])) {
            throw InputError(fmt::format("record {}: start {} is not before stop {}", i + 1,
                                         data.start[i], data.stop[i]));
        }
        if (data.event[i] > 1) throw InputError(fmt::format("record {}: event must be 0 or 1", i + 1));
        if (!data.x.row(i).allFinite()) throw InputError(fmt::format("record {}: non-finite covariate", i + 1));
        if (data.subject[i] < 0 || data.subject[i] >= data.num_subjects()) {
            throw InputError(fmt::format("record {}: bad subject index", i + 1));
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (data.subject[a] != data.subject[b]) return data.subject[a] < data.subject[b];
        return data.start[a] < data.start[b];
    });
    for (int k = 0; k < n; ++k) {
        const int i = order[k];
        const bool last_of_subject = k + 1 == n || data.subject[order[k + 1]] != data.subject[i];
        if (!last_of_subject) {
            const int next = order[k + 1];
            if (data.start[next] < data.stop[i]) {
                throw InputError(fmt::format("subject '{}': overlapping intervals",
                                             data.subject_ids[data.subject[i]]));
            }
            if (data.event[i]) {
                throw InputError(fmt::format("subject '{}': event on a non-final interval",
                                             data.subject_ids[data.subject[i]]));
            }
        }
    }
    if (data.num_events() == 0) throw InputError("dataset has no events");
}

std::span<const int> RiskIndex::event_set(int l) const
{
    return {event_members_.data() + event_offsets_[l],
            static_cast<std::size_t>(event_offsets_[l + 1] - event_offsets_[l])};
}

std::vector<int> RiskIndex::risk_set(int l) const
{
    std::vector<int> out;
    for (int i = 0; i < num_records(); ++i) {
        if (first_[i] <= l && l < end_[i]) out.push_back(i);
    }
    return out;
}

RiskIndex build_risk_index(const SurvivalDataset& data)
{
    const int n = data.num_records();
    if (n == 0) throw InputError("dataset has no records");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(data.start[i]) || !std::isfinite(data.stop[i])) {
            throw InputError(fmt::format("record {}: non-finite time", i + 1));
        }
    }

    RiskIndex index;
    for (int i = 0; i < n; ++i) {
        if (data.event[i]) index.event_times_.push_back(data.stop[i]);
    }
    if (index.event_times_.empty()) throw InputError("dataset has no events");
    auto& times = index.event_times_;
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const int num_times = static_cast<int>(times.size());

    // Event time ranges covered by each record: t in (start, stop].
    index.first_.resize(static_cast<std::size_t>(n));
    index.end_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        index.first_[i] = static_cast<int>(std::upper_bound(times.begin(), times.end(), data.start[i]) - times.begin());
        index.end_[i] = static_cast<int>(std::upper_bound(times.begin(), times.end(), data.stop[i]) - times.begin());
    }

    index.event_offsets_.assign(static_cast<std::size_t>(num_times) + 1, 0);
    for (int i = 0; i < n; ++i) {
        if (data.event[i]) ++index.event_offsets_[index.end_[i]];
    }
    std::partial_sum(index.event_offsets_.begin(), index.event_offsets_.end(), index.event_offsets_.begin());
    index.event_members_.resize(static_cast<std::size_t>(index.event_offsets_.back()));
    std::vector<int> event_fill(index.event_offsets_.begin(), index.event_offsets_.end() - 1);
    for (int i = 0; i < n; ++i) {
        if (data.event[i]) index.event_members_[event_fill[index.end_[i] - 1]++] = i;
    }

    index.x_ = data.x;
    index.event_x_sum_ = Vector::Zero(data.x.cols());
    for (int i : index.event_members_) index.event_x_sum_ += data.x.row(i).transpose();
    index.total_events_ = static_cast<int>(index.event_members_.size());
    return index;
}

namespace {

void check_dimension(const RiskIndex& index, const Vector& beta)
{
    if (beta.size() != index.num_covariates()) {
        throw InputError(fmt::format("coefficient length {} does not match {} covariates", beta.size(),
                                     index.num_covariates()));
    }
}

Vector linear_predictor(const RiskIndex& index, const Vector& beta)
{
    Vector eta = index.covariates() * beta;
    if (!eta.allFinite()) throw NumericalError("linear predictor overflow");
    return eta;
}

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v)
    {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

struct Evaluation {
    double value = 0.0;
    Vector weight;
};

// Risk-set sums come from a difference array over event-time indices with one
// global shift. Risk sets whose shifted sum is too small to trust are
// recomputed directly with their own shift.
Evaluation evaluate(const RiskIndex& index, const Vector& eta, bool want_weight)
{
    const int n = index.num_records();
    const int num_times = index.num_event_times();
    const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = std::exp(eta[i] - shift);

    std::vector<double> delta(static_cast<std::size_t>(num_times) + 1, 0.0);
    std::vector<double> magnitude(static_cast<std::size_t>(num_times) + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        const int a = index.first_time(i);
        const int b = index.end_time(i);
        if (a >= b) continue;
        delta[a] += w[i];
        delta[b] -= w[i];
        magnitude[a] += w[i];
    }
    std::vector<double> risk_sum(static_cast<std::size_t>(num_times));
    std::vector<char> direct(static_cast<std::size_t>(num_times), 0);
    CompensatedSum running;
    double entered = 0.0;
    for (int l = 0; l < num_times; ++l) {
        running.add(delta[l]);
        entered += magnitude[l];
        risk_sum[l] = running.value();
        if (!(risk_sum[l] > 1e-8 * entered) || risk_sum[l] < 1e-280) direct[l] = 1;
    }

    Evaluation out;
    CompensatedSum f;
    std::vector<double> hazard(static_cast<std::size_t>(num_times) + 1, 0.0);
    if (want_weight) out.weight = Vector::Zero(n);
    for (int l = 0; l < num_times; ++l) {
        const double d = index.tie_count(l);
        double event_eta = 0.0;
        for (int i : index.event_set(l)) event_eta += eta[i];
        if (!direct[l]) {
            f.add(d * (shift + std::log(risk_sum[l])) - event_eta);
            hazard[l + 1] = d / risk_sum[l];
            continue;
        }
        const auto risk = index.risk_set(l);
        double m = -std::numeric_limits<double>::infinity();
        for (int i : risk) m = std::max(m, eta[i]);
        double s = 0.0;
        for (int i : risk) s += std::exp(eta[i] - m);
        f.add(d * (m + std::log(s)) - event_eta);
        if (want_weight) {
            for (int i : risk) out.weight[i] += d * std::exp(eta[i] - m) / s;
        }
    }
    out.value = f.value();
    if (!std::isfinite(out.value)) throw NumericalError("partial likelihood overflow");
    if (want_weight) {
        // hazard becomes the cumulative sum over event indices < k.
        for (int l = 0; l < num_times; ++l) hazard[l + 1] += hazard[l];
        for (int i = 0; i < n; ++i) {
            const int a = index.first_time(i);
            const int b = index.end_time(i);
            if (a < b) out.weight[i] += w[i] * (hazard[b] - hazard[a]);
        }
    }
    return out;
}

} // namespace

double neg_log_partial_likelihood(const RiskIndex& index, const Vector& beta)
{
    check_dimension(index, beta);
    return evaluate(index, linear_predictor(index, beta), false).value;
}

LossAndGradient loss_and_gradient(const RiskIndex& index, const Vector& beta)
{
    check_dimension(index, beta);
    auto eval = evaluate(index, linear_predictor(index, beta), true);
    LossAndGradient out;
    out.value = eval.value;
    out.gradient = index.covariates().transpose() * eval.weight - index.event_covariate_sum();
    return out;
}

Vector gradient(const RiskIndex& index, const Vector& beta)
{
    return loss_and_gradient(index, beta).gradient;
}

IntervalExpansion expand_interval_coefficients(const SurvivalDataset& data,
                                               std::span<const double> cut_points, int target)
{
    const int p = data.num_covariates();
    if (target < 0 || target >= p) throw InputError(fmt::format("target covariate {} out of range", target));
    if (cut_points.size() < 2) throw InputError("need at least two cut points");
    for (std::size_t m = 1; m < cut_points.size(); ++m) {
        if (!(cut_points[m - 1] < cut_points[m])) throw InputError("cut points must be strictly increasing");
    }
    const double lo = *std::min_element(data.start.begin(), data.start.end());
    const double hi = *std::max_element(data.stop.begin(), data.stop.end());
    if (cut_points.front() > lo || cut_points.back() < hi) {
        throw InputError("cut points do not cover the observed time range");
    }

    const int num_intervals = static_cast<int>(cut_points.size()) - 1;
    const int new_p = p - 1 + num_intervals;

    IntervalExpansion out;
    auto& names = out.data.covariate_names;
    for (int j = 0; j < target; ++j) names.push_back(data.covariate_names[j]);
    for (int m = 0; m < num_intervals; ++m) {
        out.new_columns.push_back(target + m);
        names.push_back(fmt::format("{}@{}", data.covariate_names[target], m + 1));
    }
    for (int j = target + 1; j < p; ++j) names.push_back(data.covariate_names[j]);
    out.data.subject_ids = data.subject_ids;

    std::vector<std::vector<double>> rows;
    for (int i = 0; i < data.num_records(); ++i) {
        // Pieces (a, b] of (start, stop] falling in interval (T_m, T_{m+1}].
        double a = data.start[i];
        int m = static_cast<int>(std::upper_bound(cut_points.begin(), cut_points.end(), a) - cut_points.begin()) - 1;
        m = std::clamp(m, 0, num_intervals - 1);
        while (true) {
            const double b = std::min(data.stop[i], cut_points[m + 1]);
            std::vector<double> row(static_cast<std::size_t>(new_p), 0.0);
            for (int j = 0; j < target; ++j) row[j] = data.x(i, j);
            row[target + m] = data.x(i, target);
            for (int j = target + 1; j < p; ++j) row[j - 1 + num_intervals] = data.x(i, j);
            const bool final_piece = b >= data.stop[i];
            out.data.subject.push_back(data.subject[i]);
            out.data.start.push_back(a);
            out.data.stop.push_back(final_piece ? data.stop[i] : b);
            out.data.event.push_back(final_piece ? data.event[i] : 0);
            rows.push_back(std::move(row));
            if (final_piece) break;
            a = b;
            ++m;
        }
    }
    out.data.x.resize(static_cast<Eigen::Index>(rows.size()), new_p);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int j = 0; j < new_p; ++j) out.data.x(static_cast<Eigen::Index>(r), j) = rows[r][j];
    }
    return out;
}

Standardization standardize_columns(const SurvivalDataset& data)
{
    Standardization out{data, Vector::Ones(data.num_covariates())};
    const double n = data.num_records();
    for (int j = 0; j < data.num_covariates(); ++j) {
        const auto col = data.x.col(j);
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        if (var > 0.0) {
            out.scale[j] = std::sqrt(var);
            out.data.x.col(j) /= out.scale[j];
        }
    }
    return out;
}

Vector unscale(const Vector& beta, const Vector& scale)
{
    return beta.cwiseQuotient(scale);
}

} // namespace structcox

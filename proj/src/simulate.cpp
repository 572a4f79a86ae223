#include "structcox/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>

#include "structcox/error.hpp"
#include "structcox/rng.hpp"
#include "structcox/text_io.hpp"

namespace structcox {

namespace {

// Column order of the categorical design.
enum CategoricalColumn { kA1, kA2, kB, kA1B, kA2B, kC1, kC2, kC1B, kC2B, kCategoricalColumns };

constexpr int kSparseBlocks = 10;
constexpr int kSparseBlockSize = 20;

int num_covariates(const ScenarioSpec& spec)
{
    switch (spec.kind) {
    case ScenarioKind::CategoricalS1:
    case ScenarioKind::CategoricalS2:
        return kCategoricalColumns;
    case ScenarioKind::Interactions:
        return spec.p_main + spec.p_main * (spec.p_main - 1) / 2;
    case ScenarioKind::SparseGroup:
        return kSparseBlocks * kSparseBlockSize;
    }
    throw InternalError("unknown scenario kind");
}

std::vector<double> expand(const std::vector<Segment>& segments)
{
    std::vector<double> out;
    for (const auto& s : segments) out.insert(out.end(), static_cast<std::size_t>(s.length), s.value);
    return out;
}

// Collapses per-time-point rows into change points and distinct rows.
CovariatePath compress(const Matrix& by_time)
{
    CovariatePath path;
    std::vector<int> keep;
    for (Eigen::Index m = 0; m < by_time.rows(); ++m) {
        if (m == 0 || by_time.row(m) != by_time.row(m - 1)) keep.push_back(static_cast<int>(m));
    }
    path.rows.resize(static_cast<Eigen::Index>(keep.size()), by_time.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        path.change_times.push_back(keep[k]);
        path.rows.row(static_cast<Eigen::Index>(k)) = by_time.row(keep[k]);
    }
    return path;
}

double level_draw(std::mt19937_64& rng) { return uniform_int(rng, 1, 3); }

double median(std::vector<double> v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

} // namespace

std::string scenario_name(const ScenarioSpec& spec)
{
    switch (spec.kind) {
    case ScenarioKind::CategoricalS1:
        return "categorical_s1";
    case ScenarioKind::CategoricalS2:
        return "categorical_s2";
    case ScenarioKind::Interactions:
        return "interactions";
    case ScenarioKind::SparseGroup:
        return fmt::format("sparse_group_case{}", spec.sparse_case);
    }
    throw InternalError("unknown scenario kind");
}

void set_scenario(ScenarioSpec& spec, const std::string& name)
{
    if (name == "categorical_s1") {
        spec.kind = ScenarioKind::CategoricalS1;
    } else if (name == "categorical_s2") {
        spec.kind = ScenarioKind::CategoricalS2;
    } else if (name == "interactions") {
        spec.kind = ScenarioKind::Interactions;
    } else if (name == "sparse_group_case1" || name == "sparse_group_case2" || name == "sparse_group_case3") {
        spec.kind = ScenarioKind::SparseGroup;
        spec.sparse_case = name.back() - '0';
    } else {
        throw InputError(fmt::format("unknown scenario '{}'", name));
    }
}

void check_spec(const ScenarioSpec& spec)
{
    if (spec.n < 1) throw InputError("n must be at least 1");
    if (spec.kind == ScenarioKind::Interactions && spec.p_main < 9) {
        throw InputError("the interactions design needs at least 9 main terms");
    }
    if (spec.kind == ScenarioKind::SparseGroup && (spec.sparse_case < 1 || spec.sparse_case > 3)) {
        throw InputError("sparse-group case must be 1, 2 or 3");
    }
    if (!(spec.censoring > 0.0 && spec.censoring < 1.0)) throw InputError("censoring target must lie in (0, 1)");
}

int horizon(const ScenarioSpec& spec)
{
    return spec.kind == ScenarioKind::Interactions ? 4 : 50;
}

std::vector<Segment> draw_segments(std::mt19937_64& rng, int horizon, int min_len, int max_len,
                                   const std::function<double(std::mt19937_64&)>& draw)
{
    if (horizon < 1 || min_len < 1 || max_len < min_len) throw InputError("invalid segment settings");
    // Enough values to cover the horizon even when every run is shortest.
    const int count = (horizon + min_len - 1) / min_len;
    std::vector<Segment> raw;
    for (int i = 0; i < count; ++i) {
        Segment s;
        s.value = draw(rng);
        s.length = uniform_int(rng, min_len, max_len);
        raw.push_back(s);
    }
    std::vector<Segment> out;
    int covered = 0;
    for (const auto& s : raw) {
        if (covered >= horizon) break;
        out.push_back({s.value, std::min(s.length, horizon - covered)});
        covered += out.back().length;
    }
    return out;
}

std::vector<std::string> covariate_names(const ScenarioSpec& spec)
{
    switch (spec.kind) {
    case ScenarioKind::CategoricalS1:
    case ScenarioKind::CategoricalS2:
        return {"A1", "A2", "B", "A1B", "A2B", "C1", "C2", "C1B", "C2B"};
    case ScenarioKind::Interactions:
        return build_strong_heredity(spec.p_main).variables;
    case ScenarioKind::SparseGroup: {
        std::vector<std::string> names;
        for (int j = 0; j < kSparseBlocks * kSparseBlockSize; ++j) names.push_back(fmt::format("X{}", j + 1));
        return names;
    }
    }
    throw InternalError("unknown scenario kind");
}

CovariatePath gen_subject_covariates(const ScenarioSpec& spec, std::mt19937_64& rng)
{
    const int h = horizon(spec);
    switch (spec.kind) {
    case ScenarioKind::CategoricalS1:
    case ScenarioKind::CategoricalS2: {
        const auto a = expand(draw_segments(rng, h, 5, 10, level_draw));
        const auto b = expand(draw_segments(rng, h, 5, 10, standard_normal));
        const auto c = expand(draw_segments(rng, h, 5, 10, level_draw));
        Matrix rows(h, kCategoricalColumns);
        for (int m = 0; m < h; ++m) {
            const double a1 = a[m] == 2.0 ? 1.0 : 0.0;
            const double a2 = a[m] == 3.0 ? 1.0 : 0.0;
            const double c1 = c[m] == 2.0 ? 1.0 : 0.0;
            const double c2 = c[m] == 3.0 ? 1.0 : 0.0;
            rows.row(m) << a1, a2, b[m], a1 * b[m], a2 * b[m], c1, c2, c1 * b[m], c2 * b[m];
        }
        return compress(rows);
    }
    case ScenarioKind::Interactions: {
        const int pm = spec.p_main;
        std::vector<std::vector<double>> mains;
        for (int j = 0; j < pm; ++j) mains.push_back(expand(draw_segments(rng, h, 2, 3, standard_normal)));
        Matrix rows(h, num_covariates(spec));
        for (int m = 0; m < h; ++m) {
            for (int a = 0; a < pm; ++a) {
                rows(m, a) = mains[a][m];
                for (int b = a + 1; b < pm; ++b) rows(m, interaction_index(pm, a, b)) = mains[a][m] * mains[b][m];
            }
        }
        return compress(rows);
    }
    case ScenarioKind::SparseGroup: {
        Matrix rows(1, num_covariates(spec));
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(0, j) = standard_normal(rng);
        return compress(rows);
    }
    }
    throw InternalError("unknown scenario kind");
}

std::vector<CovariatePath> gen_piecewise_covariates(int n, const ScenarioSpec& spec, std::mt19937_64& rng)
{
    std::vector<CovariatePath> out;
    out.reserve(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) out.push_back(gen_subject_covariates(spec, rng));
    return out;
}

ScenarioTruth scenario_truth(const ScenarioSpec& spec)
{
    check_spec(spec);
    ScenarioTruth truth;
    const int p = num_covariates(spec);
    truth.beta = Vector::Zero(p);
    const double log3 = std::log(3.0);
    switch (spec.kind) {
    case ScenarioKind::CategoricalS1:
    case ScenarioKind::CategoricalS2: {
        truth.beta[kA1] = log3;
        truth.beta[kA2] = log3;
        if (spec.kind == ScenarioKind::CategoricalS2) {
            truth.beta[kB] = log3;
            truth.beta[kA1B] = log3;
            truth.beta[kA2B] = log3;
        }
        auto& s = truth.structure;
        s.p = p;
        s.variables = covariate_names(spec);
        s.groups = {{"A", {kA1, kA2, kA1B, kA2B}, 1.0},
                    {"B", {kB, kA1B, kA2B, kC1B, kC2B}, 1.0},
                    {"AB", {kA1B, kA2B}, 1.0},
                    {"C", {kC1, kC2, kC1B, kC2B}, 1.0},
                    {"CB", {kC1B, kC2B}, 1.0}};
        truth.rules = {SelectionRule::implies({kA1B}, {kA1, kA2, kB}, "heredity"),
                       SelectionRule::implies({kA2B}, {kA1, kA2, kB}, "heredity"),
                       SelectionRule::implies({kC1B}, {kC1, kC2, kB}, "heredity"),
                       SelectionRule::implies({kC2B}, {kC1, kC2, kB}, "heredity"),
                       SelectionRule::collective({kA1, kA2}, "collective"),
                       SelectionRule::collective({kC1, kC2}, "collective"),
                       SelectionRule::collective({kA1B, kA2B}, "collective"),
                       SelectionRule::collective({kC1B, kC2B}, "collective")};
        break;
    }
    case ScenarioKind::Interactions: {
        const int pm = spec.p_main;
        for (int j = 0; j < 9; ++j) truth.beta[j] = 0.4;
        const int pairs[9][2] = {{1, 2}, {1, 3}, {1, 7}, {1, 8}, {1, 9}, {4, 5}, {4, 6}, {7, 8}, {7, 9}};
        for (const auto& pr : pairs) truth.beta[interaction_index(pm, pr[0] - 1, pr[1] - 1)] = 0.3;
        truth.structure = build_strong_heredity(pm);
        truth.rules = strong_heredity_rules(pm, "heredity");
        break;
    }
    case ScenarioKind::SparseGroup: {
        const double signal[5] = {0.1, 0.2, 0.3, 0.4, 0.5};
        for (int copy = 0; copy < spec.sparse_case; ++copy) {
            for (int k = 0; k < 5; ++k) truth.beta[copy * kSparseBlockSize + k] = signal[k];
        }
        std::vector<std::vector<int>> blocks(kSparseBlocks);
        for (int j = 0; j < p; ++j) blocks[j / kSparseBlockSize].push_back(j);
        truth.structure = build_sparse_group(blocks, 0.5, 0.5);
        truth.structure.variables = covariate_names(spec);
        break;
    }
    }
    for (int j = 0; j < p; ++j) (truth.beta[j] != 0.0 ? truth.true_set : truth.noise_set).push_back(j);
    return truth;
}

double event_time(const CovariatePath& path, const Vector& beta, double h0, double exposure)
{
    if (!(h0 > 0.0) || !(exposure >= 0.0)) throw InputError("event time needs h0 > 0 and exposure >= 0");
    double remaining = exposure / h0;
    const auto pieces = static_cast<std::size_t>(path.rows.rows());
    for (std::size_t k = 0; k < pieces; ++k) {
        const double rate = std::exp(path.rows.row(static_cast<Eigen::Index>(k)).dot(beta));
        const double begin = path.change_times[k];
        if (k + 1 == pieces) return begin + remaining / rate;
        const double length = path.change_times[k + 1] - begin;
        if (remaining <= rate * length) return begin + remaining / rate;
        remaining -= rate * length;
    }
    throw InternalError("covariate path has no pieces");
}

Calibration calibrate(const ScenarioSpec& spec, const Vector& beta, int draws, std::uint64_t seed)
{
    check_spec(spec);
    if (draws < 100) throw InputError("calibration needs at least 100 draws");
    const std::string name = scenario_name(spec);
    auto covariate_rng = derive_stream(seed, "calibration-covariates:" + name);
    auto outcome_rng = derive_stream(seed, "calibration-outcomes:" + name);
    const auto paths = gen_piecewise_covariates(draws, spec, covariate_rng);
    std::vector<double> exposure(static_cast<std::size_t>(draws));
    std::vector<double> fraction(static_cast<std::size_t>(draws));
    for (int i = 0; i < draws; ++i) {
        exposure[i] = -std::log1p(-uniform01(outcome_rng));
        fraction[i] = uniform01(outcome_rng);
    }
    const double target_median = 0.5 * horizon(spec);

    std::vector<double> times(static_cast<std::size_t>(draws));
    const auto censored_at = [&](double c) {
        int count = 0;
        for (int i = 0; i < draws; ++i) count += times[i] > fraction[i] * c ? 1 : 0;
        return static_cast<double>(count) / draws;
    };
    // Censoring bound hitting the target for the current times.
    const auto solve_censoring = [&]() {
        double lo = 0.0;
        double hi = 1.0;
        while (censored_at(hi) > spec.censoring) {
            hi *= 2.0;
            if (hi > 1e300) throw InputError("censoring target is unattainable");
        }
        for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (censored_at(mid) > spec.censoring ? lo : hi) = mid;
        }
        return hi;
    };
    const auto observed_median = [&](double c) {
        std::vector<double> events;
        for (int i = 0; i < draws; ++i) {
            if (times[i] <= fraction[i] * c) events.push_back(times[i]);
        }
        return median(std::move(events));
    };
    const auto evaluate = [&](double h0, double& c) {
        for (int i = 0; i < draws; ++i) times[i] = event_time(paths[i], beta, h0, exposure[i]);
        c = solve_censoring();
        return observed_median(c);
    };

    // The observed median falls as h0 grows.
    double c = 0.0;
    double lo = 1.0 / target_median;
    double hi = lo;
    while (!(evaluate(lo, c) > target_median)) {
        lo /= 4.0;
        if (lo < 1e-300) throw InputError("median event-time target is unattainable");
    }
    while (!(evaluate(hi, c) < target_median)) {
        hi *= 4.0;
        if (hi > 1e300) throw InputError("median event-time target is unattainable");
    }
    for (int it = 0; it < 100 && hi / lo > 1.0 + 1e-12; ++it) {
        const double mid = std::sqrt(lo * hi);
        (evaluate(mid, c) > target_median ? lo : hi) = mid;
    }
    Calibration cal;
    cal.baseline_hazard = std::sqrt(lo * hi);
    cal.median_event_time = evaluate(cal.baseline_hazard, cal.censoring_max);
    cal.realized_censoring = censored_at(cal.censoring_max);
    cal.draws = draws;
    cal.seed = seed;
    if (std::abs(cal.median_event_time - target_median) > 0.05 * target_median ||
        std::abs(cal.realized_censoring - spec.censoring) > 0.01) {
        throw InputError("calibration targets are unattainable for this design");
    }
    return cal;
}

SurvivalDataset gen_event_times(std::span<const CovariatePath> paths, const Vector& beta,
                                const Calibration& calibration, std::vector<std::string> names,
                                std::mt19937_64& rng)
{
    if (!(calibration.baseline_hazard > 0.0) || !(calibration.censoring_max > 0.0)) {
        throw InputError("calibration is not set");
    }
    std::vector<CountingRecord> records;
    for (std::size_t s = 0; s < paths.size(); ++s) {
        const auto& path = paths[s];
        if (path.rows.cols() != beta.size()) throw InputError("coefficients do not match the covariates");
        const double exposure = -std::log1p(-uniform01(rng));
        double fraction = uniform01(rng);
        while (fraction <= 0.0) fraction = uniform01(rng);
        const double t = event_time(path, beta, calibration.baseline_hazard, exposure);
        const double c = fraction * calibration.censoring_max;
        const double y = std::min(t, c);
        const bool event = t <= c;
        const auto id = fmt::format("{}", s + 1);
        const auto pieces = static_cast<std::size_t>(path.rows.rows());
        for (std::size_t k = 0; k < pieces && path.change_times[k] < y; ++k) {
            const bool last = k + 1 == pieces || path.change_times[k + 1] >= y;
            CountingRecord r;
            r.subject_id = id;
            r.start = path.change_times[k];
            r.stop = last ? y : path.change_times[k + 1];
            r.event = last && event;
            const auto row = path.rows.row(static_cast<Eigen::Index>(k));
            r.covariates.assign(row.data(), row.data() + row.size());
            records.push_back(std::move(r));
            if (last) break;
        }
    }
    return SurvivalDataset::from_records(records, std::move(names));
}

SurvivalDataset generate_dataset(const ScenarioSpec& spec, const Calibration& calibration, int replication)
{
    const auto truth = scenario_truth(spec);
    auto covariate_rng = derive_stream(spec.seed, "covariates", static_cast<std::uint64_t>(replication));
    auto outcome_rng = derive_stream(spec.seed, "outcomes", static_cast<std::uint64_t>(replication));
    const auto paths = gen_piecewise_covariates(spec.n, spec, covariate_rng);
    return gen_event_times(paths, truth.beta, calibration, covariate_names(spec), outcome_rng);
}

namespace {

MetricRow make_row(int replication, std::string method, std::string rule, const CvResult& cv, int idx,
                   const RiskIndex& index, const ScenarioTruth& truth)
{
    MetricRow row;
    row.replication = replication;
    row.method = std::move(method);
    row.rule = std::move(rule);
    row.lambda = cv.lambdas[idx];
    row.cv_error = cv.mean_cve[idx];
    const auto& fit = cv.full_path.fits[idx];
    row.beta = fit.beta;
    row.converged = fit.converged;
    const auto selected = selection_support(fit.beta, 0.0);
    row.nonzero = static_cast<int>(selected.size());
    row.report = metrics(selected, fit.beta, truth.beta, truth.rules);
    row.report.c_index = concordance(index, fit.beta);
    return row;
}

} // namespace

ExperimentResult run_experiment(const ScenarioSpec& spec, const ExperimentConfig& config)
{
    check_spec(spec);
    if (config.replications < 1) throw InputError("replications must be at least 1");
    ExperimentResult result;
    result.truth = scenario_truth(spec);
    result.calibration = calibrate(spec, result.truth.beta);
    const auto& structure = result.truth.structure;

    for (int r = 0; r < config.replications; ++r) {
        try {
            const auto data = generate_dataset(spec, result.calibration, r);
            const auto index = build_risk_index(data);
            CvOptions options;
            options.folds = config.folds;
            options.threads = config.threads;
            options.seed = derive_stream(spec.seed, "folds", static_cast<std::uint64_t>(r))();
            const auto lambdas = lambda_sequence(index, structure, config.n_lambda, config.min_ratio);
            const auto cv = cross_validate(data, structure, lambdas, options, config.fit);
            result.rows.push_back(make_row(r + 1, "sox", "min", cv, cv.index_min, index, result.truth));
            result.rows.push_back(make_row(r + 1, "sox", "1se", cv, cv.index_1se, index, result.truth));
            if (config.debias) {
                const auto adaptive = adaptive_weights(cv.full_path.fits[cv.index_min].beta, structure);
                const auto db_lambdas = lambda_sequence(index, adaptive, config.n_lambda, config.min_ratio);
                const auto db = cross_validate(data, adaptive, db_lambdas, options, config.fit);
                result.rows.push_back(make_row(r + 1, "sox.db", "min", db, db.index_min, index, result.truth));
                result.rows.push_back(make_row(r + 1, "sox.db", "1se", db, db.index_1se, index, result.truth));
            }
        } catch (const InputError& e) {
            throw InputError(fmt::format("replication {}: {}", r + 1, e.what()));
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("replication {}: {}", r + 1, e.what()));
        }
    }
    return result;
}

std::string format_metrics(const ExperimentResult& result)
{
    const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
    std::string out = "replication,method,rule,lambda,cv_error,nonzero,mr,far,mse,r1s,r2s,c_index,converged\n";
    struct Mean {
        int count = 0;
        double lambda = 0, cve = 0, nonzero = 0, mse = 0, r1s = 0, r2s = 0, cindex = 0, converged = 0;
        double mr = 0, far = 0;
        int mr_count = 0, far_count = 0;
    };
    std::map<std::pair<std::string, std::string>, Mean> means;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& row : result.rows) {
        const bool r1 = row.report.family_satisfied("heredity");
        const bool r2 = row.report.family_satisfied("collective");
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", row.replication, row.method, row.rule,
                           format_double(row.lambda), format_double(row.cv_error), row.nonzero,
                           opt(row.report.miss_rate), opt(row.report.false_alarm_rate), format_double(row.report.mse),
                           r1 ? 1 : 0, r2 ? 1 : 0, opt(row.report.c_index), row.converged ? 1 : 0);
        const auto key = std::make_pair(row.method, row.rule);
        if (!means.count(key)) order.push_back(key);
        auto& m = means[key];
        ++m.count;
        m.lambda += row.lambda;
        m.cve += row.cv_error;
        m.nonzero += row.nonzero;
        m.mse += row.report.mse;
        m.r1s += r1 ? 1 : 0;
        m.r2s += r2 ? 1 : 0;
        m.cindex += row.report.c_index.value_or(0.0);
        m.converged += row.converged ? 1 : 0;
        if (row.report.miss_rate) {
            m.mr += *row.report.miss_rate;
            ++m.mr_count;
        }
        if (row.report.false_alarm_rate) {
            m.far += *row.report.false_alarm_rate;
            ++m.far_count;
        }
    }
    for (const auto& key : order) {
        const auto& m = means[key];
        const double k = m.count;
        out += fmt::format("mean,{},{},{},{},{},{},{},{},{},{},{},{}\n", key.first, key.second,
                           format_double(m.lambda / k), format_double(m.cve / k), format_double(m.nonzero / k),
                           m.mr_count ? format_double(m.mr / m.mr_count) : "NA",
                           m.far_count ? format_double(m.far / m.far_count) : "NA", format_double(m.mse / k),
                           format_double(m.r1s / k), format_double(m.r2s / k), format_double(m.cindex / k),
                           format_double(m.converged / k));
    }
    return out;
}

} // namespace structcox

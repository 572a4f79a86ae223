#include "structcox/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

#include "structcox/error.hpp"
#include "structcox/parallel.hpp"
#include "structcox/rng.hpp"

namespace structcox {

double lambda_max(const RiskIndex& index, const GroupingStructure& structure)
{
    const Vector g = gradient(index, Vector::Zero(index.num_covariates()));
    double best = 0.0;
    for (const auto& group : structure.groups) {
        double norm = 0.0;
        for (int j : group.members) norm += std::abs(g[j]);
        best = std::max(best, norm / group.weight);
    }
    // Rounding leaves a residue when the gradient vanishes analytically.
    const double noise = 1e-12 * index.total_events() * std::max(1.0, index.covariates().cwiseAbs().maxCoeff());
    double min_weight = std::numeric_limits<double>::infinity();
    for (const auto& group : structure.groups) min_weight = std::min(min_weight, group.weight);
    if (!std::isfinite(best) || !(best > noise / min_weight)) throw InputError("gradient at zero vanishes on every group");
    return best;
}

std::vector<double> log_spaced(double hi, int count, double min_ratio)
{
    if (count < 1) throw InputError("lambda count must be at least 1");
    if (!(hi > 0.0) || !std::isfinite(hi)) throw InputError("largest lambda must be positive");
    if (count == 1) return {hi};
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw InputError("lambda ratio must lie in (0, 1)");
    std::vector<double> out(static_cast<std::size_t>(count));
    const double log_hi = std::log(hi);
    const double step = std::log(min_ratio) / (count - 1);
    out[0] = hi;
    for (int i = 1; i < count - 1; ++i) out[i] = std::exp(log_hi + step * i);
    out[count - 1] = hi * min_ratio;
    return out;
}

std::vector<double> lambda_sequence(const RiskIndex& index, const GroupingStructure& structure, int n_lambda,
                                    double min_ratio)
{
    if (n_lambda < 2) throw InputError("lambda sequence needs at least two values");
    return log_spaced(lambda_max(index, structure), n_lambda, min_ratio);
}

LambdaPath solution_path(const RiskIndex& index, const ProxSolver& prox, std::span<const double> lambdas,
                         const FitConfig& config)
{
    if (lambdas.empty()) throw InputError("lambda list is empty");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i])) throw InputError("lambdas must be non-negative");
        if (i > 0 && !(lambdas[i] < lambdas[i - 1])) throw InputError("lambdas must be strictly decreasing");
    }
    LambdaPath path;
    path.lambdas.assign(lambdas.begin(), lambdas.end());
    std::optional<Vector> warm;
    for (double lambda : lambdas) {
        FitConfig c = config;
        c.lambda = lambda;
        try {
            path.fits.push_back(fit(index, prox, c, warm));
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("lambda {}: {}", lambda, e.what()));
        }
        warm = path.fits.back().beta;
    }
    return path;
}

double cv_error(const RiskIndex& full, const RiskIndex& train, int test_events, const Vector& beta)
{
    if (test_events < 1) throw InputError("test fold has no events");
    const double f_full = neg_log_partial_likelihood(full, beta);
    const double f_train = neg_log_partial_likelihood(train, beta);
    return 2.0 * (f_full - f_train) / test_events;
}

std::vector<int> assign_folds(const SurvivalDataset& data, int k, std::uint64_t seed)
{
    const int n = data.num_subjects();
    if (k < 2) throw InputError("at least two folds are required");
    if (k > n) throw InputError(fmt::format("{} folds requested for {} subjects", k, n));
    std::vector<char> has_event(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < data.num_records(); ++i) {
        if (data.event[i]) has_event[data.subject[i]] = 1;
    }
    std::vector<int> events;
    std::vector<int> censored;
    for (int s = 0; s < n; ++s) (has_event[s] ? events : censored).push_back(s);
    auto rng = derive_stream(seed, "folds");
    const auto shuffle = [&](std::vector<int>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[uniform_int(rng, 0, i)]);
    };
    shuffle(events);
    shuffle(censored);
    std::vector<int> fold(static_cast<std::size_t>(n), 0);
    int next = 0;
    for (int s : events) fold[s] = next++ % k;
    for (int s : censored) fold[s] = next++ % k;
    return fold;
}

LambdaChoice choose_lambdas(std::span<const double> lambdas, std::span<const double> mean,
                            std::span<const double> se)
{
    if (lambdas.empty() || mean.size() != lambdas.size() || se.size() != lambdas.size()) {
        throw InputError("CV summaries must be non-empty and aligned");
    }
    LambdaChoice choice;
    for (std::size_t l = 1; l < mean.size(); ++l) {
        if (mean[l] < mean[choice.index_min]) choice.index_min = static_cast<int>(l);
    }
    const double bound = mean[choice.index_min] + se[choice.index_min];
    choice.index_1se = choice.index_min;
    for (int l = 0; l < choice.index_min; ++l) {
        if (mean[l] <= bound) {
            choice.index_1se = l;
            break;
        }
    }
    return choice;
}

CvResult cross_validate(const SurvivalDataset& data, const GroupingStructure& structure,
                        std::span<const double> lambdas, const CvOptions& options, const FitConfig& config)
{
    const int k = options.folds;
    CvResult result;
    result.lambdas.assign(lambdas.begin(), lambdas.end());
    result.fold_of_subject = assign_folds(data, k, options.seed);

    std::vector<std::vector<int>> train_subjects(static_cast<std::size_t>(k));
    std::vector<int> test_events(static_cast<std::size_t>(k), 0);
    for (int s = 0; s < data.num_subjects(); ++s) {
        for (int f = 0; f < k; ++f) {
            if (result.fold_of_subject[s] != f) train_subjects[f].push_back(s);
        }
    }
    for (int i = 0; i < data.num_records(); ++i) {
        if (data.event[i]) ++test_events[result.fold_of_subject[data.subject[i]]];
    }
    for (int f = 0; f < k; ++f) {
        if (test_events[f] == 0) {
            throw InputError(fmt::format("fold {} has no events; use fewer folds", f + 1));
        }
    }

    const RiskIndex full = build_risk_index(data);
    const ProxSolver prox(structure);
    result.fold_errors.assign(static_cast<std::size_t>(k), {});
    // Task k fits the full data; tasks 0..k-1 fit the training folds.
    parallel_for(static_cast<std::size_t>(k) + 1, options.threads, [&](std::size_t task) {
        if (task == static_cast<std::size_t>(k)) {
            result.full_path = solution_path(full, prox, lambdas, config);
            return;
        }
        const SurvivalDataset train_data = data.subset_subjects(train_subjects[task]);
        const RiskIndex train = build_risk_index(train_data);
        LambdaPath path;
        try {
            path = solution_path(train, prox, lambdas, config);
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("fold {}: {}", task + 1, e.what()));
        }
        auto& errors = result.fold_errors[task];
        for (const auto& f : path.fits) errors.push_back(cv_error(full, train, test_events[task], f.beta));
    });

    const std::size_t num_lambdas = lambdas.size();
    result.mean_cve.assign(num_lambdas, 0.0);
    result.se_cve.assign(num_lambdas, 0.0);
    for (std::size_t l = 0; l < num_lambdas; ++l) {
        double sum = 0.0;
        for (int f = 0; f < k; ++f) sum += result.fold_errors[f][l];
        const double mean = sum / k;
        double ss = 0.0;
        for (int f = 0; f < k; ++f) ss += (result.fold_errors[f][l] - mean) * (result.fold_errors[f][l] - mean);
        result.mean_cve[l] = mean;
        result.se_cve[l] = std::sqrt(ss / (k - 1)) / std::sqrt(static_cast<double>(k));
    }
    for (const auto& f : result.full_path.fits) {
        result.nonzero.push_back(static_cast<int>(selection_support(f.beta, 0.0).size()));
    }
    const auto choice = choose_lambdas(result.lambdas, result.mean_cve, result.se_cve);
    result.index_min = choice.index_min;
    result.index_1se = choice.index_1se;
    result.lambda_min = result.lambdas[choice.index_min];
    result.lambda_1se = result.lambdas[choice.index_1se];
    return result;
}

GroupingStructure adaptive_weights(const Vector& beta, const GroupingStructure& structure)
{
    if (beta.size() != structure.p) throw InputError("prior fit has the wrong number of coefficients");
    GroupingStructure out = structure;
    for (auto& g : out.groups) {
        double m = 0.0;
        for (int j : g.members) m = std::max(m, std::abs(beta[j]));
        g.weight = 1.0 / std::max(m, 1e-16);
    }
    return out;
}

GroupingStructure adaptive_weights(const FitResult& prior, const GroupingStructure& structure)
{
    return adaptive_weights(prior.beta, structure);
}

double concordance(const RiskIndex& index, const Vector& beta)
{
    const Vector eta = index.covariates() * beta;
    double concordant = 0.0;
    long long pairs = 0;
    for (int l = 0; l < index.num_event_times(); ++l) {
        const auto events = index.event_set(l);
        const auto risk = index.risk_set(l);
        for (int i : events) {
            for (int j : risk) {
                if (std::binary_search(events.begin(), events.end(), j)) continue;
                ++pairs;
                if (eta[i] > eta[j]) {
                    concordant += 1.0;
                } else if (eta[i] == eta[j]) {
                    concordant += 0.5;
                }
            }
        }
    }
    if (pairs == 0) throw InputError("no comparable pairs for the concordance index");
    return concordant / static_cast<double>(pairs);
}

bool MetricReport::family_satisfied(const std::string& family) const
{
    for (std::size_t r = 0; r < rules.size(); ++r) {
        if (rule_families[r] == family && !rules[r]) return false;
    }
    return true;
}

MetricReport metrics(std::span<const int> selected, const Vector& beta_hat, const Vector& truth,
                     std::span<const SelectionRule> rules)
{
    if (beta_hat.size() != truth.size()) throw InputError("estimate and truth differ in length");
    const auto p = truth.size();
    std::vector<char> chosen(static_cast<std::size_t>(p), 0);
    for (int j : selected) {
        if (j < 0 || j >= p) throw InputError("selected index out of range");
        chosen[j] = 1;
    }
    int num_true = 0;
    int missed = 0;
    int num_noise = 0;
    int alarms = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (truth[j] != 0.0) {
            ++num_true;
            missed += chosen[j] ? 0 : 1;
        } else {
            ++num_noise;
            alarms += chosen[j] ? 1 : 0;
        }
    }
    MetricReport report;
    if (num_true > 0) report.miss_rate = static_cast<double>(missed) / num_true;
    if (num_noise > 0) report.false_alarm_rate = static_cast<double>(alarms) / num_noise;
    report.mse = p > 0 ? (beta_hat - truth).squaredNorm() / static_cast<double>(p) : 0.0;
    report.rules = check_rules(selected, rules);
    for (const auto& r : rules) report.rule_families.push_back(r.family);
    return report;
}

} // namespace structcox

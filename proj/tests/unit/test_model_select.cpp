#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles/naive_cox.hpp"
#include "../oracles/random_data.hpp"
#include "structcox/error.hpp"
#include "structcox/model_select.hpp"
#include "structcox/simulate.hpp"

using namespace structcox;

namespace {

GroupingStructure singletons(int p)
{
    GroupingStructure s;
    s.p = p;
    for (int j = 0; j < p; ++j) s.groups.push_back({"x" + std::to_string(j + 1), {j}, 1.0});
    return s;
}

SurvivalDataset ordered_data(int n)
{
    std::vector<CountingRecord> records;
    for (int i = 0; i < n; ++i) records.push_back({"s" + std::to_string(i), 0.0, i + 1.0, true, {-double(i)}});
    return SurvivalDataset::from_records(records, {"x"});
}

SurvivalDataset categorical_data(int n, std::uint64_t seed)
{
    ScenarioSpec spec;
    spec.n = n;
    spec.seed = seed;
    const auto truth = scenario_truth(spec);
    return generate_dataset(spec, calibrate(spec, truth.beta, 2000), 0);
}

} // namespace

TEST_SUITE("model_select")
{
    TEST_CASE("two-point sequence")
    {
        std::mt19937_64 rng(3);
        const auto idx = build_risk_index(oracle::random_dataset(rng, 30, 3));
        const auto s = singletons(3);
        const auto seq = lambda_sequence(idx, s, 2, 0.5);
        REQUIRE(seq.size() == 2);
        CHECK(seq[0] == lambda_max(idx, s));
        CHECK(seq[1] == doctest::Approx(seq[0] / 2).epsilon(1e-15));
    }

    TEST_CASE("sequence is strictly decreasing and log-uniform")
    {
        const auto seq = log_spaced(3.7, 30, 0.01);
        REQUIRE(seq.size() == 30);
        const double step = std::log(seq[1]) - std::log(seq[0]);
        for (std::size_t l = 1; l < seq.size(); ++l) {
            CHECK(seq[l] < seq[l - 1]);
            CHECK(std::abs(std::log(seq[l]) - std::log(seq[l - 1]) - step) < 1e-12);
        }
        CHECK(seq.back() == doctest::Approx(0.037).epsilon(1e-12));
        CHECK(log_spaced(2.0, 1, 0.5) == std::vector<double>{2.0});
    }

    TEST_CASE("sequence errors")
    {
        std::mt19937_64 rng(5);
        const auto idx = build_risk_index(oracle::random_dataset(rng, 30, 2));
        CHECK_THROWS_AS(lambda_sequence(idx, singletons(2), 1, 0.1), InputError);
        CHECK_THROWS_AS(lambda_sequence(idx, singletons(2), 5, 1.0), InputError);
        CHECK_THROWS_AS(lambda_sequence(idx, singletons(2), 5, 0.0), InputError);
        std::vector<CountingRecord> same;
        for (int i = 0; i < 6; ++i) same.push_back({"s" + std::to_string(i), 0, 1.0 + i, i % 2 == 0, {1.0}});
        const auto flat = build_risk_index(SurvivalDataset::from_records(same, {"x"}));
        CHECK_THROWS_AS(lambda_sequence(flat, singletons(1), 5, 0.1), InputError);
    }

    TEST_CASE("singleton lambda max zeroes the fit")
    {
        std::mt19937_64 rng(7);
        for (int rep = 0; rep < 10; ++rep) {
            const auto idx = build_risk_index(oracle::random_dataset(rng, 40, 4));
            const auto s = singletons(4);
            FitConfig c;
            c.lambda = lambda_max(idx, s);
            CHECK(fit(idx, s, c).beta.isZero(0.0));
            CHECK(lambda_max(idx, s) == doctest::Approx(gradient(idx, Vector::Zero(4)).lpNorm<Eigen::Infinity>()));
        }
    }

    TEST_CASE("paths")
    {
        std::mt19937_64 rng(11);
        const auto idx = build_risk_index(oracle::random_dataset(rng, 60, 4));
        const auto s = oracle::random_structure(rng, 4, 3);
        const ProxSolver solver(s);
        FitConfig c;
        c.tol = 1e-8;
        const double top = lambda_max(idx, s);

        const std::vector<double> above{4 * top, 2 * top, 1.01 * top};
        for (const auto& f : solution_path(idx, solver, above, c).fits) CHECK(f.beta.isZero(0.0));

        const std::vector<double> single{0.3 * top};
        c.lambda = 0.3 * top;
        CHECK(solution_path(idx, solver, single, c).fits[0].beta == fit(idx, solver, c).beta);

        const auto seq = lambda_sequence(idx, s, 10, 0.01);
        const auto path = solution_path(idx, solver, seq, c);
        for (std::size_t l = 0; l < seq.size(); ++l) {
            c.lambda = seq[l];
            CHECK(std::abs(fit(idx, solver, c).objective() - path.fits[l].objective()) < 1e-6);
        }

        const std::vector<double> rising{0.1, 0.2};
        CHECK_THROWS_AS(solution_path(idx, solver, rising, c), InputError);
        const std::vector<double> empty;
        CHECK_THROWS_AS(solution_path(idx, solver, empty, c), InputError);
    }

    TEST_CASE("nonzero count grows along a categorical path")
    {
        const auto d = categorical_data(300, 3);
        const auto s = scenario_truth(ScenarioSpec{}).structure;
        const auto idx = build_risk_index(d);
        const auto seq = lambda_sequence(idx, s, 30, 0.01);
        const auto path = solution_path(idx, ProxSolver(s), seq, FitConfig{});
        for (std::size_t l = 1; l < seq.size(); ++l) {
            CHECK(selection_support(path.fits[l].beta, 0.0).size() >=
                  selection_support(path.fits[l - 1].beta, 0.0).size());
        }
    }

    TEST_CASE("cv error")
    {
        std::mt19937_64 rng(13);
        const auto d = oracle::random_dataset(rng, 40, 3);
        std::vector<int> train_subjects;
        for (int i = 0; i < d.num_subjects(); ++i) {
            if (i % 4) train_subjects.push_back(i);
        }
        const auto train = d.subset_subjects(train_subjects);
        const auto full_idx = build_risk_index(d);
        const auto train_idx = build_risk_index(train);
        const int r = d.num_events() - train.num_events();
        REQUIRE(r > 0);
        CHECK_THROWS_AS(cv_error(full_idx, train_idx, 0, Vector::Zero(3)), InputError);

        double full0 = 0.0;
        double train0 = 0.0;
        for (int l = 0; l < full_idx.num_event_times(); ++l) {
            full0 += full_idx.tie_count(l) * std::log(double(full_idx.risk_set(l).size()));
        }
        for (int l = 0; l < train_idx.num_event_times(); ++l) {
            train0 += train_idx.tie_count(l) * std::log(double(train_idx.risk_set(l).size()));
        }
        CHECK(cv_error(full_idx, train_idx, r, Vector::Zero(3)) ==
              doctest::Approx(2 * (full0 - train0) / r).epsilon(1e-12));

        const Vector beta = oracle::random_vector(rng, 3, 0.5);
        CHECK(cv_error(full_idx, train_idx, r, beta) ==
              doctest::Approx(2 * (oracle::naive_loss(d, beta) - oracle::naive_loss(train, beta)) / r).epsilon(1e-10));
    }

    TEST_CASE("lambda choice rules")
    {
        const std::vector<double> lambdas{1.0, 0.5, 0.1};
        const std::vector<double> mean{2.0, 1.5, 1.4};
        const std::vector<double> se{0.1, 0.1, 0.2};
        const auto c = choose_lambdas(lambdas, mean, se);
        CHECK(c.index_min == 2);
        CHECK(c.index_1se == 1);

        const std::vector<double> zero{0.0, 0.0, 0.0};
        const auto z = choose_lambdas(lambdas, mean, zero);
        CHECK(z.index_1se == z.index_min);

        std::mt19937_64 rng(17);
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<double> m(8);
            std::vector<double> s(8);
            for (int l = 0; l < 8; ++l) {
                m[l] = oracle::random_vector(rng, 1)[0];
                s[l] = std::abs(oracle::random_vector(rng, 1)[0]);
            }
            const auto seq = log_spaced(1.0, 8, 0.01);
            const auto ch = choose_lambdas(seq, m, s);
            CHECK(seq[ch.index_1se] >= seq[ch.index_min]);
        }
    }

    TEST_CASE("fold assignment")
    {
        std::mt19937_64 rng(19);
        const auto d = oracle::random_dataset(rng, 57, 2);
        const auto a = assign_folds(d, 5, 99);
        CHECK(a == assign_folds(d, 5, 99));
        CHECK(a != assign_folds(d, 5, 100));
        REQUIRE(static_cast<int>(a.size()) == d.num_subjects());
        std::vector<int> events(5, 0);
        std::vector<int> sizes(5, 0);
        std::vector<char> has_event(d.num_subjects(), 0);
        for (int i = 0; i < d.num_records(); ++i) {
            if (d.event[i]) has_event[d.subject[i]] = 1;
        }
        for (int i = 0; i < d.num_subjects(); ++i) {
            ++sizes[a[i]];
            events[a[i]] += has_event[i];
        }
        CHECK(*std::max_element(events.begin(), events.end()) - *std::min_element(events.begin(), events.end()) <= 1);
        CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 2);
        CHECK_THROWS_AS(assign_folds(d, 1, 0), InputError);
        CHECK_THROWS_AS(assign_folds(d, 58, 0), InputError);
    }

    TEST_CASE("leave-one-out with censored subjects is rejected")
    {
        std::mt19937_64 rng(23);
        const auto d = oracle::random_dataset(rng, 12, 2);
        REQUIRE(d.num_events() < d.num_subjects());
        CvOptions o;
        o.folds = d.num_subjects();
        const auto s = singletons(2);
        CHECK_THROWS_WITH_AS(cross_validate(d, s, log_spaced(0.5, 3, 0.1), o, FitConfig{}),
                             doctest::Contains("no events"), InputError);
    }

    TEST_CASE("cross validation is thread-count invariant")
    {
        const auto d = categorical_data(200, 5);
        const auto s = scenario_truth(ScenarioSpec{}).structure;
        const auto lambdas = lambda_sequence(build_risk_index(d), s, 8, 0.05);
        CvOptions o;
        o.folds = 5;
        o.seed = 41;
        const auto serial = cross_validate(d, s, lambdas, o, FitConfig{});
        o.threads = 3;
        const auto parallel = cross_validate(d, s, lambdas, o, FitConfig{});
        CHECK(serial.mean_cve == parallel.mean_cve);
        CHECK(serial.se_cve == parallel.se_cve);
        CHECK(serial.nonzero == parallel.nonzero);
        CHECK(serial.lambda_min == parallel.lambda_min);
        CHECK(serial.lambda_1se == parallel.lambda_1se);
        CHECK(serial.lambda_1se >= serial.lambda_min);

        // Means and standard errors follow from the fold errors.
        for (std::size_t l = 0; l < lambdas.size(); ++l) {
            double sum = 0.0;
            for (const auto& f : serial.fold_errors) sum += f[l];
            const double mean = sum / 5;
            double ss = 0.0;
            for (const auto& f : serial.fold_errors) ss += (f[l] - mean) * (f[l] - mean);
            CHECK(serial.mean_cve[l] == doctest::Approx(mean).epsilon(1e-12));
            CHECK(serial.se_cve[l] == doctest::Approx(std::sqrt(ss / 4) / std::sqrt(5.0)).epsilon(1e-12));
        }
        const auto ch = choose_lambdas(serial.lambdas, serial.mean_cve, serial.se_cve);
        CHECK(ch.index_min == serial.index_min);
        CHECK(ch.index_1se == serial.index_1se);

        // Monotone paths make the 1se model the sparser one.
        if (std::is_sorted(serial.nonzero.begin(), serial.nonzero.end())) {
            CHECK(serial.nonzero[serial.index_1se] <= serial.nonzero[serial.index_min]);
        }
    }

    TEST_CASE("adaptive weights")
    {
        GroupingStructure s;
        s.p = 3;
        s.groups.push_back({"a", {0, 1}, 1.0});
        s.groups.push_back({"b", {2}, 1.0});
        const auto zero = adaptive_weights(Vector::Zero(3), s);
        for (const auto& g : zero.groups) CHECK(g.weight == 1e16);
        Vector b(3);
        b << -0.5, 0.25, 0.0;
        const auto w = adaptive_weights(b, s);
        CHECK(w.groups[0].weight == 2.0);
        CHECK(w.groups[0].members == s.groups[0].members);
        CHECK(w.groups[1].weight == 1e16);
        CHECK_THROWS_AS(adaptive_weights(Vector::Zero(2), s), InputError);
    }

    TEST_CASE("concordance")
    {
        const auto idx = build_risk_index(ordered_data(10));
        CHECK(concordance(idx, Vector::Ones(1)) == 1.0);
        CHECK(concordance(idx, -Vector::Ones(1)) == 0.0);
        CHECK(concordance(idx, Vector::Zero(1)) == 0.5);

        std::mt19937_64 rng(29);
        double total = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            const auto d = oracle::random_dataset(rng, 40, 3);
            total += concordance(build_risk_index(d), oracle::random_vector(rng, 3));
        }
        CHECK(total / 100 >= 0.45);
        CHECK(total / 100 <= 0.55);

        const auto lone = build_risk_index(SurvivalDataset::from_records(
            std::vector<CountingRecord>{{"a", 0, 1, true, {1.0}}}, {"x"}));
        CHECK_THROWS_AS(concordance(lone, Vector::Zero(1)), InputError);
    }

    TEST_CASE("selection metrics")
    {
        Vector truth(5);
        truth << 1, 1, 0, 0, 0;
        const std::vector<SelectionRule> none;
        const std::vector<int> one{0};
        CHECK(*metrics(one, Vector::Zero(5), truth, none).miss_rate == 0.5);
        const std::vector<int> noisy{0, 1, 2};
        CHECK(*metrics(noisy, Vector::Zero(5), truth, none).false_alarm_rate == doctest::Approx(1.0 / 3));
        const std::vector<int> exact{0, 1};
        const auto perfect = metrics(exact, truth, truth, none);
        CHECK(*perfect.miss_rate == 0.0);
        CHECK(*perfect.false_alarm_rate == 0.0);
        CHECK(perfect.mse == 0.0);
        const std::vector<int> all{0, 1, 2, 3, 4};
        const auto everything = metrics(all, truth, truth, none);
        CHECK(*everything.miss_rate == 0.0);
        CHECK(*everything.false_alarm_rate == 1.0);
        Vector off = truth;
        off[4] = 1.0;
        CHECK(metrics(exact, off, truth, none).mse == doctest::Approx(0.2));

        CHECK(!metrics(one, Vector::Zero(5), Vector::Zero(5), none).miss_rate);
        CHECK(!metrics(one, Vector::Ones(5), Vector::Ones(5), none).false_alarm_rate);

        const std::vector<SelectionRule> rules{SelectionRule::implies({2}, {0, 1}, "heredity"),
                                               SelectionRule::collective({3, 4}, "collective")};
        const std::vector<int> bad{2, 3};
        const auto r = metrics(bad, Vector::Zero(5), truth, rules);
        CHECK(r.rules == std::vector<bool>{false, false});
        CHECK(!r.family_satisfied("heredity"));
        CHECK(metrics(exact, truth, truth, rules).family_satisfied("heredity"));
        CHECK(metrics(exact, truth, truth, rules).family_satisfied("other"));
    }
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles/naive_cox.hpp"
#include "../oracles/random_data.hpp"
#include "structcox/error.hpp"
#include "structcox/survival.hpp"
#include "structcox/survival_io.hpp"

using namespace structcox;

namespace {

SurvivalDataset make(std::vector<CountingRecord> records, int p)
{
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return SurvivalDataset::from_records(records, names);
}

CountingRecord rec(std::string id, double start, double stop, bool event, std::vector<double> x)
{
    return {std::move(id), start, stop, event, std::move(x)};
}

} // namespace

TEST_SUITE("survival")
{
    TEST_CASE("two subjects give two event times")
    {
        const auto d = make({rec("a", 0, 5, true, {1}), rec("b", 0, 8, true, {0})}, 1);
        const auto idx = build_risk_index(d);
        REQUIRE(idx.num_event_times() == 2);
        CHECK(idx.risk_set(0) == std::vector<int>{0, 1});
        CHECK(idx.risk_set(1) == std::vector<int>{1});
        CHECK(idx.tie_count(0) == 1);
        CHECK(idx.tie_count(1) == 1);
    }

    TEST_CASE("tied failures share one event time")
    {
        const auto d = make({rec("a", 0, 5, true, {1}), rec("b", 0, 5, true, {0}), rec("c", 0, 9, false, {0})}, 1);
        const auto idx = build_risk_index(d);
        REQUIRE(idx.num_event_times() == 1);
        CHECK(idx.tie_count(0) == 2);
        CHECK(idx.risk_set(0).size() == 3);
    }

    TEST_CASE("risk membership is start < t <= stop")
    {
        const auto d = make({rec("a", 0, 4, false, {0}), rec("a", 4, 6, true, {1}), rec("b", 0, 4, true, {2})}, 1);
        const auto idx = build_risk_index(d);
        REQUIRE(idx.num_event_times() == 2);
        CHECK(idx.risk_set(0) == std::vector<int>{0, 2});
        CHECK(idx.risk_set(1) == std::vector<int>{1});
    }

    TEST_CASE("risk index matches a brute-force scan")
    {
        std::mt19937_64 rng(11);
        for (int rep = 0; rep < 20; ++rep) {
            const auto d = oracle::random_dataset(rng, 50, 3);
            const auto idx = build_risk_index(d);
            const auto naive = oracle::naive_risk(d);
            REQUIRE(idx.event_times() == naive.times);
            for (int l = 0; l < idx.num_event_times(); ++l) {
                CHECK(idx.risk_set(l) == naive.risk[l]);
                const auto e = idx.event_set(l);
                CHECK(std::vector<int>(e.begin(), e.end()) == naive.events[l]);
                for (int i : naive.events[l]) {
                    CHECK(std::find(naive.risk[l].begin(), naive.risk[l].end(), i) != naive.risk[l].end());
                }
            }
        }
    }

    TEST_CASE("risk index builds are identical")
    {
        std::mt19937_64 rng(5);
        const auto d = oracle::random_dataset(rng, 40, 2);
        CHECK(build_risk_index(d) == build_risk_index(d));
    }

    TEST_CASE("index construction errors")
    {
        SurvivalDataset empty;
        CHECK_THROWS_AS(build_risk_index(empty), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, false, {1})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, NAN, true, {1})}, 1), InputError);
    }

    TEST_CASE("dataset validation")
    {
        CHECK_THROWS_AS(make({rec("a", 5, 5, true, {1})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, true, {1}), rec("a", 4, 8, false, {1})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, true, {1}), rec("a", 5, 8, true, {1})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, true, {1}), rec("a", 5, 8, false, {1})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, true, {INFINITY})}, 1), InputError);
        CHECK_THROWS_AS(make({rec("a", 0, 5, true, {1, 2})}, 1), InputError);
        // Non-contiguous rows of one subject are fine.
        CHECK_NOTHROW(make({rec("a", 0, 2, false, {1}), rec("b", 0, 3, true, {0}), rec("a", 2, 4, true, {1})}, 1));
    }

    TEST_CASE("loss at zero is the sum of log risk-set sizes")
    {
        std::mt19937_64 rng(3);
        const auto d = oracle::random_dataset(rng, 60, 4);
        const auto idx = build_risk_index(d);
        double expected = 0.0;
        for (int l = 0; l < idx.num_event_times(); ++l) {
            expected += idx.tie_count(l) * std::log(static_cast<double>(idx.risk_set(l).size()));
        }
        CHECK(neg_log_partial_likelihood(idx, Vector::Zero(4)) == doctest::Approx(expected).epsilon(1e-12));
    }

    TEST_CASE("two-record analytic case")
    {
        const auto d = make({rec("a", 0, 5, true, {1}), rec("b", 0, 8, false, {0})}, 1);
        const auto idx = build_risk_index(d);
        CHECK(neg_log_partial_likelihood(idx, Vector::Zero(1)) == doctest::Approx(0.693147180559945).epsilon(1e-14));
        CHECK(gradient(idx, Vector::Zero(1))[0] == doctest::Approx(-0.5).epsilon(1e-14));
    }

    TEST_CASE("identical covariates give a zero gradient")
    {
        std::vector<CountingRecord> records;
        for (int s = 0; s < 10; ++s) records.push_back(rec("s" + std::to_string(s), 0, 1 + s, s % 2 == 0, {0.7, -1.2}));
        const auto idx = build_risk_index(make(records, 2));
        Vector beta(2);
        beta << 1.3, -0.4;
        CHECK(gradient(idx, beta).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    TEST_CASE("loss matches the naive evaluator")
    {
        std::mt19937_64 rng(17);
        for (int rep = 0; rep < 30; ++rep) {
            const auto d = oracle::random_dataset(rng, 40, 5);
            const auto idx = build_risk_index(d);
            const Vector beta = oracle::random_vector(rng, 5, 0.7);
            const double naive = oracle::naive_loss(d, beta);
            CHECK(std::abs(neg_log_partial_likelihood(idx, beta) - naive) <= 1e-12 * std::abs(naive));
            CHECK(loss_and_gradient(idx, beta).value == neg_log_partial_likelihood(idx, beta));
            const Vector g = oracle::naive_gradient(d, beta);
            CHECK((gradient(idx, beta) - g).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, g.norm()));
        }
    }

    TEST_CASE("large linear predictors stay finite")
    {
        std::mt19937_64 rng(23);
        const auto d = oracle::random_dataset(rng, 40, 3, 30.0);
        const auto idx = build_risk_index(d);
        const Vector beta = oracle::random_vector(rng, 3, 10.0);
        const double naive = oracle::naive_loss(d, beta);
        CHECK(std::abs(neg_log_partial_likelihood(idx, beta) - naive) <= 1e-10 * std::abs(naive));
        const Vector g = oracle::naive_gradient(d, beta);
        if (g.allFinite()) CHECK((gradient(idx, beta) - g).norm() <= 1e-6 * std::max(1.0, g.norm()));
    }

    TEST_CASE("gradient agrees with finite differences")
    {
        std::mt19937_64 rng(29);
        for (int rep = 0; rep < 100; ++rep) {
            const auto d = oracle::random_dataset(rng, 30, 4);
            const auto idx = build_risk_index(d);
            const Vector beta = oracle::random_vector(rng, 4, 0.5);
            const Vector fd = oracle::finite_difference(d, beta);
            CHECK((gradient(idx, beta) - fd).norm() / std::max(1e-8, fd.norm()) < 1e-5);
        }
    }

    TEST_CASE("loss is convex along segments")
    {
        std::mt19937_64 rng(31);
        const auto d = oracle::random_dataset(rng, 50, 4);
        const auto idx = build_risk_index(d);
        for (int rep = 0; rep < 50; ++rep) {
            const Vector a = oracle::random_vector(rng, 4, 2.0);
            const Vector b = oracle::random_vector(rng, 4, 2.0);
            const double mid = neg_log_partial_likelihood(idx, 0.5 * (a + b));
            CHECK(mid <= 0.5 * neg_log_partial_likelihood(idx, a) + 0.5 * neg_log_partial_likelihood(idx, b) + 1e-10);
        }
    }

    TEST_CASE("zero column leaves loss and gradient unchanged")
    {
        std::mt19937_64 rng(37);
        const auto d = oracle::random_dataset(rng, 30, 3);
        auto records = d.to_records();
        for (auto& r : records) r.covariates.push_back(0.0);
        auto names = d.covariate_names;
        names.push_back("zero");
        const auto wide = SurvivalDataset::from_records(records, names);
        const Vector beta = oracle::random_vector(rng, 3);
        Vector beta_wide(4);
        beta_wide << beta, 0.8;
        const auto narrow_idx = build_risk_index(d);
        const auto wide_idx = build_risk_index(wide);
        CHECK(neg_log_partial_likelihood(wide_idx, beta_wide) ==
              doctest::Approx(neg_log_partial_likelihood(narrow_idx, beta)).epsilon(1e-14));
        const Vector g = gradient(wide_idx, beta_wide);
        CHECK((g.head(3) - gradient(narrow_idx, beta)).norm() <= 1e-13 * g.norm());
    }

    TEST_CASE("dimension mismatch is rejected")
    {
        const auto d = make({rec("a", 0, 5, true, {1}), rec("b", 0, 8, false, {0})}, 1);
        const auto idx = build_risk_index(d);
        CHECK_THROWS_AS(neg_log_partial_likelihood(idx, Vector::Zero(2)), InputError);
        CHECK_THROWS_AS(gradient(idx, Vector::Zero(3)), InputError);
    }

    TEST_CASE("overflowing predictors are signalled")
    {
        const auto d = make({rec("a", 0, 5, true, {1e300}), rec("b", 0, 8, false, {0})}, 1);
        const auto idx = build_risk_index(d);
        Vector beta(1);
        beta << 1e10;
        CHECK_THROWS_AS(neg_log_partial_likelihood(idx, beta), NumericalError);
    }

    TEST_CASE("interval expansion with one interval keeps the data")
    {
        std::mt19937_64 rng(41);
        const auto d = oracle::random_dataset(rng, 20, 3);
        const double cuts[] = {-1.0, 100.0};
        const auto e = expand_interval_coefficients(d, cuts, 1);
        REQUIRE(e.new_columns.size() == 1);
        CHECK(e.data.num_records() == d.num_records());
        CHECK(e.data.x == d.x);
        CHECK(e.data.covariate_names[1] == "x2@1");
    }

    TEST_CASE("interval expansion splits at interior cuts")
    {
        const auto d = make({rec("a", 0, 10, true, {2.0, 3.0}), rec("b", 0, 12, false, {1.0, 1.0})}, 2);
        const double cuts[] = {0.0, 5.0, 20.0};
        const auto e = expand_interval_coefficients(d, cuts, 0);
        REQUIRE(e.new_columns == std::vector<int>{0, 1});
        REQUIRE(e.data.num_records() == 4);
        const auto recs = e.data.to_records();
        CHECK(recs[0].start == 0.0);
        CHECK(recs[0].stop == 5.0);
        CHECK(recs[0].covariates == std::vector<double>{2.0, 0.0, 3.0});
        CHECK(!recs[0].event);
        CHECK(recs[1].start == 5.0);
        CHECK(recs[1].stop == 10.0);
        CHECK(recs[1].covariates == std::vector<double>{0.0, 2.0, 3.0});
        CHECK(recs[1].event);
    }

    TEST_CASE("equal interval coefficients reproduce the original loss")
    {
        std::mt19937_64 rng(43);
        for (int rep = 0; rep < 10; ++rep) {
            const auto d = oracle::random_dataset(rng, 30, 3);
            const double cuts[] = {0.0, 3.0, 6.5, 1000.0};
            const auto e = expand_interval_coefficients(d, cuts, 2);
            const Vector beta = oracle::random_vector(rng, 3);
            Vector theta(5);
            theta << beta[0], beta[1], beta[2], beta[2], beta[2];
            CHECK(neg_log_partial_likelihood(build_risk_index(e.data), theta) ==
                  doctest::Approx(neg_log_partial_likelihood(build_risk_index(d), beta)).epsilon(1e-12));
        }
    }

    TEST_CASE("interval expansion errors")
    {
        const auto d = make({rec("a", 0, 10, true, {2.0})}, 1);
        const double unsorted[] = {0.0, 5.0, 5.0};
        CHECK_THROWS_AS(expand_interval_coefficients(d, unsorted, 0), InputError);
        const double short_range[] = {0.0, 8.0};
        CHECK_THROWS_AS(expand_interval_coefficients(d, short_range, 0), InputError);
        const double late[] = {1.0, 20.0};
        CHECK_THROWS_AS(expand_interval_coefficients(d, late, 0), InputError);
        const double ok[] = {0.0, 20.0};
        CHECK_THROWS_AS(expand_interval_coefficients(d, ok, 3), InputError);
    }

    TEST_CASE("standardization round trip")
    {
        std::mt19937_64 rng(47);
        const auto d = oracle::random_dataset(rng, 30, 3, 4.0);
        const auto st = standardize_columns(d);
        const Vector beta = oracle::random_vector(rng, 3);
        Vector scaled = beta.cwiseProduct(st.scale);
        CHECK(neg_log_partial_likelihood(build_risk_index(st.data), scaled) ==
              doctest::Approx(neg_log_partial_likelihood(build_risk_index(d), beta)).epsilon(1e-10));
        CHECK((unscale(scaled, st.scale) - beta).norm() < 1e-12);
    }

    TEST_CASE("dataset text round trip and diagnostics")
    {
        const std::string text = "id,start,stop,event,x1,x2\n1,0,2.5,0,1,0.5\n1,2.5,4,1,0,0.5\n2,0,3,0,1,-1\n";
        const auto d = parse_dataset(text);
        CHECK(d.num_records() == 3);
        CHECK(d.num_subjects() == 2);
        CHECK(write_dataset(d) == text);
        CHECK_THROWS_WITH_AS(parse_dataset("id,start,stop,event,x\n1,0,2,1,abc\n"), doctest::Contains("line 2"),
                             InputError);
        CHECK_THROWS_AS(parse_dataset("id,begin,stop,event,x\n1,0,2,1,0\n"), InputError);
        CHECK_THROWS_WITH_AS(parse_dataset("id,start,stop,event,x\n1,0,2,1,0\n2,0,3,2,0\n"),
                             doctest::Contains("line 3"), InputError);
        CHECK_THROWS_AS(parse_dataset("id,start,stop,event,x\n1,0,2,1\n"), InputError);
    }
}

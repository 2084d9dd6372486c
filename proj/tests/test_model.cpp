#include <doctest.h>

#include <cmath>
#include <random>

#include "coarse/granular.hpp"
#include "coarse/model.hpp"
#include "helpers.hpp"

using namespace coarse;
using namespace testutil;

TEST_SUITE("model") {

TEST_CASE("cate_value follows the log response curve") {
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    CHECK(model::cate_value(pop, 0, 0, 0.0) == 0.0);
    CHECK(model::cate_value(pop, 0, 0, 2.0) ==
          doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-12));

    auto pop2 = population_1d({{1.0, 2.0, 1.0}}, 5.0);
    CHECK(model::cate_value(pop2, 0, 0, std::exp(1.0) - 1.0) ==
          doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS(model::cate_value(pop, 0, 0, 6.0), config_error);
    CHECK_THROWS_AS(model::cate_value(pop, 0, 0, -0.5), config_error);
    CHECK_THROWS_AS(model::cate_value(pop, 0, 2, 1.0), config_error);
}

TEST_CASE("treatment_cost is linear with c(0) = 0 exactly") {
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    CHECK(model::treatment_cost(pop, 0, 0, 0.0) == 0.0);
    CHECK(model::treatment_cost(pop, 0, 0, 2.5) == 2.5);

    auto pct = population_2d({{0, 1, 1, 0, 1, 0.30}});
    CHECK(model::treatment_cost(pct, 0, 1, 10.0) == doctest::Approx(3.0));
}

TEST_CASE("incremental_profit = cate - cost") {
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    CHECK(model::incremental_profit(pop, 0, 0, 2.0) ==
          doctest::Approx(3.0 * std::log(3.0) - 2.0).epsilon(1e-12));
    CHECK(model::incremental_profit(pop, 0, 0, 1.0) ==
          doctest::Approx(3.0 * std::log(2.0) - 1.0).epsilon(1e-12));

    auto with_alpha = population_1d({{0.7, 3.0, 1.0}}, 5.0);
    CHECK(model::incremental_profit(with_alpha, 0, 0, 0.0) == doctest::Approx(0.7));

    // identity on sampled levels
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> t(0.0, 5.0);
    for (int k = 0; k < 50; ++k) {
        const double level = t(rng);
        CHECK(model::incremental_profit(pop, 0, 0, level) ==
              model::cate_value(pop, 0, 0, level) - model::treatment_cost(pop, 0, 0, level));
    }
}

TEST_CASE("profit is strictly concave in the level when beta > 0") {
    auto pop = random_population_2d(20, 42);
    std::mt19937_64 rng(7);
    for (int64_t i = 0; i < pop.size(); ++i)
        for (int d = 0; d < 2; ++d) {
            std::uniform_real_distribution<double> u(0.0, pop.upper_bound(d) / 2.0);
            const double a = u(rng), h = u(rng) / 2.0 + 1e-3;
            const double mid = model::incremental_profit(pop, i, d, a + h);
            const double lo = model::incremental_profit(pop, i, d, a);
            const double hi = model::incremental_profit(pop, i, d, a + 2.0 * h);
            CHECK(mid - lo > hi - mid);  // negative second difference
        }
}

TEST_CASE("treatment_cost is convex (linear)") {
    auto pop = population_2d({{0, 2, 1, 0, 1, 0.3}});
    for (int d = 0; d < 2; ++d) {
        const double a = 0.5, b = 4.0;
        const double mid = model::treatment_cost(pop, 0, d, 0.5 * (a + b));
        CHECK(mid == doctest::Approx(0.5 * model::treatment_cost(pop, 0, d, a) +
                                     0.5 * model::treatment_cost(pop, 0, d, b)));
    }
}

TEST_CASE("policy_profit sums assigned profits and regret against the ceiling") {
    SUBCASE("single individual at its own optimum has zero regret") {
        auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
        SegmentedPolicy policy;
        policy.treatments = {{0, 2.0}};
        policy.assignment = {0};
        policy.masses = {1.0};
        const auto report = granular::policy_profit(pop, policy);
        CHECK(report.total_regret == 0.0);
        CHECK(report.squared_regret == 0.0);
        CHECK(report.total_profit ==
              doctest::Approx(3.0 * std::log(3.0) - 2.0).epsilon(1e-12));
    }

    SUBCASE("two individuals each at their own optimum") {
        auto pop = population_1d({{0.0, 2.0, 1.0}, {0.0, 4.0, 1.0}}, 5.0);
        SegmentedPolicy policy;
        policy.treatments = {{0, 1.0}, {0, 3.0}};
        policy.assignment = {0, 1};
        policy.masses = {0.5, 0.5};
        const auto report = granular::policy_profit(pop, policy);
        CHECK(report.total_profit == doctest::Approx(2.9314718055994527).epsilon(1e-12));
        CHECK(report.total_regret == doctest::Approx(0.0));
        CHECK(report.per_segment.size() == 2);
        CHECK(report.per_segment[0].members == 1);
    }

    SUBCASE("profit + regret equals the granular ceiling") {
        auto pop = random_population_2d(200, 3);
        const auto gran = granular::solve(pop);
        SegmentedPolicy policy;
        policy.treatments = {{0, 1.0}, {1, 10.0}};
        policy.assignment.assign(200, 0);
        for (int64_t i = 0; i < 200; i += 2) policy.assignment[i] = 1;
        policy.masses = {0.5, 0.5};
        const auto report = model::policy_profit(pop, policy, gran.best_return);
        double ceiling = 0.0;
        for (double r : gran.best_return) ceiling += r;
        CHECK(report.total_profit + report.total_regret ==
              doctest::Approx(ceiling).epsilon(1e-6));
        CHECK(report.total_regret >= -1e-9);
    }

    SUBCASE("structural errors") {
        auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
        SegmentedPolicy bad;
        bad.treatments = {{0, 1.0}};
        bad.assignment = {2};  // out of range
        bad.masses = {1.0};
        CHECK_THROWS_AS(granular::policy_profit(pop, bad), data_error);
        bad.assignment = {0, 0};  // does not match the population
        CHECK_THROWS_AS(granular::policy_profit(pop, bad), data_error);
    }
}

TEST_CASE("population invariants are enforced at construction") {
    Population pop(TreatmentSpace{{5.0}, {}});
    CHECK_THROWS_AS(pop.add(make_individual("a", {0.0}, {1.0}, {0.0})), data_error);
    CHECK_THROWS_AS(pop.add(make_individual("b", {0.0}, {-0.1}, {1.0})), data_error);
    CHECK_THROWS_AS(pop.add(make_individual("c", {0.0}, {1.0, 2.0}, {1.0})), data_error);
    CHECK_THROWS_AS(Population(TreatmentSpace{{-1.0}, {}}), config_error);
    CHECK_THROWS_AS(Population(TreatmentSpace{{}, {}}), config_error);
}

TEST_CASE("zero_intercepts clears alpha and shifts profit by it") {
    auto pop = population_1d({{0.7, 3.0, 1.0}}, 5.0);
    const double before = model::incremental_profit(pop, 0, 0, 2.0);
    pop.zero_intercepts();
    CHECK(model::incremental_profit(pop, 0, 0, 2.0) == doctest::Approx(before - 0.7));
    CHECK(model::incremental_profit(pop, 0, 0, 0.0) == 0.0);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>

#include "coarse/lloyd.hpp"
#include "coarse/surplus.hpp"
#include "helpers.hpp"

using namespace coarse;
using namespace testutil;

TEST_SUITE("surplus") {

TEST_CASE("valuation equals the firm's cost of issuing the treatment") {
    auto pop = population_2d({{0, 3, 1, 0, 1, 0.30}});
    CHECK(surplus::valuation(pop, 0, {0, 2.5}) == 2.5);
    CHECK(surplus::valuation(pop, 0, {1, 10.0}) == doctest::Approx(3.0));
    for (double t : {0.0, 1.0, 4.0})
        CHECK(surplus::valuation(pop, 0, {0, t}) ==
              model::treatment_cost(pop, 0, 0, t));
}

TEST_CASE("coarse policy equal to granular yields all zeros") {
    auto pop = random_population_2d(50, 3);
    const auto gran = granular::solve(pop);
    SegmentedPolicy policy;
    policy.treatments.resize(pop.size());
    policy.assignment.resize(pop.size());
    for (int64_t i = 0; i < pop.size(); ++i) {
        const int d = gran.best_dim[i];
        policy.treatments[i] = {static_cast<int32_t>(d), gran.optima[d][i]};
        policy.assignment[i] = static_cast<int32_t>(i);
    }
    policy.masses.assign(pop.size(), 1.0 / pop.size());
    const auto report = surplus::surplus_decomposition(pop, policy, gran);
    for (const auto& row : report.per_individual) {
        CHECK(row.dcs == 0.0);
        CHECK(row.dps == 0.0);
        CHECK(row.dts == 0.0);
    }
    CHECK(report.share_dps_pos == 0.0);
}

TEST_CASE("worked one-dimensional dollar example") {
    // beta = 3, s = 1: optimum 2, assigned 1
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    const auto gran = granular::solve(pop);
    SegmentedPolicy policy;
    policy.treatments = {{0, 1.0}};
    policy.assignment = {0};
    policy.masses = {1.0};
    const auto report = surplus::surplus_decomposition(pop, policy, gran);
    const auto& row = report.per_individual[0];
    CHECK(row.dcs == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(row.dps == doctest::Approx(-0.2163953243244934).epsilon(1e-9));
    CHECK(row.dts == doctest::Approx(3.0 * std::log(2.0 / 3.0)).epsilon(1e-9));
    CHECK(row.dts == row.dcs + row.dps);
}

TEST_CASE("overshooting the optimum raises consumer surplus, lowers producer") {
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);  // optimum 2
    const auto gran = granular::solve(pop);
    SegmentedPolicy policy;
    policy.treatments = {{0, 3.5}};
    policy.assignment = {0};
    policy.masses = {1.0};
    const auto report = surplus::surplus_decomposition(pop, policy, gran);
    CHECK(report.per_individual[0].dcs > 0.0);
    CHECK(report.per_individual[0].dps < 0.0);
}

TEST_CASE("identities hold across a solved policy") {
    auto pop = random_population_2d(300, 7);
    lloyd::SolverConfig cfg;
    cfg.num_treatments = 4;
    cfg.seed = 11;
    const auto solved = lloyd::solve(pop, cfg);
    const auto gran = granular::solve(pop);
    const auto report = surplus::surplus_decomposition(pop, solved.policy, gran);

    for (int64_t i = 0; i < pop.size(); ++i) {
        const auto& row = report.per_individual[i];
        CHECK(row.dts == row.dcs + row.dps);  // exact additivity
        CHECK(row.dps <= 1e-12);
        const double r = granular::regret(pop, gran, i,
                                          solved.policy.treatments[solved.policy.assignment[i]]);
        CHECK(row.dps == doctest::Approx(-r).epsilon(1e-12));
    }
    CHECK(report.share_dps_pos == 0.0);

    SUBCASE("per-treatment rows aggregate their members") {
        int64_t members = 0;
        for (const auto& t : report.per_treatment) members += t.members;
        CHECK(members == pop.size());
        // totals reassemble from per-treatment means
        double dts = 0.0;
        for (const auto& t : report.per_treatment) dts += t.mean_dts * t.members;
        CHECK(dts == doctest::Approx(report.total_dts).epsilon(1e-9));
    }
}

TEST_CASE("one-dimensional dollar case: dTS is the response-curve difference") {
    auto pop = population_1d({{0.2, 2, 1}, {-0.1, 3, 1}, {0.0, 4, 1}}, 5.0);
    const auto gran = granular::solve(pop);
    SegmentedPolicy policy;
    policy.treatments = {{0, 1.5}};
    policy.assignment = {0, 0, 0};
    policy.masses = {1.0};
    const auto report = surplus::surplus_decomposition(pop, policy, gran);
    for (int64_t i = 0; i < 3; ++i) {
        const double expected = model::cate_value(pop, i, 0, 1.5) -
                                model::cate_value(pop, i, 0, gran.optima[0][i]);
        CHECK(report.per_individual[i].dts == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("producer surplus loss shrinks as the menu grows (nested chain)") {
    auto pop = random_population_2d(200, 13);
    lloyd::SolverConfig cfg;
    cfg.seed = 17;
    const auto chain = lloyd::solve_chain(pop, cfg, 6);
    const auto gran = granular::solve(pop);
    double prev = -1e300;
    for (const auto& result : chain) {
        const auto report = surplus::surplus_decomposition(pop, result.policy, gran);
        CHECK(report.total_dps >= prev - 1e-9);
        prev = report.total_dps;
    }
}

TEST_CASE("population mismatch is structural") {
    auto pop = random_population_2d(10, 1);
    auto other = random_population_2d(5, 2);
    const auto gran = granular::solve(other);
    SegmentedPolicy policy;
    policy.treatments = {{0, 1.0}};
    policy.assignment.assign(10, 0);
    policy.masses = {1.0};
    CHECK_THROWS_AS(surplus::surplus_decomposition(pop, policy, gran), data_error);
}

}  // TEST_SUITE

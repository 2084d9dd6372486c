#include <doctest.h>

#include <cmath>
#include <random>

#include "coarse/granular.hpp"
#include "helpers.hpp"

using namespace coarse;
using namespace testutil;

TEST_SUITE("granular") {

TEST_CASE("closed-form optimum") {
    CHECK(granular::optimal_level(3.0, 1.0, 5.0) == doctest::Approx(2.0));
    CHECK(granular::optimal_level(0.5, 1.0, 5.0) == 0.0);   // interior candidate negative
    CHECK(granular::optimal_level(12.0, 1.0, 5.0) == 5.0);  // clamped at the bound
    CHECK(granular::optimal_level(0.0, 1.0, 5.0) == 0.0);

    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    CHECK(granular::optimal_treatment(pop, 0, 0) == doctest::Approx(2.0));
}

TEST_CASE("numeric maximizer agrees with the closed form") {
    auto pop = population_1d({{0.0, 3.0, 1.0}, {0.0, 0.0, 1.0}}, 5.0);
    CHECK(granular::optimal_treatment_numeric(pop, 0, 0, 1e-10) ==
          doctest::Approx(2.0).epsilon(1e-9));
    CHECK(granular::optimal_treatment_numeric(pop, 1, 0, 1e-10) ==
          doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

    // property sweep over random parameters
    std::mt19937_64 rng(17);
    std::lognormal_distribution<double> beta(0.3, 1.0);
    std::lognormal_distribution<double> cost(-0.5, 0.7);
    for (int k = 0; k < 1000; ++k) {
        auto p = population_1d({{0.0, beta(rng), cost(rng)}}, 5.0);
        const double closed = granular::optimal_treatment(p, 0, 0);
        const double numeric = granular::optimal_treatment_numeric(p, 0, 0, 1e-10);
        CHECK(std::fabs(closed - numeric) < 1e-8);
    }
}

TEST_CASE("best_return takes the max over dimensions with ties to the lower one") {
    SUBCASE("one dimension") {
        auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
        const auto [r, d] = granular::best_return(pop, 0);
        CHECK(r == doctest::Approx(1.2958368660043291).epsilon(1e-12));
        CHECK(d == 0);
    }
    SUBCASE("symmetric individual breaks ties to dimension 1") {
        auto pop = population_2d({{0.0, 3.0, 1.0, 0.0, 3.0, 1.0}}, 5.0, 5.0);
        const auto [r, d] = granular::best_return(pop, 0);
        CHECK(d == 0);
        CHECK(r == doctest::Approx(1.2958368660043291));
    }
    SUBCASE("unresponsive individual earns zero at level zero") {
        auto pop = population_2d({{0.0, 0.0, 1.0, 0.0, 0.0, 0.3}});
        const auto [r, d] = granular::best_return(pop, 0);
        CHECK(r == 0.0);
        CHECK(d == 0);
    }
}

TEST_CASE("regret is the ceiling minus the assigned profit, clamped at zero") {
    auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
    const auto gran = granular::solve(pop);
    CHECK(granular::regret(pop, gran, 0, {0, 2.0}) == 0.0);  // own optimum
    CHECK(granular::regret(pop, gran, 0, {0, 1.0}) ==
          doctest::Approx(0.2163953243244934).epsilon(1e-10));

    // beta = 0: worst case is the full linear cost at the bound
    auto flat = population_1d({{0.0, 0.0, 2.0}}, 5.0);
    const auto gran_flat = granular::solve(flat);
    CHECK(granular::regret(flat, gran_flat, 0, {0, 5.0}) == doctest::Approx(10.0));
}

TEST_CASE("maximality of the closed form over sampled levels") {
    auto pop = random_population_2d(50, 23);
    const auto gran = granular::solve(pop);
    std::mt19937_64 rng(29);
    for (int64_t i = 0; i < pop.size(); ++i)
        for (int d = 0; d < 2; ++d) {
            const double best =
                model::incremental_profit(pop, i, d, gran.optima[d][i]);
            std::uniform_real_distribution<double> u(0.0, pop.upper_bound(d));
            for (int k = 0; k < 100; ++k)
                CHECK(best >= model::incremental_profit(pop, i, d, u(rng)) - 1e-12);
        }
}

TEST_CASE("optimum is non-decreasing in beta/cost") {
    double prev = 0.0;
    for (double ratio = 0.1; ratio < 40.0; ratio *= 1.3) {
        const double t = granular::optimal_level(ratio, 1.0, 5.0);
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("granular_policy gives every individual her own segment at zero regret") {
    SUBCASE("single individual") {
        auto pop = population_1d({{0.0, 3.0, 1.0}}, 5.0);
        const auto gp = granular::granular_policy(pop);
        CHECK(gp.policy.treatments.size() == 1);
        CHECK(gp.report.total_regret == 0.0);
        CHECK(gp.unique_treatments == 1);
    }
    SUBCASE("identical individuals collapse to one unique treatment") {
        auto pop = population_1d({{0.0, 3.0, 1.0}, {0.0, 3.0, 1.0}, {0.0, 3.0, 1.0}}, 5.0);
        const auto gp = granular::granular_policy(pop);
        CHECK(gp.policy.treatments.size() == 3);
        CHECK(gp.unique_treatments == 1);
    }
    SUBCASE("totals match an independent per-individual sum") {
        auto pop = random_population_2d(1000, 31);
        const auto gp = granular::granular_policy(pop);
        double expected = 0.0;
        for (int64_t i = 0; i < pop.size(); ++i) {
            double best = -1e300;
            for (int d = 0; d < 2; ++d) {
                const double t =
                    granular::optimal_level(pop.beta(d)[i], pop.cost_scale(d)[i],
                                            pop.upper_bound(d));
                best = std::max(best, profit_ref(pop.alpha(d)[i], pop.beta(d)[i],
                                                 pop.cost_scale(d)[i], t));
            }
            expected += best;
        }
        CHECK(gp.report.total_profit == doctest::Approx(expected).epsilon(1e-9));
        CHECK(gp.report.total_regret == 0.0);
    }
}

TEST_CASE("solve is thread-count independent") {
    auto pop = random_population_2d(5000, 77);
    const auto g1 = granular::solve(pop, 1);
    const auto g4 = granular::solve(pop, 4);
    CHECK(g1.best_return == g4.best_return);
    CHECK(g1.best_dim == g4.best_dim);
    CHECK(g1.optima == g4.optima);
}

}  // TEST_SUITE

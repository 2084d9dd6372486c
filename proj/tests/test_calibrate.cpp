#include <doctest.h>

#include <cmath>
#include <random>

#include "coarse/calibrate.hpp"
#include "helpers.hpp"

using namespace coarse;
using namespace testutil;

namespace {

// arms with values generated from alpha + beta ln(1+t) plus optional noise
calibrate::ArmEstimates log_arms(const std::vector<std::pair<double, double>>& params,
                                 std::vector<double> levels, double noise_sd = 0.0,
                                 uint64_t seed = 0) {
    calibrate::ArmEstimates arms;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd);
    arms.levels = {levels};
    arms.values.resize(1);
    int i = 0;
    for (const auto& [alpha, beta] : params) {
        arms.ids.push_back("a" + std::to_string(++i));
        for (double t : levels) {
            double v = alpha + beta * std::log1p(t);
            if (noise_sd > 0.0) v += noise(rng);
            arms.values[0].push_back(v);
        }
    }
    return arms;
}

}  // namespace

TEST_SUITE("calibrate") {

TEST_CASE("noiseless data identifies the curve exactly") {
    const std::vector<double> levels{2, 3, 4, 5};
    std::vector<double> cates;
    for (double t : levels) cates.push_back(1.0 + 2.0 * std::log1p(t));
    const auto fit = calibrate::fit_response_curve(levels, cates);
    CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.beta == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant estimates give a flat curve") {
    const std::vector<double> levels{2, 3, 4, 5};
    const std::vector<double> cates{0.4, 0.4, 0.4, 0.4};
    const auto fit = calibrate::fit_response_curve(levels, cates);
    CHECK(fit.alpha == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(fit.beta == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("slope matches an independent normal-equations solve") {
    const std::vector<double> levels{2, 3, 4, 5};
    const std::vector<double> cates{0.5, 0.9, 1.1, 1.3};
    const auto fit = calibrate::fit_response_curve(levels, cates);
    std::vector<double> x;
    for (double t : levels) x.push_back(std::log1p(t));
    const auto [a, b] = ols_normal_equations(x, cates);
    CHECK(fit.alpha == doctest::Approx(a).epsilon(1e-10));
    CHECK(fit.beta == doctest::Approx(b).epsilon(1e-10));
}

TEST_CASE("identical levels are rank deficient") {
    CHECK_THROWS_AS(
        calibrate::fit_response_curve(std::vector<double>{2, 2, 2},
                                      std::vector<double>{1, 1.1, 0.9}),
        data_error);
}

TEST_CASE("fit recovers parameters across a noiseless population") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ua(-1.0, 1.0);
    std::lognormal_distribution<double> ub(0.3, 0.5);
    std::vector<std::pair<double, double>> params;
    for (int i = 0; i < 40; ++i) params.push_back({ua(rng), ub(rng)});
    const auto arms = log_arms(params, {2, 3, 4, 5});
    const auto fitted = calibrate::fit_population(
        arms, TreatmentSpace{{5.0}, {}},
        {std::vector<double>(params.size(), 1.0)});
    for (size_t i = 0; i < params.size(); ++i) {
        CHECK(fitted.population.alpha(0)[i] ==
              doctest::Approx(params[i].first).epsilon(1e-9));
        CHECK(fitted.population.beta(0)[i] ==
              doctest::Approx(params[i].second).epsilon(1e-9));
    }
    CHECK(fitted.mean_r_squared[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("filter drops only individuals unresponsive in every dimension") {
    Population pop(TreatmentSpace{{5.0, 20.0}, {}});
    pop.add(make_individual("both-zero", {0, 0}, {0, 0}, {1, 1}));
    pop.add(make_individual("one-live", {0, 0}, {2, 0}, {1, 1}));
    pop.add(make_individual("tiny", {0, 0}, {1e-7, 1e-9}, {1, 1}));
    pop.add(make_individual("live", {0, 0}, {1, 2}, {1, 1}));

    const auto result = calibrate::filter_population(pop, 1e-6);
    CHECK(result.dropped_ids == std::vector<std::string>{"both-zero", "tiny"});
    REQUIRE(result.kept.size() == 2);
    CHECK(result.kept.ids()[0] == "one-live");
    CHECK(result.kept.beta(1)[0] == 0.0);  // unresponsive dimension clamped
    CHECK(result.kept.beta(0)[0] == 2.0);
}

TEST_CASE("filter never drops an individual with a responsive dimension") {
    auto pop = random_population_2d(200, 5);
    const auto result = calibrate::filter_population(pop, 1e-6);
    CHECK(result.kept.size() == 200);  // log-normal betas are all positive
}

TEST_CASE("filter count bookkeeping") {
    std::vector<std::array<double, 3>> rows(10, {0.0, 1.0, 1.0});
    rows[2][1] = rows[5][1] = rows[9][1] = 0.0;
    auto pop = population_1d(rows);
    const auto result = calibrate::filter_population(pop, 1e-6);
    CHECK(result.kept.size() == 7);
    CHECK(result.dropped_ids.size() == 3);
}

TEST_CASE("honest validation") {
    SUBCASE("noiseless curves predict held-out arms exactly") {
        std::vector<std::pair<double, double>> params{{0.5, 1.0}, {-0.2, 2.5}, {1.0, 0.7}};
        const auto arms = log_arms(params, {2, 3, 4, 5});
        const std::vector<int32_t> holdout{0, 2, 3};
        const auto result = calibrate::honest_validate(arms, 0, holdout);
        for (size_t i = 0; i < params.size(); ++i)
            CHECK(result.predicted[i] == doctest::Approx(result.actual[i]).epsilon(1e-10));
        CHECK(result.correlation == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("two-individual holdout fits match a from-scratch least squares") {
        calibrate::ArmEstimates arms;
        arms.ids = {"u", "v"};
        arms.levels = {{2, 3, 4, 5}};
        arms.values = {{0.5, 0.9, 1.1, 1.3, 2.0, 1.7, 1.5, 1.6}};
        const std::vector<int32_t> holdout{1, 3};
        const auto result = calibrate::honest_validate(arms, 0, holdout);
        for (int i = 0; i < 2; ++i) {
            std::vector<double> x, y;
            for (int j = 0; j < 4; ++j) {
                if (j == holdout[i]) continue;
                x.push_back(std::log1p(arms.levels[0][j]));
                y.push_back(arms.values[0][i * 4 + j]);
            }
            const auto [a, b] = ols_normal_equations(x, y);
            const double expected = a + b * std::log1p(arms.levels[0][holdout[i]]);
            CHECK(result.predicted[i] == doctest::Approx(expected).epsilon(1e-10));
            CHECK(result.actual[i] == arms.values[0][i * 4 + holdout[i]]);
        }
    }

    SUBCASE("too few arms is infeasible") {
        const auto arms = log_arms({{0.0, 1.0}}, {2, 3});
        CHECK_THROWS_AS(calibrate::honest_validate(arms, 0, std::vector<int32_t>{0}),
                        config_error);
    }
}

TEST_CASE("arm estimates validate their shape") {
    calibrate::ArmEstimates arms;
    arms.ids = {"a"};
    arms.levels = {{2, 2}};  // not distinct
    arms.values = {{1.0, 1.1}};
    CHECK_THROWS_AS(arms.validate(), data_error);
    arms.levels = {{0.0, 2.0}};  // zero level
    CHECK_THROWS_AS(arms.validate(), data_error);
}

}  // TEST_SUITE

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "coarse/benchmarks.hpp"
#include "coarse/lloyd.hpp"
#include "helpers.hpp"

using namespace coarse;
using namespace testutil;

namespace {

// Reference Lloyd iteration from given centers; the implementation must match
// its WCSS when started from the same k-means++ draw.
double reference_lloyd_wcss(const std::vector<double>& pts, int64_t n, int f,
                            std::vector<std::vector<double>> centers) {
    const int k = static_cast<int>(centers.size());
    std::vector<int32_t> assign(n, -1);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (int64_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = 1e300;
            for (int c = 0; c < k; ++c) {
                double d = 0.0;
                for (int j = 0; j < f; ++j) {
                    const double diff = pts[i * f + j] - centers[c][j];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(f, 0.0));
        std::vector<int64_t> counts(k, 0);
        for (int64_t i = 0; i < n; ++i) {
            counts[assign[i]] += 1;
            for (int j = 0; j < f; ++j) sums[assign[i]][j] += pts[i * f + j];
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (int j = 0; j < f; ++j) centers[c][j] = sums[c][j] / counts[c];
        if (!changed && iter > 0) break;
    }
    double wcss = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) {
            const double diff = pts[i * f + j] - centers[assign[i]][j];
            wcss += diff * diff;
        }
    return wcss;
}

}  // namespace

TEST_SUITE("benchmarks") {

TEST_CASE("kmeans separates obvious clusters") {
    const std::vector<double> pts{0.0, 0.0, 10.0};
    const auto result = benchmarks::kmeans(pts, 3, 1, 2, 3, 7);
    CHECK(result.assignment[0] == result.assignment[1]);
    CHECK(result.assignment[0] != result.assignment[2]);
    CHECK(result.wcss == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("kmeans with k = n has zero within-cluster scatter") {
    const std::vector<double> pts{1.0, 4.0, 9.0, 16.0};
    const auto result = benchmarks::kmeans(pts, 4, 1, 4, 2, 3);
    CHECK(result.wcss == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("kmeans rejects more clusters than distinct points") {
    const std::vector<double> pts{1.0, 1.0, 2.0};
    CHECK_THROWS_AS(benchmarks::kmeans(pts, 3, 1, 3, 1, 1), config_error);
}

TEST_CASE("kmeans WCSS matches an independent Lloyd loop on the same start") {
    std::mt19937_64 rng(44);
    std::normal_distribution<double> noise(0.0, 0.4);
    std::vector<double> pts;
    const double centers[3][2] = {{0, 0}, {5, 5}, {-4, 6}};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 40; ++i) {
            pts.push_back(centers[c][0] + noise(rng));
            pts.push_back(centers[c][1] + noise(rng));
        }
    const int64_t n = 120;
    const auto result = benchmarks::kmeans(pts, n, 2, 3, 1, 99);
    std::mt19937_64 init_rng(util::mix64(99, 0));  // same draw as starts=1, s=0
    const auto init = benchmarks::kmeans_plusplus_init(pts, n, 2, 3, init_rng);
    CHECK(result.wcss ==
          doctest::Approx(reference_lloyd_wcss(pts, n, 2, init)).epsilon(1e-6));
}

TEST_CASE("identical individuals get the blanket treatment from any clustering") {
    std::vector<std::array<double, 3>> rows(12, {0.0, 3.0, 1.0});
    auto pop = population_1d(rows);
    const auto blanket = benchmarks::blanket(pop);
    for (auto feature : {benchmarks::SegmentFeature::kPreferences,
                         benchmarks::SegmentFeature::kOptimalLevels}) {
        const auto seg = benchmarks::segment_then_personalize(pop, 3, feature, 2, 5);
        CHECK(seg.report.total_profit ==
              doctest::Approx(blanket.report.total_profit).epsilon(1e-12));
        for (const auto& t : seg.policy.treatments) {
            CHECK(t.dim == blanket.treatment.dim);
            CHECK(t.value == doctest::Approx(blanket.treatment.value));
        }
    }
}

TEST_CASE("two preference clusters are separated losslessly") {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 8; ++i) rows.push_back({0.0, 2.0, 1.0});
    for (int i = 0; i < 8; ++i) rows.push_back({0.0, 4.0, 1.0});
    auto pop = population_1d(rows);
    const auto seg = benchmarks::segment_then_personalize(
        pop, 2, benchmarks::SegmentFeature::kPreferences, 3, 11);
    std::vector<double> values{seg.policy.treatments[0].value,
                               seg.policy.treatments[1].value};
    std::sort(values.begin(), values.end());
    CHECK(values[0] == doctest::Approx(1.0));
    CHECK(values[1] == doctest::Approx(3.0));
    CHECK(seg.report.total_regret == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("covariate segmentation requires covariates") {
    auto pop = population_1d({{0, 2, 1}, {0, 3, 1}});
    CHECK_THROWS_AS(benchmarks::segment_then_personalize(
                        pop, 2, benchmarks::SegmentFeature::kCovariates, 1, 1),
                    config_error);
}

TEST_CASE("segmentation with k = 1 equals the optimized blanket") {
    auto pop = random_population_2d(100, 15);
    const auto seg = benchmarks::segment_then_personalize(
        pop, 1, benchmarks::SegmentFeature::kPreferences, 2, 3);
    const auto b = benchmarks::blanket(pop);
    CHECK(seg.report.total_profit ==
          doctest::Approx(b.report.total_profit).epsilon(1e-12));
    CHECK(seg.policy.treatments[0].dim == b.treatment.dim);
    CHECK(seg.policy.treatments[0].value == doctest::Approx(b.treatment.value));
}

TEST_CASE("ab_test_policy picks the best subset of the arms") {
    auto pop = random_population_2d(60, 19);
    const std::vector<FeasibleTreatment> arms{{0, 2}, {0, 3}, {0, 4}, {0, 5},
                                              {1, 5}, {1, 10}, {1, 15}, {1, 20}};

    SUBCASE("L = 1 with one arm is a blanket at that arm") {
        const auto one = benchmarks::ab_test_policy(
            pop, std::vector<FeasibleTreatment>{{0, 2.0}}, 1);
        const auto fixed = benchmarks::blanket(pop, 0, 2.0);
        CHECK(one.report.total_profit ==
              doctest::Approx(fixed.report.total_profit).epsilon(1e-12));
    }

    SUBCASE("L = |arms| assigns everyone her best arm") {
        const auto all = benchmarks::ab_test_policy(pop, arms, 8);
        double expected = 0.0;
        for (int64_t i = 0; i < pop.size(); ++i) {
            double bi = -1e300;
            for (const auto& a : arms)
                bi = std::max(bi, model::incremental_profit(pop, i, a));
            expected += bi;
        }
        CHECK(all.report.total_profit == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("L = 3 beats any hand-picked subset (56 subsets spot check)") {
        const auto best = benchmarks::ab_test_policy(pop, arms, 3);
        // independent enumeration
        double naive = -1e300;
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b)
                for (int c = b + 1; c < 8; ++c) {
                    double total = 0.0;
                    for (int64_t i = 0; i < pop.size(); ++i) {
                        double bi = model::incremental_profit(pop, i, arms[a]);
                        bi = std::max(bi, model::incremental_profit(pop, i, arms[b]));
                        bi = std::max(bi, model::incremental_profit(pop, i, arms[c]));
                        total += bi;
                    }
                    naive = std::max(naive, total);
                }
        CHECK(best.report.total_profit == doctest::Approx(naive).epsilon(1e-12));
    }

    SUBCASE("profit is non-decreasing in L") {
        double prev = -1e300;
        for (int l = 1; l <= 8; ++l) {
            const auto r = benchmarks::ab_test_policy(pop, arms, l);
            CHECK(r.report.total_profit >= prev - 1e-9);
            prev = r.report.total_profit;
        }
    }

    SUBCASE("subset size above the arm count is rejected") {
        CHECK_THROWS_AS(benchmarks::ab_test_policy(pop, arms, 9), config_error);
    }
}

TEST_CASE("blanket") {
    SUBCASE("homogeneous costs give the closed-form population level") {
        auto pop = population_1d({{0, 2, 1}, {0, 3, 1}, {0, 4, 1}}, 5.0);
        const auto b = benchmarks::blanket(pop);
        CHECK(b.treatment.value == doctest::Approx(2.0));  // sum(beta)/sum(s) - 1
    }
    SUBCASE("fixed blanket at zero with zero intercepts earns nothing") {
        auto pop = population_1d({{0.4, 2, 1}, {-0.2, 3, 1}}, 5.0);
        pop.zero_intercepts();
        const auto b = benchmarks::blanket(pop, 0, 0.0);
        CHECK(b.report.total_profit == 0.0);
    }
    SUBCASE("optimized blanket dominates every single-arm blanket") {
        auto pop = random_population_2d(80, 23);
        const auto best = benchmarks::blanket(pop);
        for (const auto& arm : std::vector<FeasibleTreatment>{
                 {0, 2}, {0, 3}, {0, 4}, {0, 5}, {1, 5}, {1, 10}, {1, 15}, {1, 20}}) {
            const auto fixed = benchmarks::blanket(pop, arm.dim, arm.value);
            CHECK(best.report.total_profit >= fixed.report.total_profit - 1e-9);
        }
    }
    SUBCASE("fixed value without a dimension is rejected") {
        auto pop = random_population_2d(5, 2);
        CHECK_THROWS_AS(benchmarks::blanket(pop, {}, 2.0), config_error);
    }
}

TEST_CASE("dominance: the solver beats every baseline when seeded with them") {
    auto pop = random_population_2d(150, 29);
    const std::vector<FeasibleTreatment> arms{{0, 2}, {0, 3}, {0, 4}, {0, 5},
                                              {1, 5}, {1, 10}, {1, 15}, {1, 20}};
    for (int l : {1, 2, 4}) {
        std::vector<lloyd::SeedSet> seeds;
        std::vector<double> baseline_profits;
        for (auto feature : {benchmarks::SegmentFeature::kCovariates,
                             benchmarks::SegmentFeature::kPreferences,
                             benchmarks::SegmentFeature::kOptimalLevels}) {
            auto seg = benchmarks::segment_then_personalize(pop, l, feature, 3, 7);
            baseline_profits.push_back(seg.report.total_profit);
            seeds.push_back(std::move(seg.policy.treatments));
        }
        auto ab = benchmarks::ab_test_policy(pop, arms, std::min<int>(l, 8));
        baseline_profits.push_back(ab.report.total_profit);
        seeds.push_back(std::move(ab.policy.treatments));
        auto b = benchmarks::blanket(pop);
        baseline_profits.push_back(b.report.total_profit);
        seeds.push_back({b.treatment});

        lloyd::SolverConfig cfg;
        cfg.num_treatments = l;
        cfg.seed = 31;
        const auto solver = lloyd::solve(pop, cfg, seeds);
        for (double p : baseline_profits)
            CHECK(solver.report.total_profit >= p - 1e-9);
    }
}

}  // TEST_SUITE

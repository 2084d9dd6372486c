#pragma once

#include <optional>
#include <random>
#include <span>

#include "coarse/granular.hpp"
#include "coarse/types.hpp"

namespace coarse::benchmarks {

struct KMeansResult {
    std::vector<int32_t> assignment;           // per point
    std::vector<std::vector<double>> centers;  // k x f
    double wcss = 0.0;
};

// Seeded k-means++ initialization; exposed so tests can replay the same
// starting centers through an independent reference loop.
std::vector<std::vector<double>> kmeans_plusplus_init(std::span<const double> points,
                                                      int64_t n, int f, int k,
                                                      std::mt19937_64& rng);

// Euclidean Lloyd iteration, best of `starts` seeded initializations by
// within-cluster sum of squares. Empty clusters are reseeded at the farthest
// point. `points` is row-major n x f.
KMeansResult kmeans(std::span<const double> points, int64_t n, int f, int k, int starts,
                    uint64_t seed, int threads = 1);

enum class SegmentFeature { kCovariates, kPreferences, kOptimalLevels };

const char* feature_name(SegmentFeature f);

struct BenchmarkPolicy {
    SegmentedPolicy policy;
    ProfitReport report;
};

// Classical "discretize then personalize": cluster on the chosen feature,
// then give each cluster its profit-maximizing feasible treatment. The
// assignment stays as clustered; individuals are not reassigned by profit.
BenchmarkPolicy segment_then_personalize(const Population& pop, int k, SegmentFeature feature,
                                         int starts, uint64_t seed, int threads = 1);

// Best L-subset of the given discrete arms, each individual assigned to her
// best arm within the subset.
BenchmarkPolicy ab_test_policy(const Population& pop,
                               std::span<const FeasibleTreatment> arms, int l,
                               int threads = 1);

struct BlanketResult {
    FeasibleTreatment treatment;
    SegmentedPolicy policy;
    ProfitReport report;
};

// Single treatment for the whole population. With a fixed (dim, value) it is
// evaluated as given; with a dim only, the level is optimized within that
// dimension; with neither, level and dimension are both optimized.
BlanketResult blanket(const Population& pop, std::optional<int> dim = {},
                      std::optional<double> value = {}, int threads = 1);

}  // namespace coarse::benchmarks

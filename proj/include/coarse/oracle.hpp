#pragma once

#include "coarse/lloyd.hpp"
#include "coarse/types.hpp"

namespace coarse::oracle {

// C(n, k); returns -1 on overflow past the cap domain.
int64_t count_subsets(int64_t n, int64_t k);

// Multisets of size l over `dims` dimensions: C(l + dims - 1, dims - 1).
int64_t count_compositions(int dims, int l);

// G levels per dimension; by default equally spaced with the upper bound
// included and zero excluded.
std::vector<double> grid_levels(double upper, int g, bool include_zero = false);

struct GridConfig {
    int points_per_dim = 10;
    bool include_zero = false;
    int64_t enumeration_cap = 10'000'000;
    int threads = 1;
};

struct OracleResult {
    SegmentedPolicy policy;
    ProfitReport report;
};

// Exhaustive search over all L-subsets of the grid treatments, each individual
// assigned to her best offered treatment. Refuses (config_error) when the
// subset count exceeds the cap.
OracleResult grid_solve(const Population& pop, int l, const GridConfig& config = {});

struct RefineConfig {
    int seeds = 5;
    int max_iterations = 200;
    double tolerance = 1e-10;
    int64_t composition_cap = 10000;
    uint64_t seed = 0;
    int threads = 1;
};

// Continuous oracle: for every dimension composition of the L treatments,
// alternate assignment and closed-form per-segment level updates from several
// seeds; returns the best over compositions.
OracleResult refine_solve(const Population& pop, int l, const RefineConfig& config = {});

struct SpeedReport {
    double lloyd_seconds = 0.0;
    double grid_seconds = 0.0;
    double ratio = 0.0;  // grid / lloyd
    double lloyd_profit = 0.0;
    double grid_profit = 0.0;
};

// Wall-clock comparison of the solver against the grid search on the same
// population and thread count.
SpeedReport speed_benchmark(const Population& pop, int l, int g,
                            const lloyd::SolverConfig& config);

}  // namespace coarse::oracle

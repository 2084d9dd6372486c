#pragma once

#include <functional>
#include <span>
#include <string>

#include "coarse/granular.hpp"
#include "coarse/types.hpp"

namespace coarse::lloyd {

enum class UpdateRule { kBarycenter, kExact };

const char* update_rule_name(UpdateRule r);
UpdateRule parse_update_rule(const std::string& s);

struct MenuCost {
    enum class Kind { kNone, kLinear, kQuadratic };
    Kind kind = Kind::kNone;
    double delta = 0.0;

    double operator()(int l) const;
    std::string to_string() const;
    static MenuCost parse(const std::string& s);  // "none" | "linear:d" | "quadratic:d"
};

struct SolverConfig {
    int num_treatments = 1;    // L
    double tolerance = 1e-6;   // treatment-value change threshold
    int max_iterations = 1000;
    int num_starts = 5;
    UpdateRule update_rule = UpdateRule::kExact;
    double round_step = 0.0;  // 0 = off; > 0 keeps every level on the step grid
    MenuCost menu_cost;
    uint64_t seed = 0;
    bool allow_holdout = false;   // negative-profit individuals go untreated
    bool zero_intercept = false;  // force alpha = 0 before solving
    int threads = 1;

    void validate(int64_t population_size) const;
};

struct IterationRecord {
    int iteration = 0;
    std::vector<FeasibleTreatment> treatments;
    double squared_regret = 0.0;
    double total_profit = 0.0;
    std::vector<int64_t> cell_counts;
};

struct SolveTrace {
    std::vector<IterationRecord> iterations;
    std::string termination_reason;  // "converged" | "iteration-cap"
    int winning_start = 0;
};

struct AssignResult {
    std::vector<int32_t> assignment;
    std::vector<double> masses;
    int64_t holdout_count = 0;
};

// Voronoi step: map each individual to the offered treatment with the lowest
// regret (equivalently the highest profit), ties to the lowest index.
AssignResult assign(const Population& pop, std::span<const FeasibleTreatment> treatments,
                    bool allow_holdout = false, int threads = 1);

// Coordinate-wise mean of the cell members' granular optima.
std::vector<double> barycenter_update(const Population& pop,
                                      const granular::GranularSolution& gran,
                                      std::span<const int64_t> cell);

// Project a candidate level vector onto the feasible set: pick the dimension
// whose candidate level earns the cell the most profit. Under kExact the
// candidate level is first replaced by the cell-optimal level.
FeasibleTreatment reduce_dimension(const Population& pop, std::span<const int64_t> cell,
                                   std::span<const double> candidate, UpdateRule rule,
                                   double round_step = 0.0);

struct SolveResult {
    SegmentedPolicy policy;
    ProfitReport report;
    SolveTrace trace;
    double menu_cost_value = 0.0;
    double objective = 0.0;  // squared_regret + menu cost
};

using SeedSet = std::vector<FeasibleTreatment>;

// Best-of-starts solve for config.num_treatments. Internally runs the warm
// chain L = 1..num_treatments; `extra_seeds` are appended as additional
// starting points at the final L.
SolveResult solve(const Population& pop, const SolverConfig& config,
                  std::span<const SeedSet> extra_seeds = {});

// Full warm-started chain; result[l-1] holds the L = l solution. The optional
// provider contributes extra seed sets per L.
using SeedProvider = std::function<std::vector<SeedSet>(int l)>;
std::vector<SolveResult> solve_chain(const Population& pop, const SolverConfig& config,
                                     int l_max, const SeedProvider& extra_seeds = {});

struct MenuResult {
    int best_l = 1;
    SolveResult result;
    std::vector<double> net_profit_by_l;  // total_profit - menu cost
};

// Chooses the L in 1..l_max maximizing total_profit - menu_cost(L).
MenuResult solve_menu(const Population& pop, const SolverConfig& config, int l_max);

struct ExPostResult {
    SegmentedPolicy policy;
    ProfitReport report;
    int effective_treatments = 0;  // after collisions merge
};

// Round converged levels to the step grid, merge colliding treatments,
// and reassign.
ExPostResult round_policy_expost(const Population& pop, const SegmentedPolicy& policy,
                                 double step, bool allow_holdout = false, int threads = 1);

struct FocEntry {
    int segment = 0;
    int64_t members = 0;
    bool boundary = false;  // level at 0 or the upper bound, or empty segment
    double residual = 0.0;  // |sum beta/(1+t) - sum s| / sum s for interior segments
};

// Averaged first-order condition per segment: marginal effect of the level
// equals the marginal cost across the cell.
std::vector<FocEntry> foc_residual(const Population& pop, const SegmentedPolicy& policy);

}  // namespace coarse::lloyd

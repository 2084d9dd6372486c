#pragma once

#include <cmath>
#include <span>

#include "coarse/types.hpp"

namespace coarse::model {

// Response curve: alpha + beta * ln(1 + t).
inline double cate(double alpha, double beta, double t) {
    return alpha + beta * std::log1p(t);
}

// Linear per-individual cost, c(0) = 0 exactly.
inline double cost(double scale, double t) { return scale * t; }

// Expected incremental profit of treatment level t.
inline double profit(double alpha, double beta, double scale, double t) {
    return alpha + beta * std::log1p(t) - scale * t;
}

// Domain-checked forms; throw config_error on an invalid dimension or a level
// outside [0, upper_bound].
double cate_value(const Population& pop, int64_t i, int dim, double t);
double treatment_cost(const Population& pop, int64_t i, int dim, double t);
double incremental_profit(const Population& pop, int64_t i, int dim, double t);
double incremental_profit(const Population& pop, int64_t i, const FeasibleTreatment& t);

// Totals for a policy. `best_returns` holds the per-individual ceiling
// (granular module); regrets are clamped into [0, inf).
ProfitReport policy_profit(const Population& pop, const SegmentedPolicy& policy,
                           std::span<const double> best_returns, int threads = 1);

// Structural checks: assignment covers the population, indices in range,
// treatments feasible. Throws data_error.
void check_policy(const Population& pop, const SegmentedPolicy& policy);

}  // namespace coarse::model

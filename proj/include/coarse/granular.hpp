#pragma once

#include <utility>

#include "coarse/model.hpp"
#include "coarse/types.hpp"

namespace coarse::granular {

// Per-individual unconstrained optima and the best-return ceiling.
struct GranularSolution {
    std::vector<std::vector<double>> optima;  // [dim][i], clamped to [0, upper]
    std::vector<int32_t> best_dim;            // per individual, ties to lower dim
    std::vector<double> best_return;          // R-bar per individual
};

// Unique maximizer of alpha + beta ln(1+t) - s t on [0, upper]:
// clamp(beta/s - 1, 0, upper).
inline double optimal_level(double beta, double cost_scale, double upper) {
    const double t = beta / cost_scale - 1.0;
    return t < 0.0 ? 0.0 : (t > upper ? upper : t);
}

double optimal_treatment(const Population& pop, int64_t i, int dim);

// Golden-section search oracle for the closed form.
double optimal_treatment_numeric(const Population& pop, int64_t i, int dim,
                                 double tol = 1e-10);

// (R-bar, best dimension), ties broken toward the lower dimension index.
std::pair<double, int> best_return(const Population& pop, int64_t i);

GranularSolution solve(const Population& pop, int threads = 1);

// R-bar_i minus the profit of the given treatment, clamped into [0, inf).
double regret(const Population& pop, const GranularSolution& gran, int64_t i,
              const FeasibleTreatment& t);

struct GranularPolicy {
    SegmentedPolicy policy;  // one segment per individual
    ProfitReport report;
    int64_t unique_treatments = 0;  // distinct (dim, value) at 3 significant figures
};

GranularPolicy granular_policy(const Population& pop, int threads = 1);

// Convenience overload: computes the granular ceiling internally.
ProfitReport policy_profit(const Population& pop, const SegmentedPolicy& policy,
                           int threads = 1);

}  // namespace coarse::granular

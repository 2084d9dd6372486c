#pragma once

#include <functional>

#include "coarse/granular.hpp"
#include "coarse/types.hpp"

namespace coarse::surplus {

// Consumer valuation of a treatment. The shipped model values a treatment at
// the firm's cost of issuing it (a pure transfer): v_i(t) = cost_scale * t.
double valuation(const Population& pop, int64_t i, const FeasibleTreatment& t);

using ValuationFn =
    std::function<double(const Population&, int64_t, const FeasibleTreatment&)>;

struct SurplusRow {
    double dcs = 0.0;  // consumer surplus delta vs. the granular benchmark
    double dps = 0.0;  // producer surplus delta (= -regret)
    double dts = 0.0;  // total, dcs + dps
};

struct TreatmentSurplus {
    FeasibleTreatment treatment;
    int64_t members = 0;
    double mean_dts = 0.0, mean_dcs = 0.0, mean_dps = 0.0;
    double share_dts_pos = 0.0, share_dcs_pos = 0.0, share_dps_pos = 0.0;
};

struct SurplusReport {
    std::vector<SurplusRow> per_individual;
    double total_dcs = 0.0, total_dps = 0.0, total_dts = 0.0;
    double share_dcs_pos = 0.0, share_dps_pos = 0.0, share_dts_pos = 0.0;
    std::vector<TreatmentSurplus> per_treatment;  // keyed by coarse treatment index
};

// Welfare accounting of a coarse policy against the granular benchmark:
// dCS_i = v(assigned) - v(granular optimum), dPS_i = assigned profit - R-bar,
// dTS_i = dCS_i + dPS_i.
SurplusReport surplus_decomposition(const Population& pop, const SegmentedPolicy& coarse,
                                    const granular::GranularSolution& gran,
                                    const ValuationFn& value = {}, int threads = 1);

}  // namespace coarse::surplus

#include "coarse/surplus.hpp"

#include <algorithm>
#include <cmath>

#include "coarse/model.hpp"
#include "coarse/parallel.hpp"

namespace coarse::surplus {

double valuation(const Population& pop, int64_t i, const FeasibleTreatment& t) {
    pop.check_treatment(t);
    return pop.cost_scale(t.dim)[i] * t.value;
}

SurplusReport surplus_decomposition(const Population& pop, const SegmentedPolicy& coarse,
                                    const granular::GranularSolution& gran,
                                    const ValuationFn& value, int threads) {
    model::check_policy(pop, coarse);
    const int64_t n = pop.size();
    if (static_cast<int64_t>(gran.best_return.size()) != n)
        throw data_error("surplus: granular solution does not match the population");

    auto v = value ? value : ValuationFn(&valuation);

    SurplusReport report;
    report.per_individual.resize(n);
    parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            const int bd = gran.best_dim[i];
            const FeasibleTreatment star{static_cast<int32_t>(bd), gran.optima[bd][i]};
            const int32_t a = coarse.assignment[i];

            double v_assigned = 0.0;  // no treatment: nothing transferred
            double p_assigned = 0.0;
            if (a != kHoldoutCell) {
                const auto& t = coarse.treatments[a];
                v_assigned = v(pop, i, t);
                p_assigned = model::profit(pop.alpha(t.dim)[i], pop.beta(t.dim)[i],
                                           pop.cost_scale(t.dim)[i], t.value);
            }
            SurplusRow& row = report.per_individual[i];
            row.dcs = v_assigned - v(pop, i, star);
            row.dps = -std::max(gran.best_return[i] - p_assigned, 0.0);
            row.dts = row.dcs + row.dps;
        }
    });

    const int l = static_cast<int>(coarse.treatments.size());
    report.per_treatment.resize(l);
    for (int k = 0; k < l; ++k) report.per_treatment[k].treatment = coarse.treatments[k];
    int64_t cs_pos = 0, ps_pos = 0, ts_pos = 0;
    std::vector<int64_t> t_cs_pos(l, 0), t_ps_pos(l, 0), t_ts_pos(l, 0);
    for (int64_t i = 0; i < n; ++i) {
        const SurplusRow& row = report.per_individual[i];
        report.total_dcs += row.dcs;
        report.total_dps += row.dps;
        report.total_dts += row.dts;
        cs_pos += row.dcs > 0.0;
        ps_pos += row.dps > 0.0;
        ts_pos += row.dts > 0.0;
        const int32_t a = coarse.assignment[i];
        if (a == kHoldoutCell) continue;
        TreatmentSurplus& ts = report.per_treatment[a];
        ts.members += 1;
        ts.mean_dcs += row.dcs;
        ts.mean_dps += row.dps;
        ts.mean_dts += row.dts;
        t_cs_pos[a] += row.dcs > 0.0;
        t_ps_pos[a] += row.dps > 0.0;
        t_ts_pos[a] += row.dts > 0.0;
    }
    if (n > 0) {
        report.share_dcs_pos = static_cast<double>(cs_pos) / n;
        report.share_dps_pos = static_cast<double>(ps_pos) / n;
        report.share_dts_pos = static_cast<double>(ts_pos) / n;
    }
    for (int k = 0; k < l; ++k) {
        TreatmentSurplus& ts = report.per_treatment[k];
        if (ts.members == 0) continue;
        const double m = static_cast<double>(ts.members);
        ts.mean_dcs /= m;
        ts.mean_dps /= m;
        ts.mean_dts /= m;
        ts.share_dcs_pos = static_cast<double>(t_cs_pos[k]) / m;
        ts.share_dps_pos = static_cast<double>(t_ps_pos[k]) / m;
        ts.share_dts_pos = static_cast<double>(t_ts_pos[k]) / m;
    }
    return report;
}

}  // namespace coarse::surplus

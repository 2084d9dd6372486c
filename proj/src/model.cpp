#include "coarse/model.hpp"

#include <algorithm>

#include "coarse/parallel.hpp"

namespace coarse::model {

double cate_value(const Population& pop, int64_t i, int dim, double t) {
    pop.check_treatment({static_cast<int32_t>(dim), t});
    return cate(pop.alpha(dim)[i], pop.beta(dim)[i], t);
}

double treatment_cost(const Population& pop, int64_t i, int dim, double t) {
    pop.check_treatment({static_cast<int32_t>(dim), t});
    return cost(pop.cost_scale(dim)[i], t);
}

double incremental_profit(const Population& pop, int64_t i, int dim, double t) {
    pop.check_treatment({static_cast<int32_t>(dim), t});
    return profit(pop.alpha(dim)[i], pop.beta(dim)[i], pop.cost_scale(dim)[i], t);
}

double incremental_profit(const Population& pop, int64_t i, const FeasibleTreatment& t) {
    return incremental_profit(pop, i, t.dim, t.value);
}

void check_policy(const Population& pop, const SegmentedPolicy& policy) {
    if (static_cast<int64_t>(policy.assignment.size()) != pop.size())
        throw data_error("policy assignment does not cover the population");
    if (policy.treatments.empty()) throw data_error("policy offers no treatments");
    for (const auto& t : policy.treatments) pop.check_treatment(t);
    const int32_t l = static_cast<int32_t>(policy.treatments.size());
    for (int32_t a : policy.assignment)
        if (a != kHoldoutCell && (a < 0 || a >= l))
            throw data_error("assignment index " + std::to_string(a) + " out of range");
}

ProfitReport policy_profit(const Population& pop, const SegmentedPolicy& policy,
                           std::span<const double> best_returns, int threads) {
    check_policy(pop, policy);
    const int64_t n = pop.size();
    const size_t l = policy.treatments.size();

    struct Partial {
        double profit = 0.0, regret = 0.0, squared = 0.0;
    };
    std::vector<Partial> parts(static_cast<size_t>(block_count(n)));
    parallel_blocks(n, threads, [&](int64_t b, int64_t begin, int64_t end) {
        Partial p;
        for (int64_t i = begin; i < end; ++i) {
            const int32_t a = policy.assignment[i];
            double pi = 0.0;  // no treatment: zero incremental profit
            if (a != kHoldoutCell) {
                const auto& t = policy.treatments[a];
                pi = profit(pop.alpha(t.dim)[i], pop.beta(t.dim)[i],
                            pop.cost_scale(t.dim)[i], t.value);
            }
            const double r = std::max(best_returns[i] - pi, 0.0);
            p.profit += pi;
            p.regret += r;
            p.squared += r * r;
        }
        parts[static_cast<size_t>(b)] = p;
    });

    ProfitReport report;
    for (const auto& p : parts) {
        report.total_profit += p.profit;
        report.total_regret += p.regret;
        report.squared_regret += p.squared;
    }

    report.per_segment.resize(l);
    for (size_t k = 0; k < l; ++k) report.per_segment[k].treatment = policy.treatments[k];
    for (int64_t i = 0; i < n; ++i) {
        const int32_t a = policy.assignment[i];
        if (a == kHoldoutCell) continue;
        const auto& t = policy.treatments[a];
        report.per_segment[a].members += 1;
        report.per_segment[a].profit += profit(pop.alpha(t.dim)[i], pop.beta(t.dim)[i],
                                               pop.cost_scale(t.dim)[i], t.value);
    }
    return report;
}

}  // namespace coarse::model

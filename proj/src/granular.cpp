#include "coarse/granular.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "coarse/parallel.hpp"

namespace coarse::granular {

double optimal_treatment(const Population& pop, int64_t i, int dim) {
    pop.check_dim(dim);
    return optimal_level(pop.beta(dim)[i], pop.cost_scale(dim)[i], pop.upper_bound(dim));
}

double optimal_treatment_numeric(const Population& pop, int64_t i, int dim, double tol) {
    pop.check_dim(dim);
    const long double alpha = pop.alpha(dim)[i];
    const long double beta = pop.beta(dim)[i];
    const long double s = pop.cost_scale(dim)[i];
    const long double upper = pop.upper_bound(dim);
    // extended precision: comparison search in double stalls near
    // sqrt(epsilon), well short of the advertised agreement with the closed
    // form
    auto f = [&](long double t) { return alpha + beta * std::log1p(t) - s * t; };

    static const long double kInvPhi = (std::sqrt(5.0L) - 1.0L) / 2.0L;
    long double a = 0.0L, b = upper;
    long double c = b - kInvPhi * (b - a);
    long double d = a + kInvPhi * (b - a);
    long double fc = f(c), fd = f(d);
    const long double width = std::max<long double>(tol, 1e-9L);
    while (b - a > width) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    long double mid = 0.5L * (a + b);
    // one centered quadratic step sharpens the bracket midpoint
    const long double h = std::max<long double>(1e-6L, b - a);
    if (mid - h >= 0.0L && mid + h <= upper) {
        const long double fm = f(mid), fp = f(mid + h), fn = f(mid - h);
        const long double denom = fn - 2.0L * fm + fp;
        if (denom < 0.0L) {
            mid += 0.5L * h * (fn - fp) / denom;
            mid = std::clamp(mid, a - h, b + h);
        }
    }
    mid = std::clamp(mid, 0.0L, upper);
    // endpoints are candidates too when the maximizer is on the boundary
    if (f(0.0L) >= f(mid) && f(0.0L) >= f(upper)) return 0.0;
    if (f(upper) > f(mid)) return pop.upper_bound(dim);
    return static_cast<double>(mid);
}

std::pair<double, int> best_return(const Population& pop, int64_t i) {
    int best = 0;
    double best_r = -std::numeric_limits<double>::infinity();
    for (int d = 0; d < pop.dims(); ++d) {
        const double t = optimal_level(pop.beta(d)[i], pop.cost_scale(d)[i],
                                       pop.upper_bound(d));
        const double r = model::profit(pop.alpha(d)[i], pop.beta(d)[i],
                                       pop.cost_scale(d)[i], t);
        if (r > best_r) {
            best_r = r;
            best = d;
        }
    }
    return {best_r, best};
}

GranularSolution solve(const Population& pop, int threads) {
    const int64_t n = pop.size();
    const int dims = pop.dims();
    GranularSolution gran;
    gran.optima.assign(dims, std::vector<double>(n));
    gran.best_dim.resize(n);
    gran.best_return.resize(n);

    const auto& k = kernels::table();
    for (int d = 0; d < dims; ++d) {
        const auto arr = pop.dim_arrays(d);
        const double upper = pop.upper_bound(d);
        double* out = gran.optima[d].data();
        parallel_blocks(n, threads, [&, d](int64_t, int64_t begin, int64_t end) {
            k.granular_levels(arr.beta, arr.cost, upper, begin, end, out);
        });
    }
    parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            int best = 0;
            double best_r = -std::numeric_limits<double>::infinity();
            for (int d = 0; d < dims; ++d) {
                const double r = model::profit(pop.alpha(d)[i], pop.beta(d)[i],
                                               pop.cost_scale(d)[i], gran.optima[d][i]);
                if (r > best_r) {
                    best_r = r;
                    best = d;
                }
            }
            gran.best_dim[i] = best;
            gran.best_return[i] = best_r;
        }
    });
    return gran;
}

double regret(const Population& pop, const GranularSolution& gran, int64_t i,
              const FeasibleTreatment& t) {
    const double pi = model::incremental_profit(pop, i, t);
    return std::max(gran.best_return[i] - pi, 0.0);
}

GranularPolicy granular_policy(const Population& pop, int threads) {
    const int64_t n = pop.size();
    GranularPolicy out;
    const GranularSolution gran = solve(pop, threads);

    out.policy.treatments.resize(n);
    out.policy.assignment.resize(n);
    out.policy.masses.assign(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const int d = gran.best_dim[i];
        out.policy.treatments[i] = {static_cast<int32_t>(d), gran.optima[d][i]};
        out.policy.assignment[i] = static_cast<int32_t>(i);
    }

    if (n > 0) out.report = model::policy_profit(pop, out.policy, gran.best_return, threads);

    std::unordered_set<uint64_t> seen;
    seen.reserve(n);
    for (const auto& t : out.policy.treatments) {
        const double rounded = util::round_significant(t.value, 3);
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(rounded));
        std::memcpy(&bits, &rounded, sizeof(bits));
        seen.insert(util::mix64(bits, static_cast<uint64_t>(t.dim)));
    }
    out.unique_treatments = static_cast<int64_t>(seen.size());
    return out;
}

ProfitReport policy_profit(const Population& pop, const SegmentedPolicy& policy,
                           int threads) {
    const GranularSolution gran = solve(pop, threads);
    return model::policy_profit(pop, policy, gran.best_return, threads);
}

}  // namespace coarse::granular

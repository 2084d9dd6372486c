#include "coarse/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "coarse/parallel.hpp"

namespace coarse::oracle {

int64_t count_subsets(int64_t n, int64_t k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    long double c = 1.0L;
    for (int64_t j = 1; j <= k; ++j) {
        c = c * static_cast<long double>(n - k + j) / static_cast<long double>(j);
        if (c > 4e18L) return -1;
    }
    return static_cast<int64_t>(std::floor(c + 0.5L));
}

int64_t count_compositions(int dims, int l) { return count_subsets(l + dims - 1, dims - 1); }

std::vector<double> grid_levels(double upper, int g, bool include_zero) {
    if (g < 1) throw config_error("grid needs at least 1 point per dimension");
    std::vector<double> levels(g);
    if (include_zero) {
        if (g == 1) {
            levels[0] = 0.0;
        } else {
            for (int j = 0; j < g; ++j)
                levels[j] = upper * static_cast<double>(j) / static_cast<double>(g - 1);
        }
    } else {
        for (int j = 0; j < g; ++j)
            levels[j] = upper * static_cast<double>(j + 1) / static_cast<double>(g);
    }
    return levels;
}

namespace {

// Combination unranking in the lexicographic order used by the enumeration
// loops: the ordinal'th k-subset of {0..n-1}.
std::vector<int> unrank_combination(int64_t n, int k, int64_t ordinal) {
    std::vector<int> combo(k);
    int64_t x = 0;
    for (int j = 0; j < k; ++j) {
        for (;; ++x) {
            const int64_t block = count_subsets(n - x - 1, k - j - 1);
            if (ordinal < block) break;
            ordinal -= block;
        }
        combo[j] = static_cast<int>(x);
        ++x;
    }
    return combo;
}

bool next_combination(std::vector<int>& combo, int n) {
    const int k = static_cast<int>(combo.size());
    int j = k - 1;
    while (j >= 0 && combo[j] == n - k + j) --j;
    if (j < 0) return false;
    ++combo[j];
    for (int m = j + 1; m < k; ++m) combo[m] = combo[m - 1] + 1;
    return true;
}

SegmentedPolicy policy_from_treatments(const Population& pop,
                                       std::vector<FeasibleTreatment> treatments,
                                       int threads) {
    lloyd::AssignResult a = lloyd::assign(pop, treatments, false, threads);
    SegmentedPolicy policy;
    policy.treatments = std::move(treatments);
    policy.assignment = std::move(a.assignment);
    policy.masses = std::move(a.masses);
    return policy;
}

}  // namespace

OracleResult grid_solve(const Population& pop, int l, const GridConfig& config) {
    if (l < 1) throw config_error("grid_solve: l must be >= 1");
    if (pop.size() == 0) throw config_error("grid_solve: population is empty");
    const int dims = pop.dims();
    const int g = config.points_per_dim;

    std::vector<FeasibleTreatment> grid;
    for (int d = 0; d < dims; ++d)
        for (double v : grid_levels(pop.upper_bound(d), g, config.include_zero))
            grid.push_back({static_cast<int32_t>(d), v});
    const int64_t gd = static_cast<int64_t>(grid.size());
    if (l > gd) throw config_error("grid_solve: l exceeds the grid size");

    const int64_t n_subsets = count_subsets(gd, l);
    if (n_subsets < 0 || n_subsets > config.enumeration_cap)
        throw config_error(
            "grid_solve: " +
            (n_subsets < 0 ? std::string("more than 4e18")
                           : std::to_string(n_subsets)) +
            " subsets exceed the enumeration cap of " +
            std::to_string(config.enumeration_cap));

    const int64_t n = pop.size();
    std::vector<std::vector<double>> cols(gd, std::vector<double>(n));
    const auto& kt = kernels::table();
    for (int64_t c = 0; c < gd; ++c) {
        const auto arr = pop.dim_arrays(grid[c].dim);
        const double lp = std::log1p(grid[c].value);
        parallel_blocks(n, config.threads, [&](int64_t, int64_t begin, int64_t end) {
            kt.profit_column(arr.alpha, arr.beta, arr.cost, grid[c].value, lp, begin, end,
                             cols[c].data());
        });
    }

    // parallel over subset-ordinal chunks; combine keeps the lexicographically
    // first subset on profit ties
    const int64_t chunk = 4096;
    const int64_t n_chunks = (n_subsets + chunk - 1) / chunk;
    struct ChunkBest {
        double profit = -std::numeric_limits<double>::infinity();
        int64_t ordinal = -1;
    };
    std::vector<ChunkBest> bests(static_cast<size_t>(n_chunks));
    parallel_jobs(n_chunks, config.threads, [&](int64_t c) {
        const int64_t first = c * chunk;
        const int64_t last = std::min(first + chunk, n_subsets);
        std::vector<int> combo = unrank_combination(gd, l, first);
        std::vector<const double*> ptrs(l);
        ChunkBest best;
        for (int64_t ord = first; ord < last; ++ord) {
            for (int j = 0; j < l; ++j) ptrs[j] = cols[combo[j]].data();
            const double p = kt.max_columns_sum(ptrs.data(), l, 0, n);
            if (p > best.profit) {
                best.profit = p;
                best.ordinal = ord;
            }
            if (ord + 1 < last) next_combination(combo, static_cast<int>(gd));
        }
        bests[static_cast<size_t>(c)] = best;
    });
    ChunkBest winner;
    for (const auto& b : bests)
        if (b.profit > winner.profit) winner = b;

    std::vector<int> combo = unrank_combination(gd, l, winner.ordinal);
    std::vector<FeasibleTreatment> chosen(l);
    for (int j = 0; j < l; ++j) chosen[j] = grid[combo[j]];

    OracleResult out;
    out.policy = policy_from_treatments(pop, std::move(chosen), config.threads);
    out.report = granular::policy_profit(pop, out.policy, config.threads);
    return out;
}

namespace {

// every multiset of size l over the dimensions, as sorted dim vectors
void enumerate_compositions(int dims, int l, std::vector<int>& current,
                            std::vector<std::vector<int>>& out) {
    if (static_cast<int>(current.size()) == l) {
        out.push_back(current);
        return;
    }
    const int start = current.empty() ? 0 : current.back();
    for (int d = start; d < dims; ++d) {
        current.push_back(d);
        enumerate_compositions(dims, l, current, out);
        current.pop_back();
    }
}

}  // namespace

OracleResult refine_solve(const Population& pop, int l, const RefineConfig& config) {
    if (l < 1) throw config_error("refine_solve: l must be >= 1");
    if (pop.size() == 0) throw config_error("refine_solve: population is empty");
    const int dims = pop.dims();
    const int64_t n = pop.size();

    const int64_t n_comp = count_compositions(dims, l);
    if (n_comp < 0 || n_comp > config.composition_cap)
        throw config_error("refine_solve: " + std::to_string(n_comp) +
                           " dimension compositions exceed the cap of " +
                           std::to_string(config.composition_cap));
    std::vector<std::vector<int>> compositions;
    {
        std::vector<int> current;
        enumerate_compositions(dims, l, current, compositions);
    }

    const granular::GranularSolution gran = granular::solve(pop, config.threads);
    // sorted optima per dimension for quantile seeding
    std::vector<std::vector<double>> sorted(dims);
    for (int d = 0; d < dims; ++d) {
        sorted[d] = gran.optima[d];
        std::sort(sorted[d].begin(), sorted[d].end());
    }
    auto quantile = [&](int d, double q) {
        const auto& v = sorted[d];
        const double pos = q * static_cast<double>(v.size() - 1);
        const int64_t lo = static_cast<int64_t>(pos);
        return v[std::min<int64_t>(lo, v.size() - 1)];
    };

    std::vector<int32_t> idx(n);
    std::vector<double> profit(n);
    std::vector<kernels::DimArrays> dim_arrays;
    for (int d = 0; d < dims; ++d) dim_arrays.push_back(pop.dim_arrays(d));
    const auto& kt = kernels::table();

    auto assign_now = [&](const std::vector<FeasibleTreatment>& ts) {
        std::vector<kernels::TreatmentTerm> terms(ts.size());
        for (size_t k = 0; k < ts.size(); ++k)
            terms[k] = {ts[k].dim, ts[k].value, std::log1p(ts[k].value)};
        parallel_blocks(n, config.threads, [&](int64_t, int64_t begin, int64_t end) {
            kt.assign_best(dim_arrays.data(), terms.data(), static_cast<int>(ts.size()),
                           begin, end, idx.data(), profit.data());
        });
    };

    std::vector<FeasibleTreatment> best_treatments;
    double best_profit = -std::numeric_limits<double>::infinity();

    for (const auto& comp : compositions) {
        // per-dimension counts inside this composition, for quantile spacing
        std::vector<int> within(l, 0), totals(dims, 0);
        for (int j = 0; j < l; ++j) within[j] = totals[comp[j]]++;

        for (int s = 0; s < config.seeds; ++s) {
            std::mt19937_64 rng(util::mix64(config.seed, static_cast<uint64_t>(s),
                                            util::fnv1a64(std::string(comp.begin(), comp.end()))));
            std::vector<FeasibleTreatment> ts(l);
            for (int j = 0; j < l; ++j) {
                const int d = comp[j];
                double level;
                if (s == 0) {
                    level = quantile(d, (within[j] + 0.5) / totals[d]);
                } else {
                    std::uniform_real_distribution<double> u(0.0, pop.upper_bound(d));
                    level = u(rng);
                }
                ts[j] = {static_cast<int32_t>(d), level};
            }

            for (int iter = 0; iter < config.max_iterations; ++iter) {
                assign_now(ts);
                // per-segment sums in the segment's own dimension
                std::vector<double> sb(l, 0.0), sc(l, 0.0);
                std::vector<int64_t> cnt(l, 0);
                for (int64_t i = 0; i < n; ++i) {
                    const int32_t a = idx[i];
                    const int d = ts[a].dim;
                    sb[a] += pop.beta(d)[i];
                    sc[a] += pop.cost_scale(d)[i];
                    cnt[a] += 1;
                }
                double max_delta = 0.0;
                for (int j = 0; j < l; ++j) {
                    double level;
                    if (cnt[j] == 0) {
                        // reseed at the worst-served individual's optimum in this dim
                        int64_t worst = 0;
                        double worst_r = -1.0;
                        for (int64_t i = 0; i < n; ++i) {
                            const double r = gran.best_return[i] - profit[i];
                            if (r > worst_r) {
                                worst_r = r;
                                worst = i;
                            }
                        }
                        level = gran.optima[ts[j].dim][worst];
                    } else {
                        level = std::clamp(sb[j] / sc[j] - 1.0, 0.0,
                                           pop.upper_bound(ts[j].dim));
                    }
                    max_delta = std::max(max_delta, std::fabs(level - ts[j].value));
                    ts[j].value = level;
                }
                if (max_delta < config.tolerance) break;
            }

            assign_now(ts);
            double total = 0.0;
            for (int64_t i = 0; i < n; ++i) total += profit[i];
            if (total > best_profit) {
                best_profit = total;
                best_treatments = ts;
            }
        }
    }

    OracleResult out;
    out.policy = policy_from_treatments(pop, std::move(best_treatments), config.threads);
    out.report = model::policy_profit(pop, out.policy, gran.best_return, config.threads);
    return out;
}

SpeedReport speed_benchmark(const Population& pop, int l, int g,
                            const lloyd::SolverConfig& config) {
    using clock = std::chrono::steady_clock;
    SpeedReport report;

    const auto t0 = clock::now();
    const lloyd::SolveResult solver = lloyd::solve(pop, [&] {
        lloyd::SolverConfig c = config;
        c.num_treatments = l;
        return c;
    }());
    const auto t1 = clock::now();
    GridConfig gc;
    gc.points_per_dim = g;
    gc.threads = config.threads;
    const OracleResult grid = grid_solve(pop, l, gc);
    const auto t2 = clock::now();

    report.lloyd_seconds = std::chrono::duration<double>(t1 - t0).count();
    report.grid_seconds = std::chrono::duration<double>(t2 - t1).count();
    report.ratio = report.lloyd_seconds > 0.0 ? report.grid_seconds / report.lloyd_seconds
                                              : std::numeric_limits<double>::infinity();
    report.lloyd_profit = solver.report.total_profit;
    report.grid_profit = grid.report.total_profit;
    return report;
}

}  // namespace coarse::oracle

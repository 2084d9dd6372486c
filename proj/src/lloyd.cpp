#include "coarse/lloyd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "coarse/benchmarks.hpp"
#include "coarse/parallel.hpp"

namespace coarse::lloyd {

const char* update_rule_name(UpdateRule r) {
    return r == UpdateRule::kBarycenter ? "barycenter" : "exact";
}

UpdateRule parse_update_rule(const std::string& s) {
    if (s == "barycenter") return UpdateRule::kBarycenter;
    if (s == "exact") return UpdateRule::kExact;
    throw config_error("unknown update rule: '" + s + "' (expected barycenter|exact)");
}

double MenuCost::operator()(int l) const {
    switch (kind) {
        case Kind::kNone: return 0.0;
        case Kind::kLinear: return delta * l;
        case Kind::kQuadratic: return delta * l * l;
    }
    return 0.0;
}

std::string MenuCost::to_string() const {
    switch (kind) {
        case Kind::kNone: return "none";
        case Kind::kLinear: return "linear:" + util::dtos(delta);
        case Kind::kQuadratic: return "quadratic:" + util::dtos(delta);
    }
    return "none";
}

MenuCost MenuCost::parse(const std::string& s) {
    if (s == "none" || s.empty()) return {};
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon);
    MenuCost mc;
    if (kind == "linear")
        mc.kind = Kind::kLinear;
    else if (kind == "quadratic")
        mc.kind = Kind::kQuadratic;
    else
        throw config_error("unknown menu cost: '" + s + "'");
    if (colon == std::string::npos)
        throw config_error("menu cost '" + kind + "' needs a delta, e.g. " + kind + ":0.5");
    mc.delta = util::parse_double(std::string_view(s).substr(colon + 1));
    if (mc.delta < 0.0) throw config_error("menu cost delta must be >= 0");
    return mc;
}

void SolverConfig::validate(int64_t population_size) const {
    if (num_treatments < 1) throw config_error("num_treatments must be >= 1");
    if (population_size >= 0 && num_treatments > population_size)
        throw config_error("num_treatments (" + std::to_string(num_treatments) +
                           ") exceeds the population size (" +
                           std::to_string(population_size) + ")");
    if (!(tolerance > 0.0)) throw config_error("tolerance must be > 0");
    if (round_step < 0.0) throw config_error("round_step must be >= 0");
    if (max_iterations < 1) throw config_error("max_iterations must be >= 1");
    if (num_starts < 1) throw config_error("num_starts must be >= 1");
    if (threads < 1) throw config_error("threads must be >= 1");
}

namespace {

double profit_of(const Population& pop, int64_t i, const FeasibleTreatment& t) {
    return model::profit(pop.alpha(t.dim)[i], pop.beta(t.dim)[i], pop.cost_scale(t.dim)[i],
                         t.value);
}

// Largest on-grid level not exceeding the bound.
double grid_max(double upper, double step) { return util::floor_to_step(upper, step); }

struct CellSums {
    int64_t count = 0;
    // [dim]: alpha, beta, cost, granular-optimum sums over the cell
    std::vector<double> sa, sb, sc, st;

    explicit CellSums(int dims) : sa(dims, 0.0), sb(dims, 0.0), sc(dims, 0.0), st(dims, 0.0) {}
    void clear() {
        count = 0;
        std::fill(sa.begin(), sa.end(), 0.0);
        std::fill(sb.begin(), sb.end(), 0.0);
        std::fill(sc.begin(), sc.end(), 0.0);
        std::fill(st.begin(), st.end(), 0.0);
    }
};

double cell_profit_at(const CellSums& s, int dim, double level) {
    return s.sa[dim] + std::log1p(level) * s.sb[dim] - level * s.sc[dim];
}

// Cell-optimal level in one dimension under the step grid: the profit is
// concave in the level, so the best multiple brackets the unconstrained root.
double snapped_exact_level(const CellSums& s, int dim, double upper, double step) {
    const double unconstrained = s.sb[dim] / s.sc[dim] - 1.0;
    if (step <= 0.0) return std::clamp(unconstrained, 0.0, upper);
    const double hi = grid_max(upper, step);
    const double lo_mult = std::clamp(util::floor_to_step(unconstrained, step), 0.0, hi);
    const double hi_mult = std::clamp(lo_mult + step, 0.0, hi);
    return cell_profit_at(s, dim, lo_mult) >= cell_profit_at(s, dim, hi_mult) ? lo_mult
                                                                              : hi_mult;
}

double snapped_barycenter_level(double level, double upper, double step) {
    if (step <= 0.0) return std::clamp(level, 0.0, upper);
    return std::clamp(util::round_to_step(level, step), 0.0, grid_max(upper, step));
}

FeasibleTreatment best_treatment_for_cell(const Population& pop, const CellSums& s,
                                          UpdateRule rule, double round_step) {
    int best_dim = 0;
    double best_level = 0.0;
    double best_profit = -std::numeric_limits<double>::infinity();
    for (int d = 0; d < pop.dims(); ++d) {
        double level;
        if (rule == UpdateRule::kExact) {
            level = snapped_exact_level(s, d, pop.upper_bound(d), round_step);
        } else {
            level = snapped_barycenter_level(s.st[d] / static_cast<double>(s.count),
                                             pop.upper_bound(d), round_step);
        }
        const double p = cell_profit_at(s, d, level);
        if (p > best_profit) {
            best_profit = p;
            best_dim = d;
            best_level = level;
        }
    }
    return {static_cast<int32_t>(best_dim), best_level};
}

// ---------------------------------------------------------------------------
// Solver: precomputes the granular solution once and runs multistart rounds.
// ---------------------------------------------------------------------------
class Solver {
  public:
    Solver(const Population& pop, const SolverConfig& config)
        : pop_(pop), cfg_(config), n_(pop.size()), dims_(pop.dims()) {
        gran_ = granular::solve(pop_, cfg_.threads);
        dim_arrays_.reserve(dims_);
        for (int d = 0; d < dims_; ++d) dim_arrays_.push_back(pop_.dim_arrays(d));
        sorted_optima_.resize(dims_);
        for (int d = 0; d < dims_; ++d) {
            sorted_optima_[d] = gran_.optima[d];
            std::sort(sorted_optima_[d].begin(), sorted_optima_[d].end());
        }
        scratch_idx_.resize(n_);
        scratch_profit_.resize(n_);
    }

    // level at quantile q of the granular optima in a dimension
    double optima_quantile(int dim, double q) const {
        const auto& v = sorted_optima_[dim];
        const auto pos = static_cast<int64_t>(q * static_cast<double>(v.size() - 1));
        return v[std::clamp<int64_t>(pos, 0, v.size() - 1)];
    }

    const granular::GranularSolution& gran() const { return gran_; }

    struct StartOutcome {
        std::vector<FeasibleTreatment> treatments;
        double profit = -std::numeric_limits<double>::infinity();
        SolveTrace trace;
    };

    // --- assignment -------------------------------------------------------
    void assign_into(std::span<const FeasibleTreatment> treatments,
                     std::vector<int32_t>& idx, std::vector<double>& profit) const {
        const int l = static_cast<int>(treatments.size());
        std::vector<kernels::TreatmentTerm> terms(l);
        for (int k = 0; k < l; ++k)
            terms[k] = {treatments[k].dim, treatments[k].value,
                        std::log1p(treatments[k].value)};
        const auto& kt = kernels::table();
        parallel_blocks(n_, cfg_.threads, [&](int64_t, int64_t begin, int64_t end) {
            kt.assign_best(dim_arrays_.data(), terms.data(), l, begin, end, idx.data(),
                           profit.data());
        });
        if (cfg_.allow_holdout) {
            parallel_blocks(n_, cfg_.threads, [&](int64_t, int64_t begin, int64_t end) {
                for (int64_t i = begin; i < end; ++i)
                    if (profit[i] < 0.0) idx[i] = kHoldoutCell;
            });
        }
    }

    void accumulate_sums(std::span<const int32_t> idx, std::vector<CellSums>& cells) const {
        const int l = static_cast<int>(cells.size());
        const int64_t blocks = block_count(n_);
        std::vector<std::vector<CellSums>> partial(
            static_cast<size_t>(blocks), std::vector<CellSums>(l, CellSums(dims_)));
        parallel_blocks(n_, cfg_.threads, [&](int64_t b, int64_t begin, int64_t end) {
            auto& local = partial[static_cast<size_t>(b)];
            for (int64_t i = begin; i < end; ++i) {
                const int32_t a = idx[i];
                if (a == kHoldoutCell) continue;
                CellSums& s = local[a];
                s.count += 1;
                for (int d = 0; d < dims_; ++d) {
                    s.sa[d] += pop_.alpha(d)[i];
                    s.sb[d] += pop_.beta(d)[i];
                    s.sc[d] += pop_.cost_scale(d)[i];
                    s.st[d] += gran_.optima[d][i];
                }
            }
        });
        for (auto& c : cells) c.clear();
        for (const auto& local : partial)
            for (int k = 0; k < l; ++k) {
                cells[k].count += local[k].count;
                for (int d = 0; d < dims_; ++d) {
                    cells[k].sa[d] += local[k].sa[d];
                    cells[k].sb[d] += local[k].sb[d];
                    cells[k].sc[d] += local[k].sc[d];
                    cells[k].st[d] += local[k].st[d];
                }
            }
    }

    struct Metrics {
        double profit = 0.0;
        double squared_regret = 0.0;
    };

    Metrics evaluate(std::span<const int32_t> idx, std::span<const double> profit) const {
        struct Partial {
            double p = 0.0, sq = 0.0;
        };
        std::vector<Partial> parts(static_cast<size_t>(block_count(n_)));
        parallel_blocks(n_, cfg_.threads, [&](int64_t b, int64_t begin, int64_t end) {
            Partial acc;
            for (int64_t i = begin; i < end; ++i) {
                const double p = idx[i] == kHoldoutCell ? 0.0 : profit[i];
                const double r = std::max(gran_.best_return[i] - p, 0.0);
                acc.p += p;
                acc.sq += r * r;
            }
            parts[static_cast<size_t>(b)] = acc;
        });
        Metrics m;
        for (const auto& p : parts) {
            m.profit += p.p;
            m.squared_regret += p.sq;
        }
        return m;
    }

    // --- seed handling ------------------------------------------------------

    // Perturb or regrid a level so the (dim, value) pair is unused.
    void dedupe(std::vector<FeasibleTreatment>& set) const {
        auto taken = [&](const FeasibleTreatment& t, size_t upto) {
            for (size_t k = 0; k < upto; ++k)
                if (set[k] == t) return true;
            return false;
        };
        for (size_t k = 1; k < set.size(); ++k) {
            if (!taken(set[k], k)) continue;
            const double upper = pop_.upper_bound(set[k].dim);
            const double step =
                cfg_.round_step > 0.0 ? cfg_.round_step : std::max(upper * 1e-4, 1e-12);
            const double hi = cfg_.round_step > 0.0 ? grid_max(upper, step) : upper;
            bool placed = false;
            for (int j = 1; j < 1000 && !placed; ++j) {
                for (const double sign : {+1.0, -1.0}) {
                    FeasibleTreatment cand = set[k];
                    cand.value = std::clamp(cand.value + sign * j * step, 0.0, hi);
                    if (!taken(cand, k)) {
                        set[k] = cand;
                        placed = true;
                        break;
                    }
                }
            }
            // grid saturated: duplicate stays; the empty-cell reseed deals with it
        }
    }

    // Greedy farthest-point spread over granular optima in regret distance.
    // Starts from the individual with the largest ceiling; each pick adds the
    // optimum of the currently worst-served individual.
    void extend_spread(std::vector<FeasibleTreatment>& set, int l) const {
        std::vector<double> min_regret(n_);
        if (set.empty()) {
            int64_t j0 = 0;
            for (int64_t i = 1; i < n_; ++i)
                if (gran_.best_return[i] > gran_.best_return[j0]) j0 = i;
            set.push_back({gran_.best_dim[j0],
                           gran_.optima[gran_.best_dim[j0]][j0]});
        }
        std::fill(min_regret.begin(), min_regret.end(),
                  std::numeric_limits<double>::infinity());
        const auto& kt = kernels::table();
        std::vector<double> col(n_);
        auto fold_in = [&](const FeasibleTreatment& t) {
            const auto arr = dim_arrays_[t.dim];
            const double c = std::log1p(t.value);
            parallel_blocks(n_, cfg_.threads, [&](int64_t, int64_t begin, int64_t end) {
                kt.profit_column(arr.alpha, arr.beta, arr.cost, t.value, c, begin, end,
                                 col.data());
                for (int64_t i = begin; i < end; ++i)
                    min_regret[i] = std::min(
                        min_regret[i], std::max(gran_.best_return[i] - col[i], 0.0));
            });
        };
        for (const auto& t : set) fold_in(t);
        while (static_cast<int>(set.size()) < l) {
            int64_t j = 0;
            for (int64_t i = 1; i < n_; ++i)
                if (min_regret[i] > min_regret[j]) j = i;
            const int d = gran_.best_dim[j];
            set.push_back({static_cast<int32_t>(d), gran_.optima[d][j]});
            fold_in(set.back());
        }
    }

    std::vector<FeasibleTreatment> normalize_seed(std::vector<FeasibleTreatment> set,
                                                  int l) const {
        for (auto& t : set) {
            const double upper = pop_.upper_bound(t.dim);
            t.value = cfg_.round_step > 0.0
                          ? snapped_barycenter_level(t.value, upper, cfg_.round_step)
                          : std::clamp(t.value, 0.0, upper);
        }
        if (static_cast<int>(set.size()) > l) set.resize(l);
        if (static_cast<int>(set.size()) < l) {
            extend_spread(set, l);
            for (auto& t : set)
                if (cfg_.round_step > 0.0)
                    t.value = snapped_barycenter_level(t.value, pop_.upper_bound(t.dim),
                                                       cfg_.round_step);
        }
        dedupe(set);
        return set;
    }

    std::vector<FeasibleTreatment> seed_spread(int l) const {
        std::vector<FeasibleTreatment> set;
        extend_spread(set, l);
        return normalize_seed(std::move(set), l);
    }

    std::vector<FeasibleTreatment> seed_kmeans(int l) const {
        // center-finding only needs a representative sample
        constexpr int64_t kMaxSample = 100000;
        const int64_t stride = std::max<int64_t>(1, n_ / kMaxSample);
        std::vector<int64_t> sample;
        for (int64_t i = 0; i < n_; i += stride) sample.push_back(i);
        const int64_t m = static_cast<int64_t>(sample.size());
        if (m < l) return seed_spread(l);

        std::vector<double> pts(m * dims_);
        std::vector<double> mean(dims_, 0.0), sd(dims_, 0.0);
        for (int d = 0; d < dims_; ++d) {
            for (int64_t j = 0; j < m; ++j) mean[d] += gran_.optima[d][sample[j]];
            mean[d] /= m;
            for (int64_t j = 0; j < m; ++j) {
                const double dx = gran_.optima[d][sample[j]] - mean[d];
                sd[d] += dx * dx;
            }
            sd[d] = m > 1 ? std::sqrt(sd[d] / (m - 1)) : 0.0;
            const double inv = sd[d] > 0.0 ? 1.0 / sd[d] : 0.0;
            for (int64_t j = 0; j < m; ++j)
                pts[j * dims_ + d] = (gran_.optima[d][sample[j]] - mean[d]) * inv;
        }
        benchmarks::KMeansResult km;
        try {
            km = benchmarks::kmeans(pts, m, dims_, l, 2, util::mix64(cfg_.seed, 0xB00),
                                    cfg_.threads);
        } catch (const config_error&) {
            return seed_spread(l);  // fewer distinct points than clusters
        }
        std::vector<CellSums> sums(l, CellSums(dims_));
        for (int64_t j = 0; j < m; ++j) {
            CellSums& s = sums[km.assignment[j]];
            const int64_t i = sample[j];
            s.count += 1;
            for (int d = 0; d < dims_; ++d) {
                s.sa[d] += pop_.alpha(d)[i];
                s.sb[d] += pop_.beta(d)[i];
                s.sc[d] += pop_.cost_scale(d)[i];
                s.st[d] += gran_.optima[d][i];
            }
        }
        std::vector<FeasibleTreatment> set;
        for (const auto& s : sums)
            if (s.count > 0)
                set.push_back(best_treatment_for_cell(pop_, s, UpdateRule::kExact, 0.0));
        return normalize_seed(std::move(set), l);
    }

    // Levels drawn from quantiles of the granular optima (where the mass
    // actually lives), dimensions cycled through the multiset compositions so
    // small instances get every dimension mix seeded. Alternates staggered
    // quantiles within each dimension group with sorted random ones.
    std::vector<FeasibleTreatment> seed_random(int l, uint64_t ordinal) const {
        std::mt19937_64 rng(util::mix64(cfg_.seed, static_cast<uint64_t>(l), ordinal));
        std::vector<int> dims_for(l);
        const int64_t comp_count = composition_count(l);
        bool staggered = false;
        if (comp_count > 0 && comp_count <= 64) {
            composition_at(l, static_cast<int64_t>(ordinal % comp_count), dims_for);
            staggered = (static_cast<int64_t>(ordinal) / comp_count) % 2 == 0;
        } else {
            for (auto& d : dims_for)
                d = static_cast<int>(rng() % static_cast<uint64_t>(dims_));
        }
        std::vector<int> group_size(dims_, 0), within(l, 0);
        for (int k = 0; k < l; ++k) within[k] = group_size[dims_for[k]]++;

        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<std::vector<double>> qs(dims_);
        for (int d = 0; d < dims_; ++d) {
            qs[d].resize(group_size[d]);
            for (int m = 0; m < group_size[d]; ++m)
                qs[d][m] = staggered ? (m + 0.5) / group_size[d] : u(rng);
            std::sort(qs[d].begin(), qs[d].end());
        }
        std::vector<FeasibleTreatment> set(l);
        for (int k = 0; k < l; ++k)
            set[k] = {static_cast<int32_t>(dims_for[k]),
                      optima_quantile(dims_for[k], qs[dims_for[k]][within[k]])};
        return normalize_seed(std::move(set), l);
    }

    int64_t composition_count(int l) const {
        // multisets of size l over dims_ categories: C(l + D - 1, D - 1)
        long double c = 1.0L;
        for (int j = 1; j <= dims_ - 1; ++j)
            c = c * (l + j) / j;
        const long double rounded = std::floor(c + 0.5L);
        return rounded > 1e15L ? -1 : static_cast<int64_t>(rounded);
    }

    void composition_at(int l, int64_t index, std::vector<int>& out) const {
        // enumerate non-increasing counts lexicographically
        std::vector<int> counts(dims_, 0);
        int remaining = l;
        for (int d = 0; d < dims_ - 1; ++d) {
            for (int take = remaining; take >= 0; --take) {
                // number of compositions of (remaining - take) over remaining dims
                long double c = 1.0L;
                const int rest_dims = dims_ - d - 2;
                for (int j = 1; j <= rest_dims; ++j)
                    c = c * (remaining - take + j) / j;
                const int64_t block = static_cast<int64_t>(std::floor(c + 0.5L));
                if (index < block) {
                    counts[d] = take;
                    remaining -= take;
                    break;
                }
                index -= block;
            }
        }
        counts[dims_ - 1] = remaining;
        out.clear();
        for (int d = 0; d < dims_; ++d)
            for (int j = 0; j < counts[d]; ++j) out.push_back(d);
        out.resize(l);
    }

    // Composition sweep: pin each multiset of treatment dimensions and run the
    // alternating assign / closed-form level update to a fixed point, from
    // quantile seeds; return the most profitable result. Pinning sidesteps the
    // dimension flips of the full update, which can skip over basins.
    std::vector<FeasibleTreatment> seed_composition_sweep(int l) const {
        const int64_t comps = composition_count(l);
        if (comps <= 0 || comps > 64) return {};

        constexpr int64_t kMaxSample = 20000;
        const int64_t stride = std::max<int64_t>(1, n_ / kMaxSample);
        std::vector<int64_t> sample;
        for (int64_t i = 0; i < n_; i += stride) sample.push_back(i);
        const int variants = sample.size() < 10000 ? 5 : 2;

        std::vector<FeasibleTreatment> best;
        double best_profit = -std::numeric_limits<double>::infinity();
        std::vector<int> dims_for(l);
        std::vector<int32_t> member(sample.size());
        for (int64_t c = 0; c < comps; ++c) {
            composition_at(l, c, dims_for);
            std::vector<int> group_size(dims_, 0), within(l, 0);
            for (int k = 0; k < l; ++k) within[k] = group_size[dims_for[k]]++;
            for (int v = 0; v < variants; ++v) {
                std::mt19937_64 rng(util::mix64(cfg_.seed, static_cast<uint64_t>(c),
                                                static_cast<uint64_t>(v)));
                std::vector<FeasibleTreatment> ts(l);
                for (int k = 0; k < l; ++k) {
                    const int d = dims_for[k];
                    double level;
                    if (v == 0) {
                        // staggered quantiles of the optima per dimension group
                        level = optima_quantile(d, (within[k] + 0.5) / group_size[d]);
                    } else {
                        // uniform over the level range reaches thin tails
                        std::uniform_real_distribution<double> u(0.0, pop_.upper_bound(d));
                        level = u(rng);
                    }
                    ts[k] = {static_cast<int32_t>(d), level};
                }

                double profit = 0.0;
                for (int iter = 0; iter < 60; ++iter) {
                    profit = 0.0;
                    for (size_t j = 0; j < sample.size(); ++j) {
                        const int64_t i = sample[j];
                        int32_t a = 0;
                        double p = profit_of(pop_, i, ts[0]);
                        for (int k = 1; k < l; ++k) {
                            const double pk = profit_of(pop_, i, ts[k]);
                            if (pk > p) {
                                p = pk;
                                a = k;
                            }
                        }
                        member[j] = a;
                        profit += p;
                    }
                    std::vector<double> sb(l, 0.0), sc(l, 0.0);
                    for (size_t j = 0; j < sample.size(); ++j) {
                        const int64_t i = sample[j];
                        const int d = ts[member[j]].dim;
                        sb[member[j]] += pop_.beta(d)[i];
                        sc[member[j]] += pop_.cost_scale(d)[i];
                    }
                    double max_delta = 0.0;
                    for (int k = 0; k < l; ++k) {
                        double level;
                        if (sc[k] <= 0.0) {
                            // revive an empty cell at the worst-served
                            // member's optimum in the pinned dimension
                            int64_t worst = sample[0];
                            double worst_r = -std::numeric_limits<double>::infinity();
                            for (size_t j = 0; j < sample.size(); ++j) {
                                const int64_t i = sample[j];
                                const double r =
                                    gran_.best_return[i] -
                                    profit_of(pop_, i, ts[member[j]]);
                                if (r > worst_r) {
                                    worst_r = r;
                                    worst = i;
                                }
                            }
                            level = gran_.optima[ts[k].dim][worst];
                        } else {
                            level = std::clamp(sb[k] / sc[k] - 1.0, 0.0,
                                               pop_.upper_bound(ts[k].dim));
                        }
                        max_delta = std::max(max_delta, std::fabs(level - ts[k].value));
                        ts[k].value = level;
                    }
                    if (max_delta < 1e-9) break;
                }
                if (profit > best_profit) {
                    best_profit = profit;
                    best = ts;
                }
            }
        }
        if (best.empty()) return {};
        return normalize_seed(std::move(best), l);
    }

    // Warm seed: the previous L-1 solution plus a split of its largest cell at
    // the optimum of that cell's worst-served member.
    std::vector<FeasibleTreatment> seed_split(const SegmentedPolicy& prev, int l) const {
        std::vector<FeasibleTreatment> set = prev.treatments;
        if (!prev.treatments.empty() &&
            static_cast<int64_t>(prev.assignment.size()) == n_) {
            std::vector<int64_t> counts(prev.treatments.size(), 0);
            for (int32_t a : prev.assignment)
                if (a != kHoldoutCell) counts[a] += 1;
            const int32_t largest = static_cast<int32_t>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
            int64_t worst = -1;
            double worst_regret = -1.0;
            for (int64_t i = 0; i < n_; ++i) {
                if (prev.assignment[i] != largest) continue;
                const double r = gran_.best_return[i] -
                                 profit_of(pop_, i, prev.treatments[largest]);
                if (r > worst_regret) {
                    worst_regret = r;
                    worst = i;
                }
            }
            if (worst >= 0) {
                const int d = gran_.best_dim[worst];
                set.push_back({static_cast<int32_t>(d), gran_.optima[d][worst]});
            }
        }
        return normalize_seed(std::move(set), l);
    }

    // --- one multistart round ----------------------------------------------
    StartOutcome run_start(std::vector<FeasibleTreatment> treatments) const {
        const int l = static_cast<int>(treatments.size());
        StartOutcome out;
        std::vector<int32_t>& idx = scratch_idx_;
        std::vector<double>& profit = scratch_profit_;
        std::vector<int32_t> prev_idx;
        std::vector<CellSums> cells(l, CellSums(dims_));

        out.trace.termination_reason = "iteration-cap";
        for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
            assign_into(treatments, idx, profit);

            // reseed empty cells at the worst-served individual's optimum
            for (int round = 0; round < l; ++round) {
                std::vector<int64_t> counts(l, 0);
                for (int64_t i = 0; i < n_; ++i)
                    if (idx[i] != kHoldoutCell) counts[idx[i]] += 1;
                int32_t empty = -1;
                for (int32_t k = 0; k < l; ++k)
                    if (counts[k] == 0) {
                        empty = k;
                        break;
                    }
                if (empty < 0) break;
                int64_t worst = -1;
                double worst_regret = -1.0;
                for (int64_t i = 0; i < n_; ++i) {
                    const double p = idx[i] == kHoldoutCell ? 0.0 : profit[i];
                    const double r = gran_.best_return[i] - p;
                    if (r > worst_regret) {
                        worst_regret = r;
                        worst = i;
                    }
                }
                if (worst < 0 || worst_regret <= 0.0) break;
                const int d = gran_.best_dim[worst];
                treatments[empty] = {static_cast<int32_t>(d), gran_.optima[d][worst]};
                if (cfg_.round_step > 0.0)
                    treatments[empty].value = snapped_barycenter_level(
                        treatments[empty].value, pop_.upper_bound(d), cfg_.round_step);
                dedupe(treatments);
                assign_into(treatments, idx, profit);
            }

            accumulate_sums(idx, cells);
            const Metrics m = evaluate(idx, profit);

            IterationRecord rec;
            rec.iteration = iter;
            rec.treatments = treatments;
            rec.squared_regret = m.squared_regret;
            rec.total_profit = m.profit;
            rec.cell_counts.resize(l);
            for (int k = 0; k < l; ++k) rec.cell_counts[k] = cells[k].count;
            out.trace.iterations.push_back(std::move(rec));

            if (m.profit > out.profit) {
                out.profit = m.profit;
                out.treatments = treatments;
            }

            std::vector<FeasibleTreatment> next(l);
            for (int k = 0; k < l; ++k) {
                next[k] = cells[k].count == 0
                              ? treatments[k]
                              : best_treatment_for_cell(pop_, cells[k], cfg_.update_rule,
                                                        cfg_.round_step);
            }

            bool small_change = true;
            for (int k = 0; k < l && small_change; ++k) {
                if (next[k].dim != treatments[k].dim ||
                    std::fabs(next[k].value - treatments[k].value) >= cfg_.tolerance)
                    small_change = false;
            }
            const bool stable_cells = iter > 0 && idx == prev_idx;
            if (small_change && stable_cells) {
                out.trace.termination_reason = "converged";
                break;
            }
            prev_idx = idx;
            treatments = std::move(next);
        }
        return out;
    }

    const Population& pop_;
    SolverConfig cfg_;
    int64_t n_;
    int dims_;
    granular::GranularSolution gran_;
    std::vector<kernels::DimArrays> dim_arrays_;
    std::vector<std::vector<double>> sorted_optima_;
    mutable std::vector<int32_t> scratch_idx_;
    mutable std::vector<double> scratch_profit_;
};

SolveResult finalize(const Population& pop, const Solver& solver,
                     const SolverConfig& cfg, Solver::StartOutcome best, int start_index) {
    SolveResult result;
    result.policy.treatments = best.treatments;

    std::vector<int32_t> idx(pop.size());
    std::vector<double> profit(pop.size());
    solver.assign_into(best.treatments, idx, profit);
    result.policy.assignment = std::move(idx);
    result.policy.masses.assign(best.treatments.size(), 0.0);
    for (int32_t a : result.policy.assignment) {
        if (a == kHoldoutCell)
            result.policy.holdout_count += 1;
        else
            result.policy.masses[a] += 1.0;
    }
    for (auto& q : result.policy.masses) q /= static_cast<double>(pop.size());

    result.report = model::policy_profit(pop, result.policy, solver.gran().best_return,
                                         cfg.threads);
    result.trace = std::move(best.trace);
    result.trace.winning_start = start_index;
    result.menu_cost_value = cfg.menu_cost(cfg.num_treatments);
    result.objective = result.report.squared_regret + result.menu_cost_value;
    return result;
}

}  // namespace

AssignResult assign(const Population& pop, std::span<const FeasibleTreatment> treatments,
                    bool allow_holdout, int threads) {
    if (treatments.empty()) throw data_error("assign: empty treatment list");
    for (const auto& t : treatments) pop.check_treatment(t);
    const int64_t n = pop.size();
    const int l = static_cast<int>(treatments.size());

    std::vector<kernels::TreatmentTerm> terms(l);
    for (int k = 0; k < l; ++k)
        terms[k] = {treatments[k].dim, treatments[k].value, std::log1p(treatments[k].value)};
    std::vector<kernels::DimArrays> dims;
    dims.reserve(pop.dims());
    for (int d = 0; d < pop.dims(); ++d) dims.push_back(pop.dim_arrays(d));

    AssignResult out;
    out.assignment.resize(n);
    std::vector<double> profit(n);
    const auto& kt = kernels::table();
    parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
        kt.assign_best(dims.data(), terms.data(), l, begin, end, out.assignment.data(),
                       profit.data());
        if (allow_holdout)
            for (int64_t i = begin; i < end; ++i)
                if (profit[i] < 0.0) out.assignment[i] = kHoldoutCell;
    });
    out.masses.assign(l, 0.0);
    for (int32_t a : out.assignment) {
        if (a == kHoldoutCell)
            out.holdout_count += 1;
        else
            out.masses[a] += 1.0;
    }
    if (n > 0)
        for (auto& q : out.masses) q /= static_cast<double>(n);
    return out;
}

std::vector<double> barycenter_update(const Population& pop,
                                      const granular::GranularSolution& gran,
                                      std::span<const int64_t> cell) {
    if (cell.empty()) throw data_error("barycenter_update: empty cell");
    std::vector<double> mean(pop.dims(), 0.0);
    for (int64_t i : cell)
        for (int d = 0; d < pop.dims(); ++d) mean[d] += gran.optima[d][i];
    for (auto& v : mean) v /= static_cast<double>(cell.size());
    return mean;
}

FeasibleTreatment reduce_dimension(const Population& pop, std::span<const int64_t> cell,
                                   std::span<const double> candidate, UpdateRule rule,
                                   double round_step) {
    if (cell.empty()) throw data_error("reduce_dimension: empty cell");
    if (static_cast<int>(candidate.size()) != pop.dims())
        throw config_error("reduce_dimension: candidate has wrong dimension count");
    CellSums sums(pop.dims());
    sums.count = static_cast<int64_t>(cell.size());
    for (int64_t i : cell)
        for (int d = 0; d < pop.dims(); ++d) {
            sums.sa[d] += pop.alpha(d)[i];
            sums.sb[d] += pop.beta(d)[i];
            sums.sc[d] += pop.cost_scale(d)[i];
        }

    int best_dim = 0;
    double best_level = 0.0;
    double best_profit = -std::numeric_limits<double>::infinity();
    for (int d = 0; d < pop.dims(); ++d) {
        double level = rule == UpdateRule::kExact
                           ? snapped_exact_level(sums, d, pop.upper_bound(d), round_step)
                           : snapped_barycenter_level(candidate[d], pop.upper_bound(d),
                                                      round_step);
        const double p = cell_profit_at(sums, d, level);
        if (p > best_profit) {
            best_profit = p;
            best_dim = d;
            best_level = level;
        }
    }
    return {static_cast<int32_t>(best_dim), best_level};
}

std::vector<SolveResult> solve_chain(const Population& pop, const SolverConfig& config,
                                     int l_max, const SeedProvider& extra_seeds) {
    SolverConfig cfg = config;
    cfg.num_treatments = l_max;
    cfg.validate(pop.size());
    if (pop.size() == 0) throw config_error("solve: population is empty");

    const Population* active = &pop;
    Population zeroed;
    if (cfg.zero_intercept) {
        zeroed = pop;
        zeroed.zero_intercepts();
        active = &zeroed;
    }

    Solver solver(*active, cfg);
    std::vector<SolveResult> chain;
    chain.reserve(l_max);
    for (int l = 1; l <= l_max; ++l) {
        SolverConfig level_cfg = cfg;
        level_cfg.num_treatments = l;

        // Recipe starts: spread, warm split of the previous solution, k-means
        // benchmark seed, then stratified random fills. The warm seed always
        // participates so the chain's profit cannot fall as L grows; the
        // composition sweep always participates so the solver dominates the
        // pinned-dimension alternation.
        std::vector<SeedSet> seeds;
        seeds.push_back(solver.seed_spread(l));
        if (l > 1)
            seeds.push_back(solver.seed_split(chain.back().policy, l));
        else if (cfg.num_starts >= 2)
            seeds.push_back(solver.seed_random(l, 1));
        if (cfg.num_starts >= 3) seeds.push_back(solver.seed_kmeans(l));
        for (uint64_t j = seeds.size(); j < static_cast<uint64_t>(cfg.num_starts); ++j)
            seeds.push_back(solver.seed_random(l, j));
        if (auto sweep = solver.seed_composition_sweep(l); !sweep.empty())
            seeds.push_back(std::move(sweep));
        if (extra_seeds)
            for (auto& s : extra_seeds(l))
                seeds.push_back(solver.normalize_seed(std::move(s), l));

        Solver::StartOutcome best;
        int best_start = 0;
        for (size_t s = 0; s < seeds.size(); ++s) {
            Solver::StartOutcome outcome = solver.run_start(seeds[s]);
            if (outcome.profit > best.profit) {
                best = std::move(outcome);
                best_start = static_cast<int>(s);
            }
        }
        chain.push_back(finalize(*active, solver, level_cfg, std::move(best), best_start));
    }
    return chain;
}

SolveResult solve(const Population& pop, const SolverConfig& config,
                  std::span<const SeedSet> extra_seeds) {
    const int l_max = config.num_treatments;
    SeedProvider provider;
    if (!extra_seeds.empty()) {
        std::vector<SeedSet> captured(extra_seeds.begin(), extra_seeds.end());
        provider = [captured, l_max](int l) {
            return l == l_max ? captured : std::vector<SeedSet>{};
        };
    }
    auto chain = solve_chain(pop, config, l_max, provider);
    return std::move(chain.back());
}

MenuResult solve_menu(const Population& pop, const SolverConfig& config, int l_max) {
    if (l_max < 1) throw config_error("solve_menu: l_max must be >= 1");
    auto chain = solve_chain(pop, config, l_max);
    MenuResult out;
    out.net_profit_by_l.resize(l_max);
    int best = 0;
    for (int l = 1; l <= l_max; ++l) {
        out.net_profit_by_l[l - 1] = chain[l - 1].report.total_profit - config.menu_cost(l);
        // ties go to the larger menu: profit is non-decreasing in L, so a free
        // menu always selects l_max
        if (out.net_profit_by_l[l - 1] >= out.net_profit_by_l[best]) best = l - 1;
    }
    out.best_l = best + 1;
    out.result = std::move(chain[best]);
    return out;
}

ExPostResult round_policy_expost(const Population& pop, const SegmentedPolicy& policy,
                                 double step, bool allow_holdout, int threads) {
    if (!(step > 0.0)) throw config_error("ex-post rounding step must be > 0");
    model::check_policy(pop, policy);

    std::vector<FeasibleTreatment> merged;
    for (const auto& t : policy.treatments) {
        FeasibleTreatment r{t.dim, std::clamp(util::round_to_step(t.value, step), 0.0,
                                              grid_max(pop.upper_bound(t.dim), step))};
        if (std::find(merged.begin(), merged.end(), r) == merged.end())
            merged.push_back(r);
    }

    ExPostResult out;
    AssignResult a = assign(pop, merged, allow_holdout, threads);
    out.policy.treatments = std::move(merged);
    out.policy.assignment = std::move(a.assignment);
    out.policy.masses = std::move(a.masses);
    out.policy.holdout_count = a.holdout_count;
    out.effective_treatments = static_cast<int>(out.policy.treatments.size());
    out.report = granular::policy_profit(pop, out.policy, threads);
    return out;
}

std::vector<FocEntry> foc_residual(const Population& pop, const SegmentedPolicy& policy) {
    model::check_policy(pop, policy);
    const int l = static_cast<int>(policy.treatments.size());
    std::vector<double> sum_beta(l, 0.0), sum_cost(l, 0.0);
    std::vector<int64_t> counts(l, 0);
    for (int64_t i = 0; i < pop.size(); ++i) {
        const int32_t a = policy.assignment[i];
        if (a == kHoldoutCell) continue;
        const int d = policy.treatments[a].dim;
        sum_beta[a] += pop.beta(d)[i];
        sum_cost[a] += pop.cost_scale(d)[i];
        counts[a] += 1;
    }
    std::vector<FocEntry> out(l);
    for (int k = 0; k < l; ++k) {
        out[k].segment = k;
        out[k].members = counts[k];
        const double t = policy.treatments[k].value;
        const bool interior =
            counts[k] > 0 && t > 0.0 && t < pop.upper_bound(policy.treatments[k].dim);
        out[k].boundary = !interior;
        if (interior)
            out[k].residual = std::fabs(sum_beta[k] / (1.0 + t) - sum_cost[k]) / sum_cost[k];
    }
    return out;
}

}  // namespace coarse::lloyd


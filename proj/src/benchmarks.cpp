#include "coarse/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "coarse/parallel.hpp"

namespace coarse::benchmarks {

namespace {

double sq_dist(const double* a, const double* b, int f) {
    double s = 0.0;
    for (int j = 0; j < f; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

int64_t count_distinct_rows(std::span<const double> points, int64_t n, int f) {
    std::unordered_set<uint64_t> seen;
    seen.reserve(n);
    for (int64_t i = 0; i < n; ++i) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (int j = 0; j < f; ++j) {
            uint64_t bits;
            std::memcpy(&bits, &points[i * f + j], sizeof(bits));
            h = util::mix64(h, bits);
        }
        seen.insert(h);
    }
    return static_cast<int64_t>(seen.size());
}

struct LloydState {
    std::vector<int32_t> assignment;
    std::vector<std::vector<double>> centers;
    double wcss = 0.0;
};

LloydState run_lloyd(std::span<const double> points, int64_t n, int f, int k,
                     std::vector<std::vector<double>> centers, int threads) {
    LloydState st;
    st.centers = std::move(centers);
    st.assignment.assign(n, 0);
    std::vector<double> dist(n, 0.0);

    constexpr int kMaxIter = 200;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        bool changed = false;
        std::vector<uint8_t> block_changed(static_cast<size_t>(block_count(n)), 0);
        parallel_blocks(n, threads, [&](int64_t b, int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) {
                int32_t best = 0;
                double best_d = sq_dist(&points[i * f], st.centers[0].data(), f);
                for (int c = 1; c < k; ++c) {
                    const double d = sq_dist(&points[i * f], st.centers[c].data(), f);
                    if (d < best_d) {
                        best_d = d;
                        best = c;
                    }
                }
                if (st.assignment[i] != best) {
                    st.assignment[i] = best;
                    block_changed[static_cast<size_t>(b)] = 1;
                }
                dist[i] = best_d;
            }
        });
        for (uint8_t c : block_changed) changed |= (c != 0);

        // centers: per-block partial sums combined in block order
        const int64_t blocks = block_count(n);
        std::vector<std::vector<double>> sums(static_cast<size_t>(blocks),
                                              std::vector<double>(k * f, 0.0));
        std::vector<std::vector<int64_t>> cnts(static_cast<size_t>(blocks),
                                               std::vector<int64_t>(k, 0));
        parallel_blocks(n, threads, [&](int64_t b, int64_t begin, int64_t end) {
            auto& s = sums[static_cast<size_t>(b)];
            auto& c = cnts[static_cast<size_t>(b)];
            for (int64_t i = begin; i < end; ++i) {
                const int32_t a = st.assignment[i];
                c[a] += 1;
                for (int j = 0; j < f; ++j) s[a * f + j] += points[i * f + j];
            }
        });
        std::vector<double> total(k * f, 0.0);
        std::vector<int64_t> count(k, 0);
        for (int64_t b = 0; b < blocks; ++b) {
            for (int c = 0; c < k; ++c) count[c] += cnts[static_cast<size_t>(b)][c];
            for (int j = 0; j < k * f; ++j) total[j] += sums[static_cast<size_t>(b)][j];
        }

        bool reseeded = false;
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) {
                for (int j = 0; j < f; ++j)
                    st.centers[c][j] = total[c * f + j] / static_cast<double>(count[c]);
            } else {
                // farthest point from its current center
                int64_t far = 0;
                for (int64_t i = 1; i < n; ++i)
                    if (dist[i] > dist[far]) far = i;
                for (int j = 0; j < f; ++j) st.centers[c][j] = points[far * f + j];
                dist[far] = -1.0;
                reseeded = true;
            }
        }
        if (!changed && !reseeded && iter > 0) break;
    }

    st.wcss = 0.0;
    for (int64_t i = 0; i < n; ++i)
        st.wcss += sq_dist(&points[i * f], st.centers[st.assignment[i]].data(), f);
    return st;
}

}  // namespace

std::vector<std::vector<double>> kmeans_plusplus_init(std::span<const double> points,
                                                      int64_t n, int f, int k,
                                                      std::mt19937_64& rng) {
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    std::uniform_int_distribution<int64_t> first(0, n - 1);
    const int64_t c0 = first(rng);
    centers.emplace_back(points.begin() + c0 * f, points.begin() + (c0 + 1) * f);

    std::vector<double> d2(n);
    for (int64_t i = 0; i < n; ++i) d2[i] = sq_dist(&points[i * f], centers[0].data(), f);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int64_t i = 0; i < n; ++i) total += d2[i];
        int64_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            pick = n - 1;
            for (int64_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);  // all mass on existing centers
        }
        centers.emplace_back(points.begin() + pick * f, points.begin() + (pick + 1) * f);
        for (int64_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sq_dist(&points[i * f], centers.back().data(), f));
    }
    return centers;
}

KMeansResult kmeans(std::span<const double> points, int64_t n, int f, int k, int starts,
                    uint64_t seed, int threads) {
    if (k < 1) throw config_error("kmeans: k must be >= 1");
    if (n < 1) throw config_error("kmeans: no points");
    if (f < 1) throw config_error("kmeans: feature dimension must be >= 1");
    if (starts < 1) throw config_error("kmeans: starts must be >= 1");
    if (k > count_distinct_rows(points, n, f))
        throw config_error("kmeans: k exceeds the number of distinct points");

    KMeansResult best;
    best.wcss = std::numeric_limits<double>::infinity();
    for (int s = 0; s < starts; ++s) {
        std::mt19937_64 rng(util::mix64(seed, static_cast<uint64_t>(s)));
        LloydState st =
            run_lloyd(points, n, f, k, kmeans_plusplus_init(points, n, f, k, rng), threads);
        if (st.wcss < best.wcss) {
            best.wcss = st.wcss;
            best.assignment = std::move(st.assignment);
            best.centers = std::move(st.centers);
        }
    }
    return best;
}

const char* feature_name(SegmentFeature f) {
    switch (f) {
        case SegmentFeature::kCovariates: return "covariates";
        case SegmentFeature::kPreferences: return "preferences";
        case SegmentFeature::kOptimalLevels: return "optimal-levels";
    }
    return "unknown";
}

namespace {

// z-scored feature matrix for the clustering step; constant columns go to 0
std::vector<double> feature_matrix(const Population& pop,
                                   const granular::GranularSolution* gran,
                                   SegmentFeature feature, int& f_out) {
    const int64_t n = pop.size();
    std::vector<double> pts;
    int f = 0;
    switch (feature) {
        case SegmentFeature::kCovariates: {
            f = pop.covariate_count();
            if (f == 0)
                throw config_error("covariate segmentation requested but the population "
                                   "has no covariates");
            pts = pop.covariates();
            break;
        }
        case SegmentFeature::kPreferences: {
            f = pop.dims();
            pts.resize(n * f);
            for (int64_t i = 0; i < n; ++i)
                for (int d = 0; d < f; ++d) pts[i * f + d] = pop.beta(d)[i];
            break;
        }
        case SegmentFeature::kOptimalLevels: {
            f = pop.dims();
            pts.resize(n * f);
            for (int64_t i = 0; i < n; ++i)
                for (int d = 0; d < f; ++d) pts[i * f + d] = gran->optima[d][i];
            break;
        }
    }
    for (int j = 0; j < f; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += pts[i * f + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double d = pts[i * f + j] - mean;
            var += d * d;
        }
        const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
        const double inv = sd > 0.0 ? 1.0 / sd : 0.0;
        for (int64_t i = 0; i < n; ++i) pts[i * f + j] = (pts[i * f + j] - mean) * inv;
    }
    f_out = f;
    return pts;
}

}  // namespace

BenchmarkPolicy segment_then_personalize(const Population& pop, int k,
                                         SegmentFeature feature, int starts, uint64_t seed,
                                         int threads) {
    if (pop.size() == 0) throw config_error("segmentation needs a non-empty population");
    const int64_t n = pop.size();
    const int dims = pop.dims();
    const granular::GranularSolution gran = granular::solve(pop, threads);

    int f = 0;
    const std::vector<double> pts = feature_matrix(
        pop, feature == SegmentFeature::kOptimalLevels ? &gran : nullptr, feature, f);
    KMeansResult km = kmeans(pts, n, f, k, starts, seed, threads);

    // cluster treatment: closed-form level per dimension, then the dimension
    // with the highest cluster profit
    std::vector<std::vector<double>> sa(k, std::vector<double>(dims, 0.0));
    std::vector<std::vector<double>> sb(k, std::vector<double>(dims, 0.0));
    std::vector<std::vector<double>> sc(k, std::vector<double>(dims, 0.0));
    for (int64_t i = 0; i < n; ++i) {
        const int32_t c = km.assignment[i];
        for (int d = 0; d < dims; ++d) {
            sa[c][d] += pop.alpha(d)[i];
            sb[c][d] += pop.beta(d)[i];
            sc[c][d] += pop.cost_scale(d)[i];
        }
    }

    BenchmarkPolicy out;
    out.policy.treatments.resize(k);
    for (int c = 0; c < k; ++c) {
        int best_dim = 0;
        double best_level = 0.0;
        double best_profit = -std::numeric_limits<double>::infinity();
        for (int d = 0; d < dims; ++d) {
            const double level =
                sc[c][d] > 0.0
                    ? std::clamp(sb[c][d] / sc[c][d] - 1.0, 0.0, pop.upper_bound(d))
                    : 0.0;
            const double p = sa[c][d] + std::log1p(level) * sb[c][d] - level * sc[c][d];
            if (p > best_profit) {
                best_profit = p;
                best_dim = d;
                best_level = level;
            }
        }
        out.policy.treatments[c] = {static_cast<int32_t>(best_dim), best_level};
    }
    out.policy.assignment = std::move(km.assignment);
    out.policy.masses.assign(k, 0.0);
    for (int32_t a : out.policy.assignment) out.policy.masses[a] += 1.0;
    for (auto& q : out.policy.masses) q /= static_cast<double>(n);
    out.report = model::policy_profit(pop, out.policy, gran.best_return, threads);
    return out;
}

BenchmarkPolicy ab_test_policy(const Population& pop,
                               std::span<const FeasibleTreatment> arms, int l,
                               int threads) {
    const int a = static_cast<int>(arms.size());
    if (a == 0) throw config_error("ab_test_policy: no arms");
    if (l < 1 || l > a)
        throw config_error("ab_test_policy: subset size must be in [1, arms]");
    for (const auto& t : arms) pop.check_treatment(t);
    const int64_t n = pop.size();

    // per-arm profit columns
    std::vector<std::vector<double>> cols(a, std::vector<double>(n));
    const auto& kt = kernels::table();
    for (int c = 0; c < a; ++c) {
        const auto arr = pop.dim_arrays(arms[c].dim);
        const double lp = std::log1p(arms[c].value);
        parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
            kt.profit_column(arr.alpha, arr.beta, arr.cost, arms[c].value, lp, begin, end,
                             cols[c].data());
        });
    }

    // lexicographic subset enumeration; ties keep the earlier subset
    std::vector<int> combo(l);
    for (int j = 0; j < l; ++j) combo[j] = j;
    std::vector<int> best_combo = combo;
    double best_profit = -std::numeric_limits<double>::infinity();
    std::vector<const double*> ptrs(l);
    for (;;) {
        for (int j = 0; j < l; ++j) ptrs[j] = cols[combo[j]].data();
        const double p =
            parallel_sum(n, threads, [&](int64_t begin, int64_t end) {
                return kt.max_columns_sum(ptrs.data(), l, begin, end);
            });
        if (p > best_profit) {
            best_profit = p;
            best_combo = combo;
        }
        int j = l - 1;
        while (j >= 0 && combo[j] == a - l + j) --j;
        if (j < 0) break;
        ++combo[j];
        for (int m = j + 1; m < l; ++m) combo[m] = combo[m - 1] + 1;
    }

    std::vector<FeasibleTreatment> subset(l);
    for (int j = 0; j < l; ++j) subset[j] = arms[best_combo[j]];
    BenchmarkPolicy out;
    out.policy.treatments = subset;
    {
        auto idx = std::vector<int32_t>(n);
        std::vector<double> prof(n);
        std::vector<kernels::TreatmentTerm> terms(l);
        for (int j = 0; j < l; ++j)
            terms[j] = {subset[j].dim, subset[j].value, std::log1p(subset[j].value)};
        std::vector<kernels::DimArrays> dims;
        for (int d = 0; d < pop.dims(); ++d) dims.push_back(pop.dim_arrays(d));
        parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
            kt.assign_best(dims.data(), terms.data(), l, begin, end, idx.data(),
                           prof.data());
        });
        out.policy.assignment = std::move(idx);
    }
    out.policy.masses.assign(l, 0.0);
    for (int32_t c : out.policy.assignment) out.policy.masses[c] += 1.0;
    for (auto& q : out.policy.masses) q /= static_cast<double>(n);
    out.report = granular::policy_profit(pop, out.policy, threads);
    return out;
}

BlanketResult blanket(const Population& pop, std::optional<int> dim,
                      std::optional<double> value, int threads) {
    if (pop.size() == 0) throw config_error("blanket needs a non-empty population");
    if (value.has_value() && !dim.has_value())
        throw config_error("blanket: a fixed value needs a dimension");
    const int64_t n = pop.size();
    const int dims = pop.dims();

    std::vector<double> sa(dims, 0.0), sb(dims, 0.0), sc(dims, 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int d = 0; d < dims; ++d) {
            sa[d] += pop.alpha(d)[i];
            sb[d] += pop.beta(d)[i];
            sc[d] += pop.cost_scale(d)[i];
        }

    FeasibleTreatment chosen;
    if (value.has_value()) {
        chosen = {static_cast<int32_t>(*dim), *value};
        pop.check_treatment(chosen);
    } else {
        const int d_lo = dim.has_value() ? *dim : 0;
        const int d_hi = dim.has_value() ? *dim + 1 : dims;
        if (d_lo < 0 || d_hi > dims) throw config_error("blanket: dimension out of range");
        double best_profit = -std::numeric_limits<double>::infinity();
        for (int d = d_lo; d < d_hi; ++d) {
            const double level = std::clamp(sb[d] / sc[d] - 1.0, 0.0, pop.upper_bound(d));
            const double p = sa[d] + std::log1p(level) * sb[d] - level * sc[d];
            if (p > best_profit) {
                best_profit = p;
                chosen = {static_cast<int32_t>(d), level};
            }
        }
    }

    BlanketResult out;
    out.treatment = chosen;
    out.policy.treatments = {chosen};
    out.policy.assignment.assign(n, 0);
    out.policy.masses = {1.0};
    out.report = granular::policy_profit(pop, out.policy, threads);
    return out;
}

}  // namespace coarse::benchmarks

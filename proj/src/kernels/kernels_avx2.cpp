// AVX2+FMA kernel variants. Functions carry target attributes so the rest of
// the translation unit (and the build) stays baseline x86-64; the dispatcher
// only installs this table when the CPU reports AVX2 and FMA.
#include "coarse/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#define COARSE_AVX2 __attribute__((target("avx2,fma")))

namespace coarse::kernels {
namespace avx2 {

namespace {

// Scalar tail shared by the vector loops.
inline double profit_one(const DimArrays& d, const TreatmentTerm& t, int64_t i) {
    return d.alpha[i] + d.beta[i] * t.log1p_value - d.cost[i] * t.value;
}

}  // namespace

COARSE_AVX2
void assign_best(const DimArrays* dims, const TreatmentTerm* terms, int n_terms,
                 int64_t begin, int64_t end, int32_t* out_index, double* out_profit) {
    int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
        const DimArrays& d0 = dims[terms[0].dim];
        __m256d best_p = _mm256_fmadd_pd(_mm256_loadu_pd(d0.beta + i),
                                         _mm256_set1_pd(terms[0].log1p_value),
                                         _mm256_loadu_pd(d0.alpha + i));
        best_p = _mm256_fnmadd_pd(_mm256_loadu_pd(d0.cost + i),
                                  _mm256_set1_pd(terms[0].value), best_p);
        __m256d best_l = _mm256_setzero_pd();
        for (int l = 1; l < n_terms; ++l) {
            const DimArrays& d = dims[terms[l].dim];
            __m256d p = _mm256_fmadd_pd(_mm256_loadu_pd(d.beta + i),
                                        _mm256_set1_pd(terms[l].log1p_value),
                                        _mm256_loadu_pd(d.alpha + i));
            p = _mm256_fnmadd_pd(_mm256_loadu_pd(d.cost + i),
                                 _mm256_set1_pd(terms[l].value), p);
            // strictly-greater keeps the lowest index on exact ties
            const __m256d gt = _mm256_cmp_pd(p, best_p, _CMP_GT_OQ);
            best_p = _mm256_blendv_pd(best_p, p, gt);
            best_l = _mm256_blendv_pd(best_l, _mm256_set1_pd(double(l)), gt);
        }
        _mm256_storeu_pd(out_profit + i, best_p);
        const __m128i idx = _mm256_cvtpd_epi32(best_l);
        _mm_storeu_si128(reinterpret_cast<__m128i*>(out_index + i), idx);
    }
    for (; i < end; ++i) {
        int32_t best = 0;
        double best_p = profit_one(dims[terms[0].dim], terms[0], i);
        for (int l = 1; l < n_terms; ++l) {
            const double p = profit_one(dims[terms[l].dim], terms[l], i);
            if (p > best_p) {
                best_p = p;
                best = l;
            }
        }
        out_index[i] = best;
        out_profit[i] = best_p;
    }
}

COARSE_AVX2
void profit_column(const double* alpha, const double* beta, const double* cost,
                   double value, double log1p_value, int64_t begin, int64_t end,
                   double* out) {
    const __m256d vv = _mm256_set1_pd(value);
    const __m256d vc = _mm256_set1_pd(log1p_value);
    int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
        __m256d p = _mm256_fmadd_pd(_mm256_loadu_pd(beta + i), vc,
                                    _mm256_loadu_pd(alpha + i));
        p = _mm256_fnmadd_pd(_mm256_loadu_pd(cost + i), vv, p);
        _mm256_storeu_pd(out + i, p);
    }
    for (; i < end; ++i) out[i] = alpha[i] + beta[i] * log1p_value - cost[i] * value;
}

COARSE_AVX2
void granular_levels(const double* beta, const double* cost, double upper, int64_t begin,
                     int64_t end, double* out) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d hi = _mm256_set1_pd(upper);
    int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
        __m256d t = _mm256_div_pd(_mm256_loadu_pd(beta + i), _mm256_loadu_pd(cost + i));
        t = _mm256_sub_pd(t, one);
        t = _mm256_min_pd(_mm256_max_pd(t, zero), hi);
        _mm256_storeu_pd(out + i, t);
    }
    for (; i < end; ++i) out[i] = std::clamp(beta[i] / cost[i] - 1.0, 0.0, upper);
}

COARSE_AVX2
double sum_profit_at(const double* alpha, const double* beta, const double* cost,
                     double value, double log1p_value, int64_t begin, int64_t end) {
    const __m256d vv = _mm256_set1_pd(value);
    const __m256d vc = _mm256_set1_pd(log1p_value);
    __m256d acc = _mm256_setzero_pd();
    int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
        __m256d p = _mm256_fmadd_pd(_mm256_loadu_pd(beta + i), vc,
                                    _mm256_loadu_pd(alpha + i));
        p = _mm256_fnmadd_pd(_mm256_loadu_pd(cost + i), vv, p);
        acc = _mm256_add_pd(acc, p);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < end; ++i) total += alpha[i] + beta[i] * log1p_value - cost[i] * value;
    return total;
}

COARSE_AVX2
double max_columns_sum(const double* const* cols, int n_cols, int64_t begin, int64_t end) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
        __m256d m = _mm256_loadu_pd(cols[0] + i);
        for (int c = 1; c < n_cols; ++c)
            m = _mm256_max_pd(m, _mm256_loadu_pd(cols[c] + i));
        acc = _mm256_add_pd(acc, m);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < end; ++i) {
        double m = cols[0][i];
        for (int c = 1; c < n_cols; ++c) m = std::max(m, cols[c][i]);
        total += m;
    }
    return total;
}

}  // namespace avx2

const KernelTable* avx2_table() {
    static const KernelTable t{
        avx2::assign_best, avx2::profit_column, avx2::granular_levels,
        avx2::sum_profit_at, avx2::max_columns_sum,
    };
    return &t;
}

}  // namespace coarse::kernels

#else

namespace coarse::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace coarse::kernels

#endif

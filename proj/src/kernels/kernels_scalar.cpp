#include <algorithm>
#include <cmath>

#include "coarse/kernels.hpp"

namespace coarse::kernels {

namespace scalar {

void assign_best(const DimArrays* dims, const TreatmentTerm* terms, int n_terms,
                 int64_t begin, int64_t end, int32_t* out_index, double* out_profit) {
    for (int64_t i = begin; i < end; ++i) {
        int32_t best = 0;
        const DimArrays& d0 = dims[terms[0].dim];
        double best_p = d0.alpha[i] + d0.beta[i] * terms[0].log1p_value -
                        d0.cost[i] * terms[0].value;
        for (int l = 1; l < n_terms; ++l) {
            const DimArrays& d = dims[terms[l].dim];
            const double p =
                d.alpha[i] + d.beta[i] * terms[l].log1p_value - d.cost[i] * terms[l].value;
            if (p > best_p) {
                best_p = p;
                best = l;
            }
        }
        out_index[i] = best;
        out_profit[i] = best_p;
    }
}

void profit_column(const double* alpha, const double* beta, const double* cost,
                   double value, double log1p_value, int64_t begin, int64_t end,
                   double* out) {
    for (int64_t i = begin; i < end; ++i)
        out[i] = alpha[i] + beta[i] * log1p_value - cost[i] * value;
}

void granular_levels(const double* beta, const double* cost, double upper, int64_t begin,
                     int64_t end, double* out) {
    for (int64_t i = begin; i < end; ++i)
        out[i] = std::clamp(beta[i] / cost[i] - 1.0, 0.0, upper);
}

double sum_profit_at(const double* alpha, const double* beta, const double* cost,
                     double value, double log1p_value, int64_t begin, int64_t end) {
    double acc = 0.0;
    for (int64_t i = begin; i < end; ++i)
        acc += alpha[i] + beta[i] * log1p_value - cost[i] * value;
    return acc;
}

double max_columns_sum(const double* const* cols, int n_cols, int64_t begin, int64_t end) {
    double acc = 0.0;
    for (int64_t i = begin; i < end; ++i) {
        double m = cols[0][i];
        for (int c = 1; c < n_cols; ++c) m = std::max(m, cols[c][i]);
        acc += m;
    }
    return acc;
}

}  // namespace scalar

const KernelTable& scalar_table() {
    static const KernelTable t{
        scalar::assign_best, scalar::profit_column, scalar::granular_levels,
        scalar::sum_profit_at, scalar::max_columns_sum,
    };
    return t;
}

}  // namespace coarse::kernels

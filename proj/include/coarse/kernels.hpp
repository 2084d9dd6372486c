#pragma once

#include <cstdint>

namespace coarse::kernels {

// Per-dimension column pointers into a population (structure-of-arrays).
struct DimArrays {
    const double* alpha;
    const double* beta;
    const double* cost;
};

// One offered treatment with its precomputed log term.
// profit(i) = alpha[i] + beta[i] * log1p_value - cost[i] * value, using the
// columns of dimension `dim`.
struct TreatmentTerm {
    int32_t dim;
    double value;
    double log1p_value;
};

// Inner-loop kernel set. The scalar variants are the reference; SIMD variants
// must match them to tight tolerance (see tests) and use strictly-greater
// comparisons so argmax ties resolve to the lowest treatment index.
struct KernelTable {
    // Best-profit treatment per individual over [begin, end).
    void (*assign_best)(const DimArrays* dims, const TreatmentTerm* terms, int n_terms,
                        int64_t begin, int64_t end, int32_t* out_index, double* out_profit);
    // Profit of a single treatment per individual.
    void (*profit_column)(const double* alpha, const double* beta, const double* cost,
                          double value, double log1p_value, int64_t begin, int64_t end,
                          double* out);
    // clamp(beta/cost - 1, 0, upper) per individual.
    void (*granular_levels)(const double* beta, const double* cost, double upper,
                            int64_t begin, int64_t end, double* out);
    // Sum of profits of a single treatment over [begin, end).
    double (*sum_profit_at)(const double* alpha, const double* beta, const double* cost,
                            double value, double log1p_value, int64_t begin, int64_t end);
    // Sum over i of max over columns of cols[c][i].
    double (*max_columns_sum)(const double* const* cols, int n_cols, int64_t begin,
                              int64_t end);
};

enum class Backend { kScalar, kAvx2 };

const char* backend_name(Backend b);
bool backend_available(Backend b);

// Active kernel table. Defaults to the best available backend, chosen once at
// first use from CPU features.
const KernelTable& table();
Backend active_backend();
void set_backend(Backend b);  // throws config_error if unavailable

const KernelTable& scalar_table();

}  // namespace coarse::kernels

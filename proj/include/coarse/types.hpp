#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coarse/kernels.hpp"
#include "coarse/util.hpp"

namespace coarse {

// Treatment domain: D dimensions, each with a strictly positive upper bound.
struct TreatmentSpace {
    std::vector<double> upper_bounds;
    std::vector<std::string> unit_labels;  // optional, defaults to "unit"

    int dims() const { return static_cast<int>(upper_bounds.size()); }
    void validate() const;
};

// A treatment vector that is non-zero in at most one dimension: value t in
// dimension `dim`, zero elsewhere.
struct FeasibleTreatment {
    int32_t dim = 0;
    double value = 0.0;

    friend bool operator==(const FeasibleTreatment& a, const FeasibleTreatment& b) {
        return a.dim == b.dim && a.value == b.value;
    }
};

struct Individual {
    std::string id;
    std::vector<double> alpha;       // per-dimension response intercept
    std::vector<double> beta;        // per-dimension response sensitivity, >= 0
    std::vector<double> cost_scale;  // per-dimension marginal cost, > 0
    std::vector<double> covariates;  // optional, for benchmark segmentation
};

// Column-oriented population. Response and cost columns are stored per
// dimension so the inner loops stream contiguous arrays.
class Population {
  public:
    Population() = default;
    explicit Population(TreatmentSpace space);

    void reserve(int64_t n);
    void add(const Individual& ind);  // throws data_error on invariant violation

    int64_t size() const { return static_cast<int64_t>(ids_.size()); }
    int dims() const { return space_.dims(); }
    const TreatmentSpace& space() const { return space_; }
    double upper_bound(int dim) const { return space_.upper_bounds[dim]; }

    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<double>& alpha(int dim) const { return alpha_[dim]; }
    const std::vector<double>& beta(int dim) const { return beta_[dim]; }
    const std::vector<double>& cost_scale(int dim) const { return cost_[dim]; }

    int covariate_count() const { return covariate_count_; }
    // Row-major n x covariate_count.
    const std::vector<double>& covariates() const { return covariates_; }
    std::span<const double> covariate_row(int64_t i) const {
        return {covariates_.data() + i * covariate_count_,
                static_cast<size_t>(covariate_count_)};
    }

    Individual individual(int64_t i) const;

    kernels::DimArrays dim_arrays(int dim) const {
        return {alpha_[dim].data(), beta_[dim].data(), cost_[dim].data()};
    }

    // New population with rows taken (with repetition) from `indices`.
    Population gather(std::span<const int64_t> indices) const;

    // Force alpha = 0 in every dimension (pure-incremental profit semantics).
    void zero_intercepts();

    void check_dim(int dim) const;
    void check_treatment(const FeasibleTreatment& t) const;

  private:
    TreatmentSpace space_;
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> alpha_, beta_, cost_;  // [dim][i]
    std::vector<double> covariates_;                        // row-major
    int covariate_count_ = -1;                              // -1 until first add
};

inline constexpr int32_t kHoldoutCell = -1;

// L offered treatments, a pure assignment of every individual to one of them
// (or to the distinguished no-treatment cell), and segment masses.
struct SegmentedPolicy {
    std::vector<FeasibleTreatment> treatments;
    std::vector<int32_t> assignment;  // per individual; kHoldoutCell = untreated
    std::vector<double> masses;       // per treatment, counts / N
    int64_t holdout_count = 0;
};

struct SegmentProfit {
    FeasibleTreatment treatment;
    int64_t members = 0;
    double profit = 0.0;
};

struct ProfitReport {
    double total_profit = 0.0;
    double total_regret = 0.0;    // sum of (best granular return - assigned profit)
    double squared_regret = 0.0;  // transport objective: sum of squared regrets
    std::vector<SegmentProfit> per_segment;
};

}  // namespace coarse

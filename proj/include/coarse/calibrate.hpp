#pragma once

#include <span>
#include <string>
#include <vector>

#include "coarse/types.hpp"

namespace coarse::calibrate {

// Per-arm response estimates. Arm levels are shared across individuals within
// a dimension; values[d] is a row-major n x levels[d].size() matrix.
struct ArmEstimates {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> levels;  // [dim][arm], strictly positive
    std::vector<std::vector<double>> values;  // [dim], n x k_d

    int dims() const { return static_cast<int>(levels.size()); }
    int64_t size() const { return static_cast<int64_t>(ids.size()); }
    void validate() const;  // >= 2 distinct levels per dim, shapes consistent
};

struct CurveFit {
    double alpha = 0.0;
    double beta = 0.0;
    double r_squared = 0.0;
};

// Least squares of the estimates on ln(1+level), with intercept. beta may come
// out non-positive; responsiveness filtering happens downstream.
CurveFit fit_response_curve(std::span<const double> levels, std::span<const double> cates);

struct FitResult {
    Population population;
    std::vector<std::vector<double>> r_squared;  // [dim][i]
    std::vector<double> mean_r_squared;          // unweighted mean per dim
};

// Fit every (individual, dimension) pair. cost_scales is [dim][i], strictly
// positive (impute missing values before calling). Fitted betas below zero are
// clamped to 0 so Population invariants hold; the raw fit is visible through
// fit_response_curve.
FitResult fit_population(const ArmEstimates& arms, TreatmentSpace space,
                         const std::vector<std::vector<double>>& cost_scales,
                         int threads = 1);

struct FilterResult {
    Population kept;
    std::vector<std::string> dropped_ids;
};

// Drop individuals unresponsive in every dimension (beta <= floor everywhere);
// clamp unresponsive dimensions of kept individuals to beta = 0.
FilterResult filter_population(const Population& pop, double beta_floor = 1e-6);

struct ValidationResult {
    std::vector<double> predicted;  // held-out prediction per individual
    std::vector<double> actual;     // held-out estimate per individual
    double correlation = 0.0;       // Pearson, across individuals
};

// Hold out each individual's designated arm, refit on the remaining arms of
// the dimension, and predict the held-out level.
ValidationResult honest_validate(const ArmEstimates& arms, int dim,
                                 std::span<const int32_t> holdout_arm, int threads = 1);

}  // namespace coarse::calibrate

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "coarse/types.hpp"

namespace testutil {

using coarse::FeasibleTreatment;
using coarse::Individual;
using coarse::Population;
using coarse::TreatmentSpace;

inline Individual make_individual(std::string id, std::vector<double> alpha,
                                  std::vector<double> beta, std::vector<double> cost) {
    Individual ind;
    ind.id = std::move(id);
    ind.alpha = std::move(alpha);
    ind.beta = std::move(beta);
    ind.cost_scale = std::move(cost);
    return ind;
}

// One-dimensional population from (alpha, beta, cost_scale) triples.
inline Population population_1d(const std::vector<std::array<double, 3>>& rows,
                                double upper = 5.0) {
    Population pop(TreatmentSpace{{upper}, {}});
    int i = 0;
    for (const auto& r : rows)
        pop.add(make_individual("i" + std::to_string(++i), {r[0]}, {r[1]}, {r[2]}));
    return pop;
}

// Two-dimensional population from (alpha1,beta1,s1, alpha2,beta2,s2) rows.
inline Population population_2d(const std::vector<std::array<double, 6>>& rows,
                                double upper1 = 5.0, double upper2 = 20.0) {
    Population pop(TreatmentSpace{{upper1, upper2}, {}});
    int i = 0;
    for (const auto& r : rows)
        pop.add(make_individual("i" + std::to_string(++i), {r[0], r[3]}, {r[1], r[4]},
                                {r[2], r[5]}));
    return pop;
}

inline double profit_ref(double alpha, double beta, double s, double t) {
    return alpha + beta * std::log(1.0 + t) - s * t;
}

// Independent least-squares oracle: solve the 2x2 normal equations for
// y = a + b x directly.
inline std::pair<double, double> ols_normal_equations(const std::vector<double>& x,
                                                      const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    const double b = (n * sxy - sx * sy) / det;
    const double a = (sy * sxx - sx * sxy) / det;
    return {a, b};
}

// Random population with log-normal betas; generic instances for property
// sweeps.
inline Population random_population_2d(int64_t n, uint64_t seed, double upper1 = 5.0,
                                       double upper2 = 20.0) {
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> beta1(std::log(2.5), 0.45);
    std::lognormal_distribution<double> beta2(0.0, 0.8);
    std::lognormal_distribution<double> spend(std::log(30.0), 0.6);
    std::normal_distribution<double> alpha(0.0, 0.25);
    std::normal_distribution<double> noise(0.0, 0.5);
    Population pop(TreatmentSpace{{upper1, upper2}, {}});
    for (int64_t i = 0; i < n; ++i) {
        Individual ind = make_individual("r" + std::to_string(i), {alpha(rng), alpha(rng)},
                                         {beta1(rng), beta2(rng)},
                                         {1.0, spend(rng) / 100.0});
        ind.covariates = {ind.beta[0] + noise(rng), ind.beta[1] + noise(rng), noise(rng)};
        pop.add(ind);
    }
    return pop;
}

}  // namespace testutil

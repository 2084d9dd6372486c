#include "coarse/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "coarse/parallel.hpp"

namespace coarse::calibrate {

void ArmEstimates::validate() const {
    if (levels.empty()) throw data_error("arm estimates: no dimensions");
    if (values.size() != levels.size())
        throw data_error("arm estimates: values/levels dimension mismatch");
    const int64_t n = size();
    for (size_t d = 0; d < levels.size(); ++d) {
        std::set<double> distinct(levels[d].begin(), levels[d].end());
        if (distinct.size() < 2)
            throw data_error("arm estimates: dimension " + std::to_string(d + 1) +
                             " needs at least 2 distinct arm levels");
        for (double t : levels[d])
            if (!(t > 0.0) || !std::isfinite(t))
                throw data_error("arm estimates: arm levels must be positive");
        if (static_cast<int64_t>(values[d].size()) != n * static_cast<int64_t>(levels[d].size()))
            throw data_error("arm estimates: dimension " + std::to_string(d + 1) +
                             " value matrix has wrong shape");
    }
}

CurveFit fit_response_curve(std::span<const double> levels, std::span<const double> cates) {
    const size_t k = levels.size();
    if (k < 2 || cates.size() != k)
        throw data_error("curve fit needs >= 2 (level, estimate) pairs");

    double sx = 0.0, sy = 0.0;
    for (size_t j = 0; j < k; ++j) {
        sx += std::log1p(levels[j]);
        sy += cates[j];
    }
    const double mx = sx / k, my = sy / k;
    double sxx = 0.0, sxy = 0.0;
    for (size_t j = 0; j < k; ++j) {
        const double dx = std::log1p(levels[j]) - mx;
        sxx += dx * dx;
        sxy += dx * (cates[j] - my);
    }
    if (sxx <= 0.0) throw data_error("curve fit: all arm levels identical (rank deficient)");

    CurveFit fit;
    fit.beta = sxy / sxx;
    fit.alpha = my - fit.beta * mx;
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t j = 0; j < k; ++j) {
        const double pred = fit.alpha + fit.beta * std::log1p(levels[j]);
        ss_res += (cates[j] - pred) * (cates[j] - pred);
        ss_tot += (cates[j] - my) * (cates[j] - my);
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

FitResult fit_population(const ArmEstimates& arms, TreatmentSpace space,
                         const std::vector<std::vector<double>>& cost_scales,
                         int threads) {
    arms.validate();
    space.validate();
    const int dims = arms.dims();
    const int64_t n = arms.size();
    if (space.dims() != dims)
        throw config_error("treatment space dimension count does not match arm estimates");
    if (static_cast<int>(cost_scales.size()) != dims)
        throw data_error("cost scale table dimension mismatch");
    for (int d = 0; d < dims; ++d) {
        if (static_cast<int64_t>(cost_scales[d].size()) != n)
            throw data_error("cost scale table row count mismatch");
        for (double t : arms.levels[d])
            if (t > space.upper_bounds[d])
                throw data_error("arm level above the dimension upper bound");
    }

    std::vector<std::vector<double>> alpha(dims, std::vector<double>(n));
    std::vector<std::vector<double>> beta(dims, std::vector<double>(n));
    std::vector<std::vector<double>> r2(dims, std::vector<double>(n));
    for (int d = 0; d < dims; ++d) {
        const size_t k = arms.levels[d].size();
        parallel_blocks(n, threads, [&, d](int64_t, int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) {
                const CurveFit fit = fit_response_curve(
                    arms.levels[d],
                    std::span<const double>(arms.values[d].data() + i * k, k));
                alpha[d][i] = fit.alpha;
                beta[d][i] = std::max(fit.beta, 0.0);
                r2[d][i] = fit.r_squared;
            }
        });
    }

    FitResult out{Population(std::move(space)), std::move(r2), {}};
    out.population.reserve(n);
    Individual ind;
    ind.alpha.resize(dims);
    ind.beta.resize(dims);
    ind.cost_scale.resize(dims);
    for (int64_t i = 0; i < n; ++i) {
        ind.id = arms.ids[i];
        for (int d = 0; d < dims; ++d) {
            ind.alpha[d] = alpha[d][i];
            ind.beta[d] = beta[d][i];
            ind.cost_scale[d] = cost_scales[d][i];
        }
        out.population.add(ind);
    }
    out.mean_r_squared.resize(dims);
    for (int d = 0; d < dims; ++d) {
        double s = 0.0;
        for (double v : out.r_squared[d]) s += v;
        out.mean_r_squared[d] = n > 0 ? s / n : 0.0;
    }
    return out;
}

FilterResult filter_population(const Population& pop, double beta_floor) {
    FilterResult out{Population(pop.space()), {}};
    const int dims = pop.dims();
    for (int64_t i = 0; i < pop.size(); ++i) {
        Individual ind = pop.individual(i);
        bool responsive = false;
        for (int d = 0; d < dims; ++d) {
            if (ind.beta[d] > beta_floor)
                responsive = true;
            else
                ind.beta[d] = 0.0;
        }
        if (responsive)
            out.kept.add(ind);
        else
            out.dropped_ids.push_back(ind.id);
    }
    return out;
}

ValidationResult honest_validate(const ArmEstimates& arms, int dim,
                                 std::span<const int32_t> holdout_arm, int threads) {
    arms.validate();
    if (dim < 0 || dim >= arms.dims()) throw config_error("validation dimension out of range");
    const auto& levels = arms.levels[dim];
    const size_t k = levels.size();
    if (k < 3)
        throw config_error("honest validation needs >= 3 arm levels in the dimension");
    const int64_t n = arms.size();
    if (static_cast<int64_t>(holdout_arm.size()) != n)
        throw config_error("holdout arm vector must cover every individual");
    for (int32_t h : holdout_arm)
        if (h < 0 || h >= static_cast<int32_t>(k))
            throw config_error("holdout arm index out of range");

    ValidationResult out;
    out.predicted.resize(n);
    out.actual.resize(n);
    parallel_blocks(n, threads, [&](int64_t, int64_t begin, int64_t end) {
        std::vector<double> lv(k - 1), cv(k - 1);
        for (int64_t i = begin; i < end; ++i) {
            const int32_t h = holdout_arm[i];
            size_t m = 0;
            for (size_t j = 0; j < k; ++j) {
                if (static_cast<int32_t>(j) == h) continue;
                lv[m] = levels[j];
                cv[m] = arms.values[dim][i * k + j];
                ++m;
            }
            const CurveFit fit = fit_response_curve(lv, cv);
            out.predicted[i] = fit.alpha + fit.beta * std::log1p(levels[h]);
            out.actual[i] = arms.values[dim][i * k + h];
        }
    });

    double mp = 0.0, ma = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        mp += out.predicted[i];
        ma += out.actual[i];
    }
    mp /= n;
    ma /= n;
    double spp = 0.0, saa = 0.0, spa = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dp = out.predicted[i] - mp;
        const double da = out.actual[i] - ma;
        spp += dp * dp;
        saa += da * da;
        spa += dp * da;
    }
    out.correlation = (spp > 0.0 && saa > 0.0) ? spa / std::sqrt(spp * saa) : 1.0;
    return out;
}

}  // namespace coarse::calibrate

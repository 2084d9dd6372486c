#include <cmath>
#include <random>

#include "coarse/harness.hpp"

namespace coarse::harness {

void SynthConfig::validate() const {
    if (n <= 0) throw config_error("synth: n must be > 0");
    if (dims < 1) throw config_error("synth: dims must be >= 1");
    if (!seed_set) throw config_error("synth: a seed is mandatory");
    if (static_cast<int>(upper_bounds.size()) != dims ||
        static_cast<int>(beta_dist.size()) != dims ||
        static_cast<int>(cost_dist.size()) != dims)
        throw config_error("synth: per-dimension specs must match dims");
    for (double u : upper_bounds)
        if (!(u > 0.0) || !std::isfinite(u))
            throw config_error("synth: upper bounds must be positive and finite");
    for (const auto& b : beta_dist)
        if (b.scale < 0.0) throw config_error("synth: beta scale must be >= 0");
    for (const auto& c : cost_dist) {
        if (c.kind == CostScaleSpec::Kind::kConstant && c.value <= 0.0)
            throw config_error("synth: constant cost scale must be > 0");
        if (c.kind == CostScaleSpec::Kind::kLogNormalOver100 && c.spend.scale < 0.0)
            throw config_error("synth: spend scale must be >= 0");
    }
    if (alpha_dist.stddev < 0.0) throw config_error("synth: alpha stddev must be >= 0");
    if (covariate_count < 0) throw config_error("synth: covariate count must be >= 0");
}

SynthConfig promo_preset(int64_t n, uint64_t seed) {
    SynthConfig cfg;
    cfg.n = n;
    cfg.dims = 2;
    cfg.upper_bounds = {5.0, 20.0};
    cfg.beta_dist = {{std::log(2.5), 0.45}, {0.0, 0.8}};
    cfg.cost_dist.resize(2);
    cfg.cost_dist[0] = {CostScaleSpec::Kind::kConstant, 1.0, {}};
    cfg.cost_dist[1] = {CostScaleSpec::Kind::kLogNormalOver100, 0.0, {std::log(30.0), 0.6}};
    cfg.alpha_dist = {0.0, 0.25};
    cfg.seed = seed;
    cfg.seed_set = true;
    cfg.covariate_count = 5;
    cfg.covariates_linked = true;
    return cfg;
}

Population generate_population(const SynthConfig& config) {
    config.validate();
    TreatmentSpace space{config.upper_bounds, {}};
    Population pop(space);
    pop.reserve(config.n);

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> alpha_draw(config.alpha_dist.mean,
                                                config.alpha_dist.stddev);
    std::normal_distribution<double> noise(0.0, 1.0);

    Individual ind;
    ind.alpha.resize(config.dims);
    ind.beta.resize(config.dims);
    ind.cost_scale.resize(config.dims);
    ind.covariates.resize(config.covariate_count);
    for (int64_t i = 0; i < config.n; ++i) {
        ind.id = "s" + std::to_string(i + 1);
        for (int d = 0; d < config.dims; ++d) {
            std::lognormal_distribution<double> beta_draw(config.beta_dist[d].location,
                                                          config.beta_dist[d].scale);
            ind.beta[d] = beta_draw(rng);
        }
        for (int d = 0; d < config.dims; ++d) {
            const auto& spec = config.cost_dist[d];
            if (spec.kind == CostScaleSpec::Kind::kConstant) {
                ind.cost_scale[d] = spec.value;
            } else {
                std::lognormal_distribution<double> spend(spec.spend.location,
                                                          spec.spend.scale);
                ind.cost_scale[d] = spend(rng) / 100.0;
            }
        }
        for (int d = 0; d < config.dims; ++d) ind.alpha[d] = alpha_draw(rng);
        for (int c = 0; c < config.covariate_count; ++c) {
            if (config.covariates_linked && c < config.dims)
                ind.covariates[c] = ind.beta[c] + 0.5 * noise(rng);
            else
                ind.covariates[c] = noise(rng);
        }
        pop.add(ind);
    }
    return pop;
}

}  // namespace coarse::harness

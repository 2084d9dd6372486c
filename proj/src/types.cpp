#include "coarse/types.hpp"

#include <cmath>

namespace coarse {

void TreatmentSpace::validate() const {
    if (upper_bounds.empty()) throw config_error("treatment space needs at least 1 dimension");
    for (size_t d = 0; d < upper_bounds.size(); ++d) {
        if (!std::isfinite(upper_bounds[d]) || upper_bounds[d] <= 0.0)
            throw config_error("upper bound of dimension " + std::to_string(d + 1) +
                               " must be positive and finite");
    }
    if (!unit_labels.empty() && unit_labels.size() != upper_bounds.size())
        throw config_error("unit_labels size does not match dimension count");
}

Population::Population(TreatmentSpace space) : space_(std::move(space)) {
    space_.validate();
    alpha_.resize(space_.dims());
    beta_.resize(space_.dims());
    cost_.resize(space_.dims());
}

void Population::reserve(int64_t n) {
    ids_.reserve(n);
    for (int d = 0; d < dims(); ++d) {
        alpha_[d].reserve(n);
        beta_[d].reserve(n);
        cost_[d].reserve(n);
    }
}

void Population::add(const Individual& ind) {
    const int d = dims();
    if (static_cast<int>(ind.alpha.size()) != d || static_cast<int>(ind.beta.size()) != d ||
        static_cast<int>(ind.cost_scale.size()) != d)
        throw data_error("individual '" + ind.id + "': parameter arrays must have " +
                         std::to_string(d) + " dimensions");
    for (int k = 0; k < d; ++k) {
        if (!std::isfinite(ind.alpha[k]) || !std::isfinite(ind.beta[k]) ||
            !std::isfinite(ind.cost_scale[k]))
            throw data_error("individual '" + ind.id + "': non-finite parameter");
        if (ind.cost_scale[k] <= 0.0)
            throw data_error("individual '" + ind.id + "': cost scale must be > 0");
        if (ind.beta[k] < 0.0)
            throw data_error("individual '" + ind.id + "': beta must be >= 0");
    }
    if (covariate_count_ < 0)
        covariate_count_ = static_cast<int>(ind.covariates.size());
    else if (static_cast<int>(ind.covariates.size()) != covariate_count_)
        throw data_error("individual '" + ind.id + "': covariate count mismatch");

    ids_.push_back(ind.id);
    for (int k = 0; k < d; ++k) {
        alpha_[k].push_back(ind.alpha[k]);
        beta_[k].push_back(ind.beta[k]);
        cost_[k].push_back(ind.cost_scale[k]);
    }
    covariates_.insert(covariates_.end(), ind.covariates.begin(), ind.covariates.end());
}

Individual Population::individual(int64_t i) const {
    Individual ind;
    ind.id = ids_[i];
    const int d = dims();
    ind.alpha.resize(d);
    ind.beta.resize(d);
    ind.cost_scale.resize(d);
    for (int k = 0; k < d; ++k) {
        ind.alpha[k] = alpha_[k][i];
        ind.beta[k] = beta_[k][i];
        ind.cost_scale[k] = cost_[k][i];
    }
    if (covariate_count_ > 0) {
        auto row = covariate_row(i);
        ind.covariates.assign(row.begin(), row.end());
    }
    return ind;
}

Population Population::gather(std::span<const int64_t> indices) const {
    Population out(space_);
    out.covariate_count_ = covariate_count_;
    out.reserve(static_cast<int64_t>(indices.size()));
    if (covariate_count_ > 0)
        out.covariates_.reserve(indices.size() * static_cast<size_t>(covariate_count_));
    for (int64_t idx : indices) {
        out.ids_.push_back(ids_[idx]);
        for (int k = 0; k < dims(); ++k) {
            out.alpha_[k].push_back(alpha_[k][idx]);
            out.beta_[k].push_back(beta_[k][idx]);
            out.cost_[k].push_back(cost_[k][idx]);
        }
        if (covariate_count_ > 0) {
            auto row = covariate_row(idx);
            out.covariates_.insert(out.covariates_.end(), row.begin(), row.end());
        }
    }
    return out;
}

void Population::zero_intercepts() {
    for (auto& col : alpha_) std::fill(col.begin(), col.end(), 0.0);
}

void Population::check_dim(int dim) const {
    if (dim < 0 || dim >= dims())
        throw config_error("dimension index " + std::to_string(dim) + " out of range [0, " +
                           std::to_string(dims()) + ")");
}

void Population::check_treatment(const FeasibleTreatment& t) const {
    check_dim(t.dim);
    if (!std::isfinite(t.value) || t.value < 0.0 || t.value > space_.upper_bounds[t.dim])
        throw config_error("treatment level " + util::dtos(t.value) +
                           " outside [0, " + util::dtos(space_.upper_bounds[t.dim]) +
                           "] in dimension " + std::to_string(t.dim + 1));
}

}  // namespace coarse

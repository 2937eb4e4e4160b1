#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"

namespace stitch {

/// Per-step mixture sum_i w_i p_i(a|s). Used as the behavior density when a
/// dataset pools episodes from several behavior policies.
class MixturePolicy final : public Policy {
public:
    MixturePolicy(std::vector<PolicyPtr> parts, std::vector<double> weights)
        : parts_(std::move(parts)), weights_(std::move(weights)) {
        if (parts_.empty() || parts_.size() != weights_.size()) throw PreconditionError("mixture: one weight per component");
        double sum = 0.0;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            if (!parts_[i]) throw PreconditionError("mixture: null component");
            if (!(weights_[i] >= 0.0)) throw PreconditionError("mixture: weights must be >= 0");
            if (parts_[i]->state_dim() != parts_[0]->state_dim() || parts_[i]->action_dim() != parts_[0]->action_dim())
                throw DimensionError("mixture: components disagree on dimensions");
            sum += weights_[i];
        }
        if (!(sum > 0.0)) throw PreconditionError("mixture: weights sum to zero");
        for (auto& w : weights_) w /= sum;
    }

    int state_dim() const override { return parts_[0]->state_dim(); }
    int action_dim() const override { return parts_[0]->action_dim(); }
    const std::vector<double>& weights() const { return weights_; }

    Vec sample(const Vec& s, RngStream& rng) const override {
        return parts_[rng.categorical(weights_)]->sample(s, rng);
    }

    bool has_density() const override {
        return std::all_of(parts_.begin(), parts_.end(), [](const PolicyPtr& p) { return p->has_density(); });
    }

    double log_prob(const Vec& s, const Vec& a) const override {
        const auto lp = component_log_probs(s, a);
        const double m = *std::max_element(lp.begin(), lp.end());
        if (!std::isfinite(m)) return m;
        double acc = 0.0;
        for (double x : lp) acc += std::exp(x - m);
        return m + std::log(acc);
    }

    bool has_score() const override { return has_density(); }

    // responsibility-weighted component scores
    PolicyScore score(const Vec& s, const Vec& a) const override { return mix(s, a, false); }
    PolicyScore guidance_score(const Vec& s, const Vec& a) const override { return mix(s, a, true); }

private:
    std::vector<double> component_log_probs(const Vec& s, const Vec& a) const {
        std::vector<double> lp;
        for (std::size_t i = 0; i < parts_.size(); ++i)
            lp.push_back(weights_[i] > 0.0 ? std::log(weights_[i]) + parts_[i]->log_prob(s, a) : -INFINITY);
        return lp;
    }

    PolicyScore mix(const Vec& s, const Vec& a, bool guidance) const {
        auto lp = component_log_probs(s, a);
        const double m = *std::max_element(lp.begin(), lp.end());
        PolicyScore out{Vec::Zero(s.size()), Vec::Zero(a.size())};
        if (!std::isfinite(m)) return out;
        double z = 0.0;
        for (auto& x : lp) z += (x = std::exp(x - m));
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            if (lp[i] == 0.0) continue;
            const PolicyScore p = guidance ? parts_[i]->guidance_score(s, a) : parts_[i]->score(s, a);
            out.d_state += lp[i] / z * p.d_state;
            out.d_action += lp[i] / z * p.d_action;
        }
        return out;
    }

    std::vector<PolicyPtr> parts_;
    std::vector<double> weights_;
};

} // namespace stitch

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "stitch/dataset/trajectory.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// Per-dimension closed action interval; infinite bounds mean unbounded.
struct ActionBounds {
    Vec lo;
    Vec hi;

    static ActionBounds unbounded(int dim) {
        const double inf = std::numeric_limits<double>::infinity();
        return {Vec::Constant(dim, -inf), Vec::Constant(dim, inf)};
    }
    static ActionBounds box(int dim, double lo, double hi) { return {Vec::Constant(dim, lo), Vec::Constant(dim, hi)}; }

    bool contains(const Vec& a) const {
        return a.size() == lo.size() && (a.array() >= lo.array()).all() && (a.array() <= hi.array()).all();
    }
    bool is_bounded() const { return lo.allFinite() && hi.allFinite(); }
};

/// Gradient of log pi(a|s) split by argument.
struct PolicyScore {
    Vec d_state;
    Vec d_action;
};

/// Stochastic policy over continuous (or index-coded discrete) actions.
class Policy {
public:
    virtual ~Policy() = default;

    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual Vec sample(const Vec& s, RngStream& rng) const = 0;

    /// False for policies that only expose a score (e.g. diffusion policies).
    virtual bool has_density() const { return true; }
    virtual double log_prob(const Vec& s, const Vec& a) const = 0;

    virtual bool has_score() const { return true; }
    virtual PolicyScore score(const Vec& s, const Vec& a) const = 0;

    /// Score used inside guidance, where iterates may leave the action box:
    /// implementations clamp into the interior instead of throwing.
    virtual PolicyScore guidance_score(const Vec& s, const Vec& a) const { return score(s, a); }

    double prob(const Vec& s, const Vec& a) const { return std::exp(log_prob(s, a)); }
};

using PolicyPtr = std::shared_ptr<const Policy>;

/// Diagonal Gaussian with an MLP mean and state-independent log-std,
/// optionally tanh-squashed into a bounded box.
class GaussianPolicy final : public Policy {
public:
    static constexpr double kLogStdFloor = -5.0;
    static constexpr double kBoundaryEps = 1e-6;

    GaussianPolicy(Mlp mean_net, Vec log_std, bool squash = false, ActionBounds bounds = {})
        : mean_net_(std::move(mean_net)), log_std_(std::move(log_std)), squash_(squash), bounds_(std::move(bounds)) {
        if (log_std_.size() != mean_net_.output_dim()) throw DimensionError("log_std size must equal action dim");
        log_std_ = log_std_.cwiseMax(kLogStdFloor);
        if (bounds_.lo.size() == 0) bounds_ = ActionBounds::unbounded(action_dim());
        if (squash_ && !bounds_.is_bounded()) throw PreconditionError("squashed policy requires finite action bounds");
    }

    int state_dim() const override { return mean_net_.input_dim(); }
    int action_dim() const override { return mean_net_.output_dim(); }
    const Mlp& mean_net() const { return mean_net_; }
    const Vec& log_std() const { return log_std_; }
    bool squashed() const { return squash_; }
    const ActionBounds& bounds() const { return bounds_; }

    Vec mean(const Vec& s) const { return mean_net_.forward_one(s); }

    /// Mean action after squashing (the mode of u mapped through tanh).
    Vec mean_action(const Vec& s) const {
        Vec mu = mean(s);
        if (!squash_) return mu;
        return center() + half_width().cwiseProduct(mu.array().tanh().matrix());
    }

    Vec sample(const Vec& s, RngStream& rng) const override {
        Vec u = mean(s);
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) += std::exp(log_std_(i)) * rng.normal();
        if (!squash_) return u;
        return center() + half_width().cwiseProduct(u.array().tanh().matrix());
    }

    double log_prob(const Vec& s, const Vec& a) const override {
        check_dims(s, a);
        const Vec mu = mean(s);
        double lp = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            double u = a(i);
            if (squash_) {
                const double h = half_width()(i);
                const double y = clamp_unit((a(i) - center()(i)) / h);
                u = std::atanh(y);
                lp -= std::log(h * (1.0 - y * y));
            }
            const double sd = std::exp(log_std_(i));
            const double z = (u - mu(i)) / sd;
            lp += -0.5 * z * z - log_std_(i) - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        return lp;
    }

    /// Gradient of log_prob; throws when a squashed action sits on (or past) the bound.
    PolicyScore score(const Vec& s, const Vec& a) const override {
        check_dims(s, a);
        if (squash_) {
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                const double y = (a(i) - center()(i)) / half_width()(i);
                if (!(std::abs(y) < 1.0 - kBoundaryEps))
                    throw PreconditionError("clamped input: action coordinate " + std::to_string(i) +
                                            " lies on the squash boundary, score diverges");
            }
        }
        return score_impl(s, a);
    }

    PolicyScore guidance_score(const Vec& s, const Vec& a) const override { return score_impl(s, a); }

private:
    PolicyScore score_impl(const Vec& s, const Vec& a) const {
        MlpTape tape;
        const Vec mu = mean_net_.forward(Mat(s), &tape).col(0);
        PolicyScore out{Vec::Zero(s.size()), Vec::Zero(a.size())};
        Vec dmu(a.size()); // d log_prob / d mu
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double var = std::exp(2.0 * log_std_(i));
            if (squash_) {
                const double h = half_width()(i);
                const double y = clamp_unit((a(i) - center()(i)) / h);
                const double u = std::atanh(y);
                const double one_m = 1.0 - y * y;
                out.d_action(i) = (-(u - mu(i)) / var / one_m + 2.0 * y / one_m) / h;
                dmu(i) = (u - mu(i)) / var;
            } else {
                out.d_action(i) = -(a(i) - mu(i)) / var;
                dmu(i) = (a(i) - mu(i)) / var;
            }
        }
        out.d_state = mean_net_.backward(tape, Mat(dmu), nullptr).col(0);
        return out;
    }

    Vec center() const { return 0.5 * (bounds_.lo + bounds_.hi); }
    Vec half_width() const { return 0.5 * (bounds_.hi - bounds_.lo); }
    static double clamp_unit(double y) { return std::clamp(y, -1.0 + kBoundaryEps, 1.0 - kBoundaryEps); }

    void check_dims(const Vec& s, const Vec& a) const {
        if (s.size() != state_dim() || a.size() != action_dim()) throw DimensionError("policy (s, a) dimension mismatch");
    }

    Mlp mean_net_;
    Vec log_std_;
    bool squash_ = false;
    ActionBounds bounds_;
};

/// Gaussian policy whose mean is affine in the state: mu(s) = W s + b.
inline std::shared_ptr<GaussianPolicy> make_linear_gaussian_policy(const Mat& W, const Vec& b, const Vec& stddev,
                                                                   bool squash = false, ActionBounds bounds = {}) {
    Mlp net({static_cast<int>(W.cols()), static_cast<int>(W.rows())}, Activation::identity);
    net.weight(0) = W;
    net.bias(0) = b;
    return std::make_shared<GaussianPolicy>(std::move(net), stddev.array().log().matrix(), squash, std::move(bounds));
}

/// Tabular policy over index-coded states and actions (1-D vectors holding the index).
class TabularPolicy final : public Policy {
public:
    explicit TabularPolicy(std::vector<std::vector<double>> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) throw DimensionError("tabular policy needs at least one state");
        for (const auto& row : probs_) {
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0) throw PreconditionError("negative action probability");
                sum += p;
            }
            if (row.size() != probs_.front().size() || std::abs(sum - 1.0) > 1e-9)
                throw PreconditionError("tabular policy rows must be distributions of equal size");
        }
    }

    int state_dim() const override { return 1; }
    int action_dim() const override { return 1; }
    int num_states() const { return static_cast<int>(probs_.size()); }
    int num_actions() const { return static_cast<int>(probs_.front().size()); }
    double p(int s, int a) const { return probs_[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]; }
    const std::vector<std::vector<double>>& table() const { return probs_; }

    Vec sample(const Vec& s, RngStream& rng) const override {
        return Vec::Constant(1, static_cast<double>(rng.categorical(probs_[index(s)])));
    }
    double log_prob(const Vec& s, const Vec& a) const override {
        return std::log(probs_[index(s)][static_cast<std::size_t>(std::lround(a(0)))]);
    }
    bool has_score() const override { return false; }
    PolicyScore score(const Vec&, const Vec&) const override {
        throw PreconditionError("tabular policies have no action score");
    }

private:
    std::size_t index(const Vec& s) const { return static_cast<std::size_t>(std::lround(s(0))); }
    std::vector<std::vector<double>> probs_;
};

} // namespace stitch

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stitch/diffusion/schedule.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/adam.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// eps_phi(a^k, k | s): an action-only denoiser. Input is [a^k ; emb(k) ; s].
class ActionDenoiser {
public:
    ActionDenoiser() = default;

    ActionDenoiser(int state_dim, int action_dim, NoiseSchedule schedule, std::vector<int> hidden, int embed_width = 16,
                   Activation act = Activation::relu)
        : state_dim_(state_dim), action_dim_(action_dim), embed_width_(embed_width), schedule_(std::move(schedule)) {
        std::vector<int> dims{action_dim + embed_width + state_dim};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(action_dim);
        net_ = Mlp(std::move(dims), act);
    }

    ActionDenoiser(int state_dim, int action_dim, NoiseSchedule schedule, Mlp net, int embed_width)
        : state_dim_(state_dim), action_dim_(action_dim), embed_width_(embed_width), schedule_(std::move(schedule)),
          net_(std::move(net)) {
        if (net_.input_dim() != action_dim + embed_width + state_dim || net_.output_dim() != action_dim)
            throw DimensionError("action denoiser network dims do not match");
    }

    int state_dim() const noexcept { return state_dim_; }
    int action_dim() const noexcept { return action_dim_; }
    int embed_width() const noexcept { return embed_width_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }
    Mlp& net() noexcept { return net_; }
    const Mlp& net() const noexcept { return net_; }

    Vec input(const Vec& a, int k, const Vec& s) const {
        Vec in(net_.input_dim());
        in << a, time_embedding(k, embed_width_), s;
        return in;
    }

    Vec predict_noise(const Vec& a, int k, const Vec& s) const { return net_.forward_one(input(a, k, s)); }

private:
    int state_dim_ = 0, action_dim_ = 0, embed_width_ = 16;
    NoiseSchedule schedule_;
    Mlp net_;
};

/// Behavior cloning for an ActionDenoiser: the usual noise-prediction loss
/// on (s, a) pairs (columns of S and A).
inline std::vector<double> train_action_denoiser(ActionDenoiser& m, const Mat& S, const Mat& A, std::int64_t steps,
                                                 int batch_size, AdamConfig adam, RngStream rng, int log_every = 100) {
    if (S.cols() == 0 || S.cols() != A.cols()) throw PreconditionError("train_action_denoiser: empty or mismatched data");
    RngStream init = rng.substream(0x1417);
    m.net().init(init);
    const auto& sched = m.schedule();
    AdamState opt(m.net().num_params(), adam);
    Mat in(m.net().input_dim(), batch_size), eps(m.action_dim(), batch_size);
    Vec grad(m.net().num_params());
    MlpTape tape;
    std::vector<double> curve;
    double block = 0.0;
    int n = 0;
    for (std::int64_t step = 0; step < steps; ++step) {
        for (int b = 0; b < batch_size; ++b) {
            const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(S.cols())));
            const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.K())));
            for (int d = 0; d < m.action_dim(); ++d) eps(d, b) = rng.normal();
            const Vec ak = std::sqrt(sched.alpha_bar(k)) * A.col(i) + sched.sigma(k) * eps.col(b);
            in.col(b) = m.input(ak, k, S.col(i));
        }
        const Mat diff = m.net().forward(in, &tape) - eps;
        const double loss = diff.squaredNorm() / batch_size;
        if (!std::isfinite(loss)) throw NumericalError("train_action_denoiser diverged at step " + std::to_string(step));
        grad.setZero();
        m.net().backward(tape, (2.0 / batch_size) * diff, &grad);
        opt.step(m.net().params(), grad, cosine_lr_scale(step, steps));
        block += loss;
        if (++n == log_every || step + 1 == steps) {
            curve.push_back(block / n);
            block = 0.0;
            n = 0;
        }
    }
    return curve;
}

/// Exposes a diffusion policy through the Policy interface. The score is
/// read off the denoiser at the lowest noise level: -eps_phi(a, 1 | s) / sigma_1.
/// Only the action part is available; the state part is reported as zero.
class DiffusionPolicyAdapter final : public Policy {
public:
    explicit DiffusionPolicyAdapter(std::shared_ptr<const ActionDenoiser> m) : m_(std::move(m)) {
        if (!m_) throw PreconditionError("diffusion policy adapter needs a denoiser");
    }

    int state_dim() const override { return m_->state_dim(); }
    int action_dim() const override { return m_->action_dim(); }

    /// Ancestral sampling of the action chain.
    Vec sample(const Vec& s, RngStream& rng) const override {
        const auto& sched = m_->schedule();
        Vec a(action_dim());
        for (int d = 0; d < action_dim(); ++d) a(d) = rng.normal();
        for (int k = sched.K(); k >= 1; --k) {
            a = reverse_mean(a, m_->predict_noise(a, k, s), sched.alpha(k), sched.sigma(k));
            if (k > 1)
                for (int d = 0; d < action_dim(); ++d) a(d) += std::sqrt(sched.step_variance(k)) * rng.normal();
        }
        return a;
    }

    bool has_density() const override { return false; }
    double log_prob(const Vec&, const Vec&) const override {
        throw PreconditionError("diffusion policies expose a score but no density");
    }

    PolicyScore score(const Vec& s, const Vec& a) const override {
        const double s1 = m_->schedule().sigma(1);
        return {Vec::Zero(state_dim()), -m_->predict_noise(a, 1, s) / s1};
    }

private:
    std::shared_ptr<const ActionDenoiser> m_;
};

} // namespace stitch

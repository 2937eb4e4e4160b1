#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "stitch/diffusion/denoiser.hpp"
#include "stitch/diffusion/sampler.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/error.hpp"
#include "stitch/estimator/reward_model.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// Rewards for a batch of (s, a) columns.
using BatchReward = std::function<Vec(const Mat& S, const Mat& A)>;

inline BatchReward learned_reward(const RewardModel& m) {
    return [&m](const Mat& S, const Mat& A) { return m.predict_batch(S, A); };
}

inline BatchReward env_reward(const Environment& env) {
    return [&env](const Mat& S, const Mat& A) {
        Vec r(S.cols());
        for (Eigen::Index i = 0; i < S.cols(); ++i) r(i) = env.reward(S.col(i), A.col(i));
        return r;
    };
}

struct StitchConfig {
    int w = 8;
    int T = 128;
    double gamma = 0.99;
    int n_rollouts = 50;
    GuidanceSpec guidance;
    SampleOptions sample;
    int chunk = 50;   // rollouts generated together; fixed so results do not depend on worker count
    int workers = 1;

    void validate(const DenoiserModel& model) const {
        if (w < 1 || T < 1 || T % w != 0) throw PreconditionError("stitch: w must divide T");
        if (model.layout().w != w) throw PreconditionError("stitch: model window length differs from w");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw PreconditionError("stitch: gamma must lie in [0, 1)");
        if (n_rollouts < 1 || chunk < 1) throw PreconditionError("stitch: n_rollouts and chunk must be positive");
        if (guidance.alpha < 0.0 || guidance.lambda < 0.0) throw PreconditionError("stitch: guidance weights must be >= 0");
    }
};

struct RolloutBatch {
    std::vector<Trajectory> trajectories; // rewards hold the per-step reward used for the return
    std::vector<double> returns;
    std::vector<char> failed;
};

namespace detail {

inline void store_window(Trajectory& tr, const Vec& x, const WindowLayout& L, Eigen::Index t0) {
    for (int u = 0; u < L.w; ++u) {
        tr.states.col(t0 + u) = x.segment(L.state_offset(u), L.state_dim);
        tr.actions.col(t0 + u) = x.segment(L.action_offset(u), L.action_dim);
    }
    tr.states.col(t0 + L.w) = x.segment(L.state_offset(L.w), L.state_dim);
}

inline void accumulate_rewards(RolloutBatch& out, const Mat& X, const WindowLayout& L, const BatchReward& reward,
                               double gamma, Eigen::Index t0) {
    const auto B = X.cols();
    Mat S(L.state_dim, B), A(L.action_dim, B);
    for (int u = 0; u < L.w; ++u) {
        S = X.middleRows(L.state_offset(u), L.state_dim);
        A = X.middleRows(L.action_offset(u), L.action_dim);
        const Vec r = reward(S, A);
        const double disc = std::pow(gamma, static_cast<double>(t0 + u));
        for (Eigen::Index b = 0; b < B; ++b) {
            out.trajectories[static_cast<std::size_t>(b)].rewards(t0 + u) = r(b);
            out.returns[static_cast<std::size_t>(b)] += disc * r(b);
        }
    }
}

inline Mat initial_states(const Environment& env, std::span<const RngStream> rngs) {
    Mat s0(env.state_dim(), static_cast<Eigen::Index>(rngs.size()));
    for (std::size_t i = 0; i < rngs.size(); ++i) {
        RngStream r = rngs[i].substream(0xd0);
        s0.col(static_cast<Eigen::Index>(i)) = env.initial_state(r);
    }
    return s0;
}

} // namespace detail

/// Stitched guided generation for a batch of rollouts (one column each).
/// Rollout i draws s_0 from rngs[i].substream(0xd0) and the noise of window t
/// from rngs[i].substream(1 + t). Window t + 1 is conditioned on the final
/// state of window t; the return sums gamma^u R(s_u, a_u) over u < T.
inline RolloutBatch stitch_rollouts(const DenoiserModel& model, const BatchReward& reward, const StitchConfig& cfg,
                                    const Environment& env, std::span<const RngStream> rngs) {
    cfg.validate(model);
    const auto& L = model.layout();
    const auto B = static_cast<Eigen::Index>(rngs.size());
    RolloutBatch out;
    out.trajectories.assign(rngs.size(), make_trajectory(L.state_dim, L.action_dim, cfg.T));
    out.returns.assign(rngs.size(), 0.0);
    out.failed.assign(rngs.size(), 0);
    Mat cond = detail::initial_states(env, rngs);
    std::vector<RngStream> wr(rngs.size());
    std::vector<char> bad;
    for (int t = 0; t < cfg.T / cfg.w; ++t) {
        for (std::size_t i = 0; i < rngs.size(); ++i) wr[i] = rngs[i].substream(1 + static_cast<std::uint64_t>(t));
        const Mat X = guided_sample(model, cond, cfg.guidance, wr, cfg.sample, &bad);
        const Eigen::Index t0 = static_cast<Eigen::Index>(t) * cfg.w;
        for (Eigen::Index b = 0; b < B; ++b) {
            out.failed[static_cast<std::size_t>(b)] |= bad[static_cast<std::size_t>(b)];
            detail::store_window(out.trajectories[static_cast<std::size_t>(b)], X.col(b), L, t0);
        }
        detail::accumulate_rewards(out, X, L, reward, cfg.gamma, t0);
        cond = X.bottomRows(L.state_dim);
    }
    for (std::size_t b = 0; b < rngs.size(); ++b)
        if (!std::isfinite(out.returns[b])) out.failed[b] = 1;
    return out;
}

/// Full-length guided generation (one window spanning the horizon), drawing
/// from the same streams as stitch_rollouts with t = 0.
inline RolloutBatch full_trajectory_rollouts(const DenoiserModel& model, const BatchReward& reward,
                                             const StitchConfig& cfg, const Environment& env,
                                             std::span<const RngStream> rngs) {
    if (model.layout().w != cfg.T) throw PreconditionError("full-trajectory sampler needs a model with w = T");
    const auto& L = model.layout();
    RolloutBatch out;
    out.trajectories.assign(rngs.size(), make_trajectory(L.state_dim, L.action_dim, cfg.T));
    out.returns.assign(rngs.size(), 0.0);
    std::vector<RngStream> wr;
    for (const auto& r : rngs) wr.push_back(r.substream(1));
    const Mat X = guided_sample(model, detail::initial_states(env, rngs), cfg.guidance, wr, cfg.sample, &out.failed);
    for (Eigen::Index b = 0; b < X.cols(); ++b) detail::store_window(out.trajectories[static_cast<std::size_t>(b)], X.col(b), L, 0);
    detail::accumulate_rewards(out, X, L, reward, cfg.gamma, 0);
    for (std::size_t b = 0; b < rngs.size(); ++b)
        if (!std::isfinite(out.returns[b])) out.failed[b] = 1;
    return out;
}

/// Runs `fn(begin, end)` over [0, n) in fixed-size chunks on up to `workers`
/// threads. Chunk boundaries do not depend on the worker count.
template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, int workers, Fn&& fn) {
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    auto run = [&](std::size_t c) { fn(c * chunk, std::min(n, (c + 1) * chunk)); };
    if (workers <= 1 || n_chunks <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) run(c);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct PolicyEstimate {
    std::string policy_id;
    double estimate = 0.0;
    double std_error = 0.0;
    double ground_truth = std::numeric_limits<double>::quiet_NaN();
    double ground_truth_stderr = 0.0;
    std::size_t n_rollouts = 0; // rollouts that entered the estimate
    std::size_t n_failed = 0;   // rollouts aborted on non-finite states
    std::vector<double> returns;
};

struct NamedPolicy {
    std::string id;
    PolicyPtr policy;
};

/// J^ per target as the mean return of n_rollouts stitched rollouts. Rollout
/// i uses root.substream(i) for every target, so identical targets get
/// identical estimates.
inline std::vector<PolicyEstimate> evaluate_policies(const DenoiserModel& model, const BatchReward& reward,
                                                     StitchConfig cfg, const Environment& env,
                                                     const std::vector<NamedPolicy>& targets, const PolicyPtr& behavior,
                                                     const RngStream& root) {
    std::vector<PolicyEstimate> out;
    for (const auto& target : targets) {
        if (!target.policy || !target.policy->has_score())
            throw PreconditionError("evaluate_policies: target '" + target.id + "' exposes no score");
        cfg.guidance.target = target.policy;
        cfg.guidance.behavior = behavior;
        const auto n = static_cast<std::size_t>(cfg.n_rollouts);
        std::vector<double> returns(n);
        std::vector<char> failed(n);
        for_each_chunk(n, static_cast<std::size_t>(cfg.chunk), cfg.workers, [&](std::size_t lo, std::size_t hi) {
            std::vector<RngStream> rngs;
            for (std::size_t i = lo; i < hi; ++i) rngs.push_back(root.substream(i));
            const RolloutBatch b = stitch_rollouts(model, reward, cfg, env, rngs);
            for (std::size_t i = lo; i < hi; ++i) {
                returns[i] = b.returns[i - lo];
                failed[i] = b.failed[i - lo];
            }
        });
        PolicyEstimate pe;
        pe.policy_id = target.id;
        for (std::size_t i = 0; i < n; ++i) {
            if (failed[i]) ++pe.n_failed;
            else pe.returns.push_back(returns[i]);
        }
        if (pe.returns.empty())
            throw NumericalError("every rollout for target '" + target.id + "' produced non-finite states");
        const ValueEstimate v = mean_and_stderr(pe.returns);
        pe.estimate = v.value;
        pe.std_error = v.std_error;
        pe.n_rollouts = pe.returns.size();
        out.push_back(std::move(pe));
    }
    return out;
}

} // namespace stitch

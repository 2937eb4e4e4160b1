#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stitch/dataset/trajectory.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

struct StepResult {
    Vec next_state;
    double reward = 0.0;
    bool done = false;
};

/// Finite-horizon MDP with a sampler interface.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual int horizon() const = 0;
    virtual double gamma() const = 0;
    /// Declared bound on |R(s, a)|.
    virtual double reward_bound() const = 0;
    virtual ActionBounds action_bounds() const { return ActionBounds::unbounded(action_dim()); }

    virtual Vec initial_state(RngStream& rng) const = 0;
    virtual double reward(const Vec& s, const Vec& a) const = 0;

    StepResult step(const Vec& s, const Vec& a, RngStream& rng) const {
        if (a.size() != action_dim() || s.size() != state_dim()) throw DimensionError("step: (s, a) dimension mismatch");
        if (!action_bounds().contains(a)) throw PreconditionError("step: action outside action bounds");
        return step_impl(s, a, rng);
    }

    /// Exact J(pi) when the environment supports enumeration.
    virtual std::optional<double> exact_value(const Policy&) const { return std::nullopt; }

protected:
    virtual StepResult step_impl(const Vec& s, const Vec& a, RngStream& rng) const = 0;
};

using EnvPtr = std::shared_ptr<const Environment>;

/// 2-D particle whose action is a heading angle; the heading is perturbed by
/// N(0, noise_std^2) before a fixed-length move.
class GaussianWorld final : public Environment {
public:
    enum class RewardKind { zero, descend, goal };

    struct Params {
        double noise_std = 0.2;
        double step_size = 0.02;
        int horizon = 128;
        double gamma = 0.99;
        Vec start = Vec::Zero(2);
        RewardKind reward = RewardKind::descend;
        Vec goal = (Vec(2) << 1.5, -1.0).finished();
    };

    GaussianWorld() : GaussianWorld(Params{}) {}
    explicit GaussianWorld(Params p) : p_(std::move(p)) {
        if (p_.horizon < 1) throw PreconditionError("GaussianWorld horizon must be positive");
    }

    const Params& params() const { return p_; }
    std::string name() const override { return "gaussian_world"; }
    int state_dim() const override { return 2; }
    int action_dim() const override { return 1; }
    int horizon() const override { return p_.horizon; }
    double gamma() const override { return p_.gamma; }
    double reward_bound() const override {
        switch (p_.reward) {
            case RewardKind::zero: return 0.0;
            case RewardKind::descend: return p_.start.cwiseAbs().maxCoeff() + p_.step_size * p_.horizon;
            case RewardKind::goal: return 1.0;
        }
        return 0.0;
    }

    Vec initial_state(RngStream&) const override { return p_.start; }

    double reward(const Vec& s, const Vec&) const override {
        switch (p_.reward) {
            case RewardKind::zero: return 0.0;
            case RewardKind::descend: return -s(1);
            case RewardKind::goal: return std::exp(-0.5 * (s - p_.goal).squaredNorm());
        }
        return 0.0;
    }

    /// Deterministic core of the transition for a given heading noise draw.
    Vec transition(const Vec& s, double angle, double eps) const {
        Vec n(2);
        n(0) = s(0) + p_.step_size * std::cos(angle + eps);
        n(1) = s(1) + p_.step_size * std::sin(angle + eps);
        return n;
    }

protected:
    StepResult step_impl(const Vec& s, const Vec& a, RngStream& rng) const override {
        const double eps = p_.noise_std * rng.normal();
        return {transition(s, a(0), eps), reward(s, a), false};
    }

private:
    Params p_;
};

/// s' = A s + B a + noise_std * eps with Gaussian initial states and a
/// bounded smooth reward exp(-|s|^2).
class LinearGaussianEnv final : public Environment {
public:
    struct Params {
        Mat A = Mat::Constant(1, 1, 0.9);
        Mat B = Mat::Constant(1, 1, 0.3);
        double noise_std = 0.1;
        Vec init_mean = Vec::Constant(1, 1.0);
        double init_std = 0.2;
        int horizon = 16;
        double gamma = 0.95;
    };

    LinearGaussianEnv() : LinearGaussianEnv(Params{}) {}
    explicit LinearGaussianEnv(Params p) : p_(std::move(p)) {
        if (p_.A.rows() != p_.A.cols() || p_.B.rows() != p_.A.rows()) throw DimensionError("LinearGaussianEnv A/B shapes");
        if (p_.horizon < 1) throw PreconditionError("LinearGaussianEnv horizon must be positive");
    }

    const Params& params() const { return p_; }
    std::string name() const override { return "linear_gaussian"; }
    int state_dim() const override { return static_cast<int>(p_.A.rows()); }
    int action_dim() const override { return static_cast<int>(p_.B.cols()); }
    int horizon() const override { return p_.horizon; }
    double gamma() const override { return p_.gamma; }
    double reward_bound() const override { return 1.0; }

    Vec initial_state(RngStream& rng) const override {
        Vec s = p_.init_mean;
        for (Eigen::Index i = 0; i < s.size(); ++i) s(i) += p_.init_std * rng.normal();
        return s;
    }
    double reward(const Vec& s, const Vec&) const override { return std::exp(-s.squaredNorm()); }

protected:
    StepResult step_impl(const Vec& s, const Vec& a, RngStream& rng) const override {
        Vec n = p_.A * s + p_.B * a;
        for (Eigen::Index i = 0; i < n.size(); ++i) n(i) += p_.noise_std * rng.normal();
        return {std::move(n), reward(s, a), false};
    }

private:
    Params p_;
};

/// Explicit finite MDP; states and actions are index-coded 1-D vectors.
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 1;
    double gamma = 0.9;
    std::vector<double> initial;                              // d_0[s]
    std::vector<std::vector<std::vector<double>>> transition; // P[s][a][s']
    std::vector<std::vector<double>> reward;                  // R[s][a]

    void validate() const {
        if (num_states < 1 || num_actions < 1 || horizon < 1) throw PreconditionError("TabularMdp sizes must be positive");
        auto is_dist = [](const std::vector<double>& row, int n) {
            if (static_cast<int>(row.size()) != n) return false;
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0) return false;
                sum += p;
            }
            return std::abs(sum - 1.0) < 1e-9;
        };
        if (!is_dist(initial, num_states)) throw PreconditionError("TabularMdp initial distribution invalid");
        if (static_cast<int>(transition.size()) != num_states || static_cast<int>(reward.size()) != num_states)
            throw DimensionError("TabularMdp table sizes");
        for (int s = 0; s < num_states; ++s) {
            if (static_cast<int>(transition[s].size()) != num_actions || static_cast<int>(reward[s].size()) != num_actions)
                throw DimensionError("TabularMdp table sizes");
            for (int a = 0; a < num_actions; ++a)
                if (!is_dist(transition[s][a], num_states)) throw PreconditionError("TabularMdp transition row invalid");
        }
    }

    double max_abs_reward() const {
        double m = 0.0;
        for (const auto& row : reward)
            for (double r : row) m = std::max(m, std::abs(r));
        return m;
    }

    /// Finite-horizon Q_t(s, a) for t = 0..horizon-1 under a tabular policy.
    std::vector<std::vector<std::vector<double>>> q_values(const TabularPolicy& pi) const {
        std::vector<std::vector<std::vector<double>>> q(
            static_cast<std::size_t>(horizon),
            std::vector<std::vector<double>>(static_cast<std::size_t>(num_states),
                                             std::vector<double>(static_cast<std::size_t>(num_actions), 0.0)));
        std::vector<double> v_next(static_cast<std::size_t>(num_states), 0.0);
        for (int t = horizon - 1; t >= 0; --t) {
            std::vector<double> v(static_cast<std::size_t>(num_states), 0.0);
            for (int s = 0; s < num_states; ++s) {
                for (int a = 0; a < num_actions; ++a) {
                    double cont = 0.0;
                    for (int n = 0; n < num_states; ++n) cont += transition[s][a][n] * v_next[n];
                    q[t][s][a] = reward[s][a] + gamma * cont;
                    v[s] += pi.p(s, a) * q[t][s][a];
                }
            }
            v_next = std::move(v);
        }
        return q;
    }

    /// Exact J(pi) by backward dynamic programming.
    double value(const TabularPolicy& pi) const {
        const auto q = q_values(pi);
        double j = 0.0;
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) j += initial[s] * pi.p(s, a) * q[0][s][a];
        return j;
    }

    /// Random instance with Dirichlet(1)-style rows.
    static TabularMdp random(int n_states, int n_actions, int horizon, double gamma, RngStream& rng) {
        auto simplex = [&rng](int n) {
            std::vector<double> v(static_cast<std::size_t>(n));
            double sum = 0.0;
            for (auto& x : v) sum += (x = -std::log(rng.uniform()));
            for (auto& x : v) x /= sum;
            return v;
        };
        TabularMdp m;
        m.num_states = n_states;
        m.num_actions = n_actions;
        m.horizon = horizon;
        m.gamma = gamma;
        m.initial = simplex(n_states);
        m.transition.resize(static_cast<std::size_t>(n_states));
        m.reward.resize(static_cast<std::size_t>(n_states));
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                m.transition[s].push_back(simplex(n_states));
                m.reward[s].push_back(rng.uniform());
            }
        }
        return m;
    }
};

class TabularEnv final : public Environment {
public:
    explicit TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

    const TabularMdp& mdp() const { return mdp_; }
    std::string name() const override { return "tabular"; }
    int state_dim() const override { return 1; }
    int action_dim() const override { return 1; }
    int horizon() const override { return mdp_.horizon; }
    double gamma() const override { return mdp_.gamma; }
    double reward_bound() const override { return mdp_.max_abs_reward(); }
    ActionBounds action_bounds() const override { return ActionBounds::box(1, 0.0, mdp_.num_actions - 1); }

    Vec initial_state(RngStream& rng) const override {
        return Vec::Constant(1, static_cast<double>(rng.categorical(mdp_.initial)));
    }
    double reward(const Vec& s, const Vec& a) const override { return mdp_.reward[idx(s)][idx(a)]; }

    std::optional<double> exact_value(const Policy& pi) const override {
        if (const auto* tab = dynamic_cast<const TabularPolicy*>(&pi)) return mdp_.value(*tab);
        return std::nullopt;
    }

protected:
    StepResult step_impl(const Vec& s, const Vec& a, RngStream& rng) const override {
        const auto next = rng.categorical(mdp_.transition[idx(s)][idx(a)]);
        return {Vec::Constant(1, static_cast<double>(next)), reward(s, a), false};
    }

private:
    static std::size_t idx(const Vec& v) { return static_cast<std::size_t>(std::lround(v(0))); }
    TabularMdp mdp_;
};

/// One episode of at most T steps; step t draws from rng.substream(t) so the
/// trajectory depends only on (seed, rollout stream, t).
inline Trajectory rollout(const Environment& env, const Policy& policy, const RngStream& rng, int T) {
    if (T > env.horizon() || T < 1) throw PreconditionError("rollout length must be in [1, horizon]");
    std::vector<Vec> states;
    std::vector<Vec> actions;
    std::vector<double> rewards;
    std::vector<bool> dones;
    RngStream init = rng.substream(0xd0);
    Vec s = env.initial_state(init);
    states.push_back(s);
    for (int t = 0; t < T; ++t) {
        RngStream step_rng = rng.substream(static_cast<std::uint64_t>(t));
        Vec a = policy.sample(s, step_rng);
        StepResult r = env.step(s, a, step_rng);
        actions.push_back(std::move(a));
        rewards.push_back(r.reward);
        dones.push_back(r.done);
        s = std::move(r.next_state);
        states.push_back(s);
        if (r.done) break;
    }
    const auto n = static_cast<Eigen::Index>(actions.size());
    Trajectory tr = make_trajectory(env.state_dim(), env.action_dim(), n);
    for (Eigen::Index t = 0; t <= n; ++t) tr.states.col(t) = states[static_cast<std::size_t>(t)];
    for (Eigen::Index t = 0; t < n; ++t) {
        tr.actions.col(t) = actions[static_cast<std::size_t>(t)];
        tr.rewards(t) = rewards[static_cast<std::size_t>(t)];
        tr.dones[static_cast<std::size_t>(t)] = dones[static_cast<std::size_t>(t)];
    }
    return tr;
}

struct ValueEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    bool exact = false;
};

/// Mean and standard error of a sample.
inline ValueEstimate mean_and_stderr(const std::vector<double>& xs) {
    ValueEstimate v;
    v.n = xs.size();
    if (xs.empty()) return v;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    v.value = mean;
    v.std_error = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size())) : 0.0;
    return v;
}

/// J(pi) by exact enumeration where the environment supports it, otherwise
/// Monte Carlo over n_rollouts full-horizon episodes.
inline ValueEstimate ground_truth_value(const Environment& env, const Policy& policy, std::size_t n_rollouts,
                                        const RngStream& rng) {
    if (n_rollouts < 1) throw PreconditionError("ground_truth_value needs at least one rollout");
    if (auto exact = env.exact_value(policy)) return {*exact, 0.0, 0, true};
    std::vector<double> returns;
    returns.reserve(n_rollouts);
    for (std::size_t i = 0; i < n_rollouts; ++i)
        returns.push_back(rollout(env, policy, rng.substream(i), env.horizon()).discounted_return(env.gamma()));
    return mean_and_stderr(returns);
}

} // namespace stitch

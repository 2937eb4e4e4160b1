#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/io/checkpoint.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/regression.hpp"

namespace stitch {

/// Draws s' given (s, a); the rng belongs to the current step.
using TransitionFn = std::function<Vec(const Vec& s, const Vec& a, RngStream& rng)>;
using RewardFn = std::function<double(const Vec& s, const Vec& a)>;

/// Learned one-step model: s' = s + delta(s, a) + noise_std * z.
/// The network maps normalized (s, a) to a standardized delta.
class DynamicsModel {
public:
    DynamicsModel() = default;
    DynamicsModel(Mlp net, NormStats norm, Vec delta_mean, Vec delta_std, Vec noise_std)
        : net_(std::move(net)), norm_(std::move(norm)), delta_mean_(std::move(delta_mean)),
          delta_std_(std::move(delta_std)), noise_std_(std::move(noise_std)) {
        const auto sd = norm_.state_mean.size(), ad = norm_.action_mean.size();
        if (net_.input_dim() != sd + ad || net_.output_dim() != sd || delta_mean_.size() != sd ||
            delta_std_.size() != sd || noise_std_.size() != sd)
            throw DimensionError("dynamics model dims do not match");
    }

    int state_dim() const { return static_cast<int>(norm_.state_mean.size()); }
    int action_dim() const { return static_cast<int>(norm_.action_mean.size()); }
    const Mlp& net() const noexcept { return net_; }
    Mlp& net() noexcept { return net_; }
    const NormStats& norm() const noexcept { return norm_; }
    const Vec& delta_mean() const noexcept { return delta_mean_; }
    const Vec& delta_std() const noexcept { return delta_std_; }
    const Vec& noise_std() const noexcept { return noise_std_; }
    void set_noise_std(Vec v) { noise_std_ = std::move(v); }

    Mat inputs(const Mat& S, const Mat& A) const {
        Mat X(state_dim() + action_dim(), S.cols());
        X.topRows(state_dim()) = (S.colwise() - norm_.state_mean).array().colwise() / norm_.state_std.array();
        X.bottomRows(action_dim()) = (A.colwise() - norm_.action_mean).array().colwise() / norm_.action_std.array();
        return X;
    }

    Mat mean_next_batch(const Mat& S, const Mat& A) const {
        const Mat d = net_.forward(inputs(S, A));
        return S + ((d.array().colwise() * delta_std_.array()).colwise() + delta_mean_.array()).matrix();
    }
    Vec mean_next(const Vec& s, const Vec& a) const { return mean_next_batch(Mat(s), Mat(a)).col(0); }

    Vec sample(const Vec& s, const Vec& a, RngStream& rng) const {
        Vec n = mean_next(s, a);
        for (Eigen::Index i = 0; i < n.size(); ++i) n(i) += noise_std_(i) * rng.normal();
        return n;
    }

    TransitionFn as_transition() const {
        return [this](const Vec& s, const Vec& a, RngStream& rng) { return sample(s, a, rng); };
    }

private:
    Mlp net_;
    NormStats norm_;
    Vec delta_mean_, delta_std_, noise_std_;
};

struct DynamicsTrainConfig {
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::relu;
    RegressionConfig fit{.steps = 10000, .batch_size = 128};
};

struct DynamicsFit {
    DynamicsModel model;
    RegressionResult curve;
};

/// Regresses s' - s on (s, a); the noise std is the per-coordinate residual
/// std on the training transitions.
inline DynamicsFit train_dynamics(const std::vector<Trajectory>& episodes, const DynamicsTrainConfig& cfg, RngStream rng) {
    if (episodes.empty()) throw PreconditionError("train_dynamics: empty dataset");
    const NormStats norm = NormStats::fit(episodes);
    const auto sd = episodes.front().state_dim(), ad = episodes.front().action_dim();
    Eigen::Index n = 0;
    for (const auto& e : episodes) n += e.length();
    if (n == 0) throw PreconditionError("train_dynamics: no transitions");
    Mat S(sd, n), A(ad, n), D(sd, n);
    Eigen::Index c = 0;
    for (const auto& e : episodes)
        for (Eigen::Index t = 0; t < e.length(); ++t, ++c) {
            S.col(c) = e.states.col(t);
            A.col(c) = e.actions.col(t);
            D.col(c) = e.states.col(t + 1) - e.states.col(t);
        }
    const Vec dm = D.rowwise().mean();
    const Vec ds = ((D.colwise() - dm).array().square().rowwise().mean().sqrt()).matrix().cwiseMax(NormStats::kStdFloor);

    std::vector<int> dims{static_cast<int>(sd + ad)};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(static_cast<int>(sd));
    DynamicsFit out;
    out.model = DynamicsModel(Mlp(dims, cfg.activation), norm, dm, ds, Vec::Zero(sd));
    const Mat Y = (D.colwise() - dm).array().colwise() / ds.array();
    out.curve = train_regression(out.model.net(), out.model.inputs(S, A), Y, cfg.fit, rng);
    const Mat resid = S + D - out.model.mean_next_batch(S, A);
    out.model.set_noise_std(resid.array().square().rowwise().mean().sqrt().matrix());
    return out;
}

inline void save_dynamics(const std::filesystem::path& path, const DynamicsModel& m) {
    KvText h;
    h.append("kind", "dynamics");
    h.append("state_dim", std::to_string(m.state_dim()));
    h.append("action_dim", std::to_string(m.action_dim()));
    put_norm(h, m.norm());
    h.append("delta_mean", detail::vec_text(m.delta_mean()));
    h.append("delta_std", detail::vec_text(m.delta_std()));
    h.append("noise_std", detail::vec_text(m.noise_std()));
    write_checkpoint(path, h, m.net());
}

inline DynamicsModel load_dynamics(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.header.get("kind") != "dynamics") throw FormatError("'" + path.string() + "' is not a dynamics checkpoint");
    const int sd = parse_number<int>(ck.header.get("state_dim")), ad = parse_number<int>(ck.header.get("action_dim"));
    return DynamicsModel(std::move(ck.net), get_norm(ck.header, sd, ad), detail::vec_from_text(ck.header.get("delta_mean"), sd, "delta_mean"),
                         detail::vec_from_text(ck.header.get("delta_std"), sd, "delta_std"),
                         detail::vec_from_text(ck.header.get("noise_std"), sd, "noise_std"));
}

struct MbConfig {
    int T = 128;
    double gamma = 0.99;
    int n_rollouts = 50;
    // States leaving [box_lo, box_hi] are clipped back and counted; empty = no box.
    Vec box_lo, box_hi;
};

struct MbEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_clipped = 0;
    std::vector<double> returns;
};

/// Autoregressive rollouts in a transition model: s_0 ~ d_0, a_t ~ pi, s_{t+1}
/// from `model`. Rollout i uses root.substream(i) exactly as rollout() does.
inline MbEstimate mb_estimate(const TransitionFn& model, const RewardFn& reward, const Policy& pi,
                              const Environment& env, const MbConfig& cfg, const RngStream& root) {
    if (cfg.T < 1 || cfg.n_rollouts < 1) throw PreconditionError("mb_estimate: T and n_rollouts must be positive");
    const bool boxed = cfg.box_lo.size() > 0;
    if (boxed && (cfg.box_lo.size() != env.state_dim() || cfg.box_hi.size() != env.state_dim()))
        throw DimensionError("mb_estimate: state box dims");
    MbEstimate out;
    for (int i = 0; i < cfg.n_rollouts; ++i) {
        const RngStream rng = root.substream(static_cast<std::uint64_t>(i));
        RngStream init = rng.substream(0xd0);
        Vec s = env.initial_state(init);
        double g = 0.0, disc = 1.0;
        for (int t = 0; t < cfg.T; ++t) {
            RngStream step = rng.substream(static_cast<std::uint64_t>(t));
            const Vec a = pi.sample(s, step);
            g += disc * reward(s, a);
            disc *= cfg.gamma;
            s = model(s, a, step);
            if (!s.allFinite()) throw NumericalError("mb_estimate: model produced a non-finite state at step " + std::to_string(t));
            if (boxed && ((s.array() < cfg.box_lo.array()).any() || (s.array() > cfg.box_hi.array()).any())) {
                s = s.cwiseMax(cfg.box_lo).cwiseMin(cfg.box_hi);
                ++out.n_clipped;
            }
        }
        out.returns.push_back(g);
    }
    const ValueEstimate v = mean_and_stderr(out.returns);
    out.estimate = v.value;
    out.std_error = v.std_error;
    return out;
}

} // namespace stitch

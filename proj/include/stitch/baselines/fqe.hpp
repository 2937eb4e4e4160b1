#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/io/checkpoint.hpp"
#include "stitch/numerics/adam.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// Input encoding for Q(t, s, a).
///   one_hot: index-coded tabular (s, a), one indicator per (t, s, a) cell.
///   normalized: [normalized s ; normalized a ; t / horizon].
struct QFeatures {
    enum class Kind { one_hot, normalized };
    Kind kind = Kind::normalized;
    int horizon = 1;
    int num_states = 0, num_actions = 0; // one_hot
    NormStats norm;                      // normalized

    static QFeatures one_hot(int num_states, int num_actions, int horizon) {
        QFeatures f;
        f.kind = Kind::one_hot;
        f.num_states = num_states;
        f.num_actions = num_actions;
        f.horizon = horizon;
        return f;
    }
    static QFeatures normalized(NormStats norm, int horizon) {
        QFeatures f;
        f.kind = Kind::normalized;
        f.norm = std::move(norm);
        f.horizon = horizon;
        return f;
    }

    int width() const {
        if (kind == Kind::one_hot) return horizon * num_states * num_actions;
        return static_cast<int>(norm.state_mean.size() + norm.action_mean.size()) + 1;
    }

    Vec operator()(int t, const Vec& s, const Vec& a) const {
        Vec x = Vec::Zero(width());
        if (kind == Kind::one_hot) {
            const int si = static_cast<int>(std::lround(s(0))), ai = static_cast<int>(std::lround(a(0)));
            if (t < 0 || t >= horizon || si < 0 || si >= num_states || ai < 0 || ai >= num_actions)
                throw PreconditionError("one-hot Q features: (t, s, a) out of range");
            x((t * num_states + si) * num_actions + ai) = 1.0;
        } else {
            const auto sd = norm.state_mean.size();
            x.head(sd) = norm.normalize_state(s);
            x.segment(sd, norm.action_mean.size()) = norm.normalize_action(a);
            x(x.size() - 1) = static_cast<double>(t) / horizon;
        }
        return x;
    }
};

/// Q^(t, s, a) = scale * net(features(t, s, a)).
class QModel {
public:
    QModel() = default;
    QModel(QFeatures feat, Mlp net, double scale) : feat_(std::move(feat)), net_(std::move(net)), scale_(scale) {
        if (net_.input_dim() != feat_.width() || net_.output_dim() != 1) throw DimensionError("Q network dims");
    }

    const QFeatures& features() const noexcept { return feat_; }
    const Mlp& net() const noexcept { return net_; }
    Mlp& net() noexcept { return net_; }
    double scale() const noexcept { return scale_; }

    double q(int t, const Vec& s, const Vec& a) const { return scale_ * net_.forward_one(feat_(t, s, a))(0); }

    /// E_{a ~ pi(.|s)} Q(t, s, a): exact for tabular policies, otherwise a
    /// mean over n_samples draws.
    double value(int t, const Vec& s, const Policy& pi, RngStream& rng, int n_samples = 8) const {
        return expected_q(net_, t, s, pi, rng, n_samples) * scale_;
    }

    /// Same expectation for an arbitrary parameter copy (the target network), in net units.
    double expected_q(const Mlp& net, int t, const Vec& s, const Policy& pi, RngStream& rng, int n_samples) const {
        if (const auto* tab = dynamic_cast<const TabularPolicy*>(&pi)) {
            const int si = static_cast<int>(std::lround(s(0)));
            double v = 0.0;
            for (int a = 0; a < tab->num_actions(); ++a) {
                const double p = tab->p(si, a);
                if (p > 0.0) v += p * net.forward_one(feat_(t, s, Vec::Constant(1, a)))(0);
            }
            return v;
        }
        double v = 0.0;
        for (int i = 0; i < n_samples; ++i) v += net.forward_one(feat_(t, s, pi.sample(s, rng)))(0);
        return v / n_samples;
    }

private:
    QFeatures feat_;
    Mlp net_;
    double scale_ = 1.0;
};

struct FqeConfig {
    std::vector<int> hidden{64, 64}; // empty = linear in the features
    Activation activation = Activation::relu;
    std::int64_t steps = 20000;
    int batch_size = 128;
    AdamConfig adam{.learning_rate = 1e-3, .weight_decay = 1e-4, .max_grad_norm = 1.0};
    bool cosine_lr = true;
    double tau = 0.005;         // target network moving-average rate
    int next_action_samples = 8;
    int log_every = 500;
    std::size_t residual_probe = 2000; // transitions used for the Bellman residual curve
};

struct FqeResult {
    double estimate = 0.0;
    double std_error = 0.0;
    QModel model;
    std::vector<double> loss_curve;
    std::vector<double> residual_curve; // mean squared Bellman residual of the online net
};

namespace detail {

struct Transition {
    std::size_t episode;
    int t;
    bool last; // no bootstrap after this step
};

inline std::vector<Transition> transitions(const std::vector<Trajectory>& data) {
    std::vector<Transition> out;
    for (std::size_t e = 0; e < data.size(); ++e) {
        const auto T = static_cast<int>(data[e].length());
        for (int t = 0; t < T; ++t)
            out.push_back({e, t, t + 1 == T || data[e].dones[static_cast<std::size_t>(t)]});
    }
    return out;
}

} // namespace detail

/// Fitted Q-evaluation: minibatch regression of Q(t, s, a) on
/// r + gamma * E_{a' ~ pi} Q_target(t + 1, s', a'), with a moving-average
/// target network. J^ averages E_{a ~ pi} Q(0, s_0, a) over the dataset's
/// initial states.
inline FqeResult fqe_estimate(const std::vector<Trajectory>& data, const Policy& pi, double gamma, QFeatures feat,
                              const FqeConfig& cfg, RngStream rng) {
    if (data.empty()) throw PreconditionError("fqe_estimate: empty dataset");
    if (cfg.tau <= 0.0 || cfg.tau >= 1.0) throw PreconditionError("fqe_estimate: tau must lie in (0, 1)");
    const auto trans = detail::transitions(data);
    if (trans.empty()) throw PreconditionError("fqe_estimate: no transitions");

    double r_max = 0.0;
    for (const auto& e : data) r_max = std::max(r_max, e.rewards.cwiseAbs().maxCoeff());
    int horizon = 0;
    for (const auto& e : data) horizon = std::max(horizon, static_cast<int>(e.length()));
    const double scale = std::max(r_max * (gamma < 1.0 ? (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma) : horizon), 1e-12);

    std::vector<int> dims{feat.width()};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(1);
    FqeResult res;
    res.model = QModel(std::move(feat), Mlp(dims, cfg.activation), scale);
    Mlp& net = res.model.net();
    RngStream init = rng.substream(0x1417);
    net.init(init);
    Mlp target = net;
    AdamState opt(net.num_params(), cfg.adam);

    // Fixed probe set for the residual curve.
    RngStream probe_rng = rng.substream(0x9b);
    std::vector<std::size_t> probe;
    for (std::size_t i = 0; i < std::min(cfg.residual_probe, trans.size()); ++i)
        probe.push_back(trans.size() <= cfg.residual_probe ? i : probe_rng.index(trans.size()));

    const int B = cfg.batch_size;
    Mat X(net.input_dim(), B);
    Mat Y(1, B);
    Vec grad(net.num_params());
    MlpTape tape;
    double block = 0.0;
    int block_n = 0;
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto& tr = trans[rng.index(trans.size())];
            const auto& ep = data[tr.episode];
            const Vec s = ep.states.col(tr.t), a = ep.actions.col(tr.t);
            X.col(b) = res.model.features()(tr.t, s, a);
            double y = ep.rewards(tr.t) / scale;
            if (!tr.last && gamma > 0.0)
                y += gamma * res.model.expected_q(target, tr.t + 1, ep.states.col(tr.t + 1), pi, rng, cfg.next_action_samples);
            Y(0, b) = y;
        }
        const Mat diff = net.forward(X, &tape) - Y;
        const double loss = diff.squaredNorm() / B;
        if (!std::isfinite(loss)) throw NumericalError("fqe diverged at step " + std::to_string(step));
        grad.setZero();
        net.backward(tape, (2.0 / B) * diff, &grad);
        opt.step(net.params(), grad, cfg.cosine_lr ? cosine_lr_scale(step, cfg.steps) : 1.0);
        target.params() = (1.0 - cfg.tau) * target.params() + cfg.tau * net.params();
        block += loss;
        if (++block_n == cfg.log_every || step + 1 == cfg.steps) {
            res.loss_curve.push_back(block / block_n);
            block = 0.0;
            block_n = 0;
            RngStream rr = rng.substream(0x8e5);
            double resid = 0.0;
            for (std::size_t i : probe) {
                const auto& tr = trans[i];
                const auto& ep = data[tr.episode];
                double y = ep.rewards(tr.t) / scale;
                if (!tr.last && gamma > 0.0)
                    y += gamma * res.model.expected_q(net, tr.t + 1, ep.states.col(tr.t + 1), pi, rr, cfg.next_action_samples);
                const double q = net.forward_one(res.model.features()(tr.t, ep.states.col(tr.t), ep.actions.col(tr.t)))(0);
                resid += (q - y) * (q - y);
            }
            res.residual_curve.push_back(resid * scale * scale / static_cast<double>(probe.size()));
        }
    }

    RngStream readout = rng.substream(0x7e);
    std::vector<double> v0;
    for (const auto& ep : data) v0.push_back(res.model.value(0, ep.states.col(0), pi, readout, cfg.next_action_samples));
    const ValueEstimate v = mean_and_stderr(v0);
    res.estimate = v.value;
    res.std_error = v.std_error;
    return res;
}

inline void save_q(const std::filesystem::path& path, const QModel& m) {
    KvText h;
    h.append("kind", "q");
    const auto& f = m.features();
    h.append("features", f.kind == QFeatures::Kind::one_hot ? "one_hot" : "normalized");
    h.append("horizon", std::to_string(f.horizon));
    if (f.kind == QFeatures::Kind::one_hot) {
        h.append("num_states", std::to_string(f.num_states));
        h.append("num_actions", std::to_string(f.num_actions));
    } else {
        h.append("state_dim", std::to_string(f.norm.state_mean.size()));
        h.append("action_dim", std::to_string(f.norm.action_mean.size()));
        put_norm(h, f.norm);
    }
    h.append("value_scale", format_exact(m.scale()));
    write_checkpoint(path, h, m.net());
}

inline QModel load_q(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.header.get("kind") != "q") throw FormatError("'" + path.string() + "' is not a Q checkpoint");
    const int H = parse_number<int>(ck.header.get("horizon"));
    QFeatures f;
    if (ck.header.get("features") == "one_hot") {
        f = QFeatures::one_hot(parse_number<int>(ck.header.get("num_states")), parse_number<int>(ck.header.get("num_actions")), H);
    } else {
        const int sd = parse_number<int>(ck.header.get("state_dim")), ad = parse_number<int>(ck.header.get("action_dim"));
        f = QFeatures::normalized(get_norm(ck.header, sd, ad), H);
    }
    return QModel(std::move(f), std::move(ck.net), parse_number<double>(ck.header.get("value_scale")));
}

} // namespace stitch

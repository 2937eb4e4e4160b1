#pragma once

#include <filesystem>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/error.hpp"
#include "stitch/io/checkpoint.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/regression.hpp"

namespace stitch {

/// Learned immediate reward R^(s, a). The network sees normalized (s, a) and
/// predicts a standardized reward.
class RewardModel {
public:
    RewardModel() = default;
    RewardModel(Mlp net, NormStats norm, double r_mean, double r_std)
        : net_(std::move(net)), norm_(std::move(norm)), r_mean_(r_mean), r_std_(r_std) {
        if (net_.input_dim() != norm_.state_mean.size() + norm_.action_mean.size() || net_.output_dim() != 1)
            throw DimensionError("reward network must map (s, a) to a scalar");
    }

    int state_dim() const { return static_cast<int>(norm_.state_mean.size()); }
    int action_dim() const { return static_cast<int>(norm_.action_mean.size()); }
    const Mlp& net() const noexcept { return net_; }
    Mlp& net() noexcept { return net_; }
    const NormStats& norm() const noexcept { return norm_; }
    double reward_mean() const noexcept { return r_mean_; }
    double reward_std() const noexcept { return r_std_; }

    Mat inputs(const Mat& S, const Mat& A) const {
        if (S.rows() != state_dim() || A.rows() != action_dim() || S.cols() != A.cols())
            throw DimensionError("reward model: (S, A) batch shape mismatch");
        Mat X(state_dim() + action_dim(), S.cols());
        X.topRows(state_dim()) = (S.colwise() - norm_.state_mean).array().colwise() / norm_.state_std.array();
        X.bottomRows(action_dim()) = (A.colwise() - norm_.action_mean).array().colwise() / norm_.action_std.array();
        return X;
    }

    /// One prediction per column.
    Vec predict_batch(const Mat& S, const Mat& A) const {
        return (net_.forward(inputs(S, A)).row(0).transpose().array() * r_std_ + r_mean_).matrix();
    }
    double predict(const Vec& s, const Vec& a) const { return predict_batch(Mat(s), Mat(a))(0); }

private:
    Mlp net_;
    NormStats norm_;
    double r_mean_ = 0.0;
    double r_std_ = 1.0;
};

struct RewardTrainConfig {
    std::vector<int> hidden{32, 32};
    Activation activation = Activation::relu;
    RegressionConfig fit{.steps = 5000, .batch_size = 64};
};

struct RewardFit {
    RewardModel model;
    RegressionResult curve;
};

/// Squared-error regression of r on (s, a) over every behavior transition.
inline RewardFit train_reward(const std::vector<Trajectory>& episodes, const RewardTrainConfig& cfg, RngStream rng) {
    if (episodes.empty()) throw PreconditionError("train_reward: empty dataset");
    const NormStats norm = NormStats::fit(episodes);
    std::size_t n = 0;
    for (const auto& e : episodes) n += static_cast<std::size_t>(e.length());
    if (n == 0) throw PreconditionError("train_reward: dataset has no transitions");
    const auto sd = episodes.front().state_dim(), ad = episodes.front().action_dim();
    Mat S(sd, static_cast<Eigen::Index>(n)), A(ad, static_cast<Eigen::Index>(n));
    Vec r(static_cast<Eigen::Index>(n));
    Eigen::Index c = 0;
    for (const auto& e : episodes)
        for (Eigen::Index t = 0; t < e.length(); ++t, ++c) {
            S.col(c) = e.states.col(t);
            A.col(c) = e.actions.col(t);
            r(c) = e.rewards(t);
        }
    const double r_mean = r.mean();
    const double r_std = std::max(std::sqrt((r.array() - r_mean).square().mean()), NormStats::kStdFloor);

    std::vector<int> dims{static_cast<int>(sd + ad)};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(1);
    RewardFit out;
    out.model = RewardModel(Mlp(dims, cfg.activation), norm, r_mean, r_std);
    const Mat X = out.model.inputs(S, A);
    const Mat Y = ((r.array() - r_mean) / r_std).matrix().transpose();
    out.curve = train_regression(out.model.net(), X, Y, cfg.fit, rng);
    return out;
}

inline void save_reward(const std::filesystem::path& path, const RewardModel& m) {
    KvText h;
    h.append("kind", "reward");
    h.append("state_dim", std::to_string(m.state_dim()));
    h.append("action_dim", std::to_string(m.action_dim()));
    put_norm(h, m.norm());
    h.append("reward_mean", format_exact(m.reward_mean()));
    h.append("reward_std", format_exact(m.reward_std()));
    write_checkpoint(path, h, m.net());
}

inline RewardModel load_reward(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.header.get("kind") != "reward") throw FormatError("'" + path.string() + "' is not a reward checkpoint");
    const int sd = parse_number<int>(ck.header.get("state_dim")), ad = parse_number<int>(ck.header.get("action_dim"));
    return RewardModel(std::move(ck.net), get_norm(ck.header, sd, ad), parse_number<double>(ck.header.get("reward_mean")),
                       parse_number<double>(ck.header.get("reward_std")));
}

} // namespace stitch

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "stitch/diffusion/denoiser.hpp"
#include "stitch/diffusion/sampler.hpp"
#include "stitch/envs/diffusion_policy.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/estimator/reward_model.hpp"
#include "stitch/estimator/stitch.hpp"
#include "stitch/io/checkpoint.hpp"

using namespace stitch;

namespace {

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

bool same_bits(const Mat& a, const Mat& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

std::vector<Trajectory> toy_data(const Environment& env, const Policy& beta, int n, std::uint64_t seed) {
    std::vector<Trajectory> out;
    for (int i = 0; i < n; ++i) out.push_back(rollout(env, beta, RngStream(seed, static_cast<std::uint64_t>(i)), env.horizon()));
    return out;
}

// Random-weight model over the linear toy; enough for structural checks.
DenoiserModel random_model(int w, WindowFrame frame = WindowFrame::absolute, int K = 10) {
    DenoiserModel m(WindowLayout{1, 1, w}, make_schedule(ScheduleKind::linear, K), NormStats::identity(1, 1), {16}, 16,
                    Activation::relu, frame);
    RngStream r(3, 3);
    m.net().init(r);
    return m;
}

PolicyPtr lin_policy(double gain, double bias, double sd) {
    return make_linear_gaussian_policy(Mat::Constant(1, 1, gain), Vec::Constant(1, bias), Vec::Constant(1, sd));
}

std::vector<RngStream> streams(std::uint64_t seed, int n) {
    std::vector<RngStream> r;
    for (int i = 0; i < n; ++i) r.push_back(RngStream(seed, static_cast<std::uint64_t>(i)));
    return r;
}

} // namespace

TEST(RewardModel, ConstantRewardIsRecovered) {
    Trajectory tr = make_trajectory(2, 1, 50);
    RngStream r(1, 0);
    tr.states = gaussian(r, 2, 51);
    tr.actions = gaussian(r, 1, 50);
    tr.rewards.setConstant(0.7);
    RewardTrainConfig cfg;
    cfg.fit.steps = 500;
    const auto fit = train_reward({tr}, cfg, RngStream(2, 0));
    const Mat S = gaussian(r, 2, 20), A = gaussian(r, 1, 20);
    EXPECT_LT((fit.model.predict_batch(S, A).array() - 0.7).abs().maxCoeff(), 1e-3);
}

TEST(RewardModel, FitsStatePlusAction) {
    RngStream r(3, 0);
    Trajectory tr = make_trajectory(1, 1, 2000);
    tr.states = gaussian(r, 1, 2001);
    tr.actions = gaussian(r, 1, 2000);
    for (Eigen::Index t = 0; t < 2000; ++t) tr.rewards(t) = tr.states(0, t) + tr.actions(0, t);
    RewardTrainConfig cfg;
    cfg.fit.steps = 5000;
    cfg.fit.adam.learning_rate = 3e-3;
    const auto fit = train_reward({tr}, cfg, RngStream(4, 0));
    const Mat S = gaussian(r, 1, 500), A = gaussian(r, 1, 500);
    const Vec err = fit.model.predict_batch(S, A) - (S + A).transpose();
    EXPECT_LT(err.squaredNorm() / 500.0, 1e-3);

    const auto again = train_reward({tr}, cfg, RngStream(4, 0));
    EXPECT_EQ(again.model.net().params(), fit.model.net().params());

    save_reward(tmp("stitch_reward.ckpt"), fit.model);
    const RewardModel back = load_reward(tmp("stitch_reward.ckpt"));
    EXPECT_LT((back.predict_batch(S, A) - fit.model.predict_batch(S, A)).cwiseAbs().maxCoeff(), 1e-5);
    std::filesystem::remove(tmp("stitch_reward.ckpt"));
}

TEST(Checkpoint, DenoiserRoundTripKeepsFrameAndFloat32Params) {
    for (auto frame : {WindowFrame::absolute, WindowFrame::relative}) {
        const DenoiserModel m = random_model(4, frame);
        save_denoiser(tmp("stitch_den.ckpt"), m);
        const DenoiserModel back = load_denoiser(tmp("stitch_den.ckpt"));
        EXPECT_EQ(back.frame(), frame);
        EXPECT_EQ(back.layout().w, 4);
        EXPECT_EQ(back.schedule().alphas(), m.schedule().alphas());
        const Vec p = m.net().params().cast<float>().cast<double>();
        EXPECT_EQ(back.net().params(), p);
        // saving the loaded model reproduces the file byte for byte
        save_denoiser(tmp("stitch_den2.ckpt"), back);
        std::ifstream a(tmp("stitch_den.ckpt"), std::ios::binary), b(tmp("stitch_den2.ckpt"), std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        EXPECT_EQ(sa, sb);
    }
    std::filesystem::remove(tmp("stitch_den.ckpt"));
    std::filesystem::remove(tmp("stitch_den2.ckpt"));
}

TEST(Checkpoint, TruncatedFileIsRejected) {
    save_denoiser(tmp("stitch_trunc.ckpt"), random_model(2));
    const auto size = std::filesystem::file_size(tmp("stitch_trunc.ckpt"));
    std::filesystem::resize_file(tmp("stitch_trunc.ckpt"), size - 3);
    EXPECT_THROW(load_denoiser(tmp("stitch_trunc.ckpt")), FormatError);
    std::filesystem::remove(tmp("stitch_trunc.ckpt"));
}

TEST(RelativeFrame, NormSkipsAnchorState) {
    WindowBatch wb;
    wb.layout = WindowLayout{1, 1, 2};
    wb.windows = (Mat(5, 2) << 0, 1, 10, 20, 2, 3, 30, 40, 4, 5).finished(); // s0 a0 s1 a1 s2
    wb.cond_states = wb.windows.topRows(1);
    wb.mask = Mat::Ones(5, 2);
    const NormStats rel = fit_window_norm(wb, WindowFrame::relative);
    const NormStats abs = fit_window_norm(wb, WindowFrame::absolute);
    EXPECT_DOUBLE_EQ(rel.state_mean(0), 3.0); // offsets from s0: {2, 4, 2, 4}
    EXPECT_DOUBLE_EQ(rel.state_std(0), 1.0);
    EXPECT_DOUBLE_EQ(abs.state_mean(0), 2.5); // {0..5}
    EXPECT_DOUBLE_EQ(rel.action_mean(0), 25.0);
}

TEST(RelativeFrame, EncodeDecodeRoundTrip) {
    const DenoiserModel m = random_model(3, WindowFrame::relative);
    RngStream r(9, 0);
    const Mat raw = gaussian(r, m.width(), 4), cond = raw.topRows(1);
    EXPECT_LT((m.decode(m.encode(raw, cond), cond) - raw).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(m.cond_dim(), 0);
}

TEST(RelativeFrame, SamplesTranslateWithTheAnchor) {
    const DenoiserModel m = random_model(3, WindowFrame::relative);
    auto r1 = streams(4, 3), r2 = streams(4, 3);
    const Mat cond = (Mat(1, 3) << 0.0, 1.0, -2.0).finished();
    const Mat a = guided_sample(m, cond, GuidanceSpec{}, r1);
    const Mat b = guided_sample(m, (cond.array() + 5.0).matrix(), GuidanceSpec{}, r2);
    const WindowLayout& L = m.layout();
    for (int u = 0; u <= L.w; ++u)
        EXPECT_LT(((b.row(L.state_offset(u)) - a.row(L.state_offset(u))).array() - 5.0).abs().maxCoeff(), 1e-12);
    for (int u = 0; u < L.w; ++u) EXPECT_LT((b.row(L.action_offset(u)) - a.row(L.action_offset(u))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stitch, FullWindowIsBitwiseFullTrajectory) {
    const LinearGaussianEnv env;
    const DenoiserModel m = random_model(8);
    StitchConfig cfg;
    cfg.w = 8;
    cfg.T = 8;
    cfg.guidance = {0.5, 0.25, true, lin_policy(-0.5, 0.2, 0.3), lin_policy(0.1, 0.0, 0.5)};
    const auto rngs = streams(11, 6);
    const auto s = stitch_rollouts(m, env_reward(env), cfg, env, rngs);
    const auto f = full_trajectory_rollouts(m, env_reward(env), cfg, env, rngs);
    for (std::size_t i = 0; i < rngs.size(); ++i) {
        EXPECT_TRUE(same_bits(s.trajectories[i].states, f.trajectories[i].states));
        EXPECT_TRUE(same_bits(s.trajectories[i].actions, f.trajectories[i].actions));
        EXPECT_EQ(std::memcmp(&s.returns[i], &f.returns[i], sizeof(double)), 0);
    }
}

TEST(Stitch, MatchesManualWindowChaining) {
    const LinearGaussianEnv env;
    const DenoiserModel m = random_model(4);
    StitchConfig cfg;
    cfg.w = 4;
    cfg.T = 12;
    const auto rngs = streams(12, 3);
    const auto s = stitch_rollouts(m, env_reward(env), cfg, env, rngs);
    Mat cond(1, 3);
    for (int i = 0; i < 3; ++i) {
        RngStream init = rngs[static_cast<std::size_t>(i)].substream(0xd0);
        cond.col(i) = env.initial_state(init);
    }
    for (int t = 0; t < 3; ++t) {
        std::vector<RngStream> wr;
        for (const auto& r : rngs) wr.push_back(r.substream(1 + static_cast<std::uint64_t>(t)));
        const Mat X = guided_sample(m, cond, GuidanceSpec{}, wr);
        for (int i = 0; i < 3; ++i) {
            const auto& tr = s.trajectories[static_cast<std::size_t>(i)];
            EXPECT_EQ(tr.states(0, 4 * t), X(0, i)); // window starts where the last one ended
            for (int u = 0; u < 4; ++u) EXPECT_EQ(tr.actions(0, 4 * t + u), X(m.layout().action_offset(u), i));
        }
        cond = X.bottomRows(1);
    }
}

TEST(Stitch, ZeroDiscountIsFirstReward) {
    const LinearGaussianEnv env;
    const DenoiserModel m = random_model(2);
    StitchConfig cfg;
    cfg.w = 2;
    cfg.T = 6;
    cfg.gamma = 0.0;
    const auto rngs = streams(13, 4);
    const auto s = stitch_rollouts(m, env_reward(env), cfg, env, rngs);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& tr = s.trajectories[i];
        EXPECT_EQ(s.returns[i], env.reward(tr.states.col(0), tr.actions.col(0)));
    }
}

TEST(Stitch, IdenticalTargetsAndWorkerCountsAgree) {
    const LinearGaussianEnv env;
    const DenoiserModel m = random_model(4);
    StitchConfig cfg;
    cfg.w = 4;
    cfg.T = 16;
    cfg.n_rollouts = 23;
    cfg.chunk = 5;
    cfg.guidance = {0.5, 0.25, true, nullptr, nullptr};
    const auto beta = lin_policy(0.0, 0.0, 0.5);
    const auto pi = lin_policy(-0.5, 0.1, 0.3);
    const std::vector<NamedPolicy> targets{{"a", pi}, {"b", pi}};
    const auto one = evaluate_policies(m, env_reward(env), cfg, env, targets, beta, RngStream(14, 0));
    EXPECT_EQ(one[0].estimate, one[1].estimate);
    cfg.workers = 3;
    const auto three = evaluate_policies(m, env_reward(env), cfg, env, targets, beta, RngStream(14, 0));
    EXPECT_EQ(one[0].returns, three[0].returns);
    EXPECT_EQ(one[0].n_rollouts, 23u);
}

TEST(Stitch, RejectsIncompatibleConfig) {
    const LinearGaussianEnv env;
    const DenoiserModel m = random_model(4);
    StitchConfig cfg;
    cfg.w = 4;
    cfg.T = 10;
    const auto rngs = streams(1, 1);
    EXPECT_THROW(stitch_rollouts(m, env_reward(env), cfg, env, rngs), PreconditionError);
    cfg.T = 8;
    cfg.w = 2;
    EXPECT_THROW(stitch_rollouts(m, env_reward(env), cfg, env, rngs), PreconditionError);
}

namespace {

struct TrainedToy {
    LinearGaussianEnv env;
    PolicyPtr beta = lin_policy(-0.5, 0.0, 0.3);
    DenoiserModel model;
};

const TrainedToy& trained_toy() {
    static const TrainedToy toy = [] {
        TrainedToy t;
        const auto data = toy_data(t.env, *t.beta, 200, 31);
        const WindowBatch wb = slice_windows(data, 4, 1);
        // mean-reverting dynamics: the absolute state matters
        t.model = DenoiserModel(wb.layout, make_schedule(ScheduleKind::linear, 32), fit_window_norm(wb, WindowFrame::absolute),
                                {64, 64}, 16, Activation::relu, WindowFrame::absolute);
        DenoiserTrainConfig cfg;
        cfg.steps = 4000;
        train_denoiser(t.model, wb, cfg, RngStream(32, 0));
        return t;
    }();
    return toy;
}

} // namespace

TEST(StitchTrained, UnguidedReturnTracksBehaviorValue) {
    const auto& toy = trained_toy();
    StitchConfig cfg;
    cfg.w = 4;
    cfg.T = 16;
    cfg.gamma = toy.env.gamma();
    cfg.n_rollouts = 200;
    const auto est = evaluate_policies(toy.model, env_reward(toy.env), cfg, toy.env, {{"beta", toy.beta}}, toy.beta,
                                       RngStream(33, 0));
    const auto gt = ground_truth_value(toy.env, *toy.beta, 20000, RngStream(34, 0));
    EXPECT_NEAR(est[0].estimate, gt.value, 0.1 * std::abs(gt.value));
}

TEST(StitchTrained, GuidanceMovesActionsMonotonically) {
    const auto& toy = trained_toy();
    const auto pi = lin_policy(-0.5, 0.6, 0.3); // same gain, shifted up
    std::vector<double> means;
    for (double alpha : {0.0, 0.1, 0.5}) {
        StitchConfig cfg;
        cfg.w = 4;
        cfg.T = 16;
        cfg.guidance = {alpha, 0.0, true, pi, toy.beta};
        const auto rngs = streams(35, 100);
        const auto b = stitch_rollouts(toy.model, env_reward(toy.env), cfg, toy.env, rngs);
        double m = 0.0;
        for (const auto& tr : b.trajectories) m += tr.actions.mean() / 100.0;
        means.push_back(m);
    }
    EXPECT_LT(means[0], means[1]);
    EXPECT_LT(means[1], means[2]);
}

TEST(DiffusionPolicy, ScoreMatchesGaussianAtLowestNoise) {
    // pi(a|s) = N(c s, sp^2); exact eps at k = 1 is sigma_1 (a - sqrt(abar_1) c s) / v.
    const double c = 0.8, sp = 0.4;
    const auto sched = make_schedule(ScheduleKind::linear, 50);
    const double ab = sched.alpha_bar(1), s1 = sched.sigma(1);
    const double v = ab * sp * sp + s1 * s1;
    Mlp net({1 + 16 + 1, 1}, Activation::identity);
    net.params().setZero();
    net.weight(0)(0, 0) = s1 / v;
    net.weight(0)(0, 17) = -s1 * std::sqrt(ab) * c / v;
    auto den = std::make_shared<ActionDenoiser>(1, 1, sched, net, 16);
    const DiffusionPolicyAdapter adapter(den);
    const auto gauss = lin_policy(c, 0.0, sp);
    EXPECT_FALSE(adapter.has_density());
    EXPECT_THROW(adapter.log_prob(Vec::Zero(1), Vec::Zero(1)), PreconditionError);
    for (double s : {-1.0, 0.0, 0.7})
        for (double a : {-0.5, 0.3, 1.1}) {
            const Vec sv = Vec::Constant(1, s), av = Vec::Constant(1, a);
            const double want = gauss->score(sv, av).d_action(0);
            const double got = adapter.score(sv, av).d_action(0);
            if (std::abs(want) > 1e-3) {
                EXPECT_NEAR(got, want, 0.05 * std::abs(want)) << s << "," << a;
            }
            EXPECT_EQ(adapter.score(sv, av).d_state.norm(), 0.0);
        }
}

TEST(DiffusionPolicy, BehaviorCloningLearnsActionMean) {
    RngStream r(40, 0);
    const Mat S = gaussian(r, 1, 2000);
    Mat A = 0.8 * S;
    for (Eigen::Index i = 0; i < A.cols(); ++i) A(0, i) += 0.3 * r.normal();
    auto den = std::make_shared<ActionDenoiser>(1, 1, make_schedule(ScheduleKind::linear, 20), std::vector<int>{64, 64});
    const auto curve = train_action_denoiser(*den, S, A, 3000, 128, AdamConfig{.learning_rate = 2e-3}, RngStream(41, 0));
    EXPECT_LT(curve.back(), curve.front());
    const DiffusionPolicyAdapter adapter(den);
    RngStream sr(42, 0);
    double m = 0.0;
    for (int i = 0; i < 2000; ++i) m += adapter.sample(Vec::Constant(1, 1.0), sr)(0) / 2000.0;
    EXPECT_NEAR(m, 0.8, 0.1);
}

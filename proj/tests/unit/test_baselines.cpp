#include <gtest/gtest.h>

#include <cmath>

#include "stitch/baselines/doubly_robust.hpp"
#include "stitch/baselines/fqe.hpp"
#include "stitch/baselines/importance.hpp"
#include "stitch/baselines/model_based.hpp"
#include "stitch/envs/environment.hpp"

using namespace stitch;

namespace {

TabularMdp small_mdp(std::uint64_t seed, int S = 3, int A = 2, int H = 4, double gamma = 0.9) {
    RngStream r(seed, 7);
    return TabularMdp::random(S, A, H, gamma, r);
}

TabularPolicy random_policy(int S, int A, RngStream& r) {
    std::vector<std::vector<double>> t;
    for (int s = 0; s < S; ++s) {
        std::vector<double> row;
        double sum = 0.0;
        for (int a = 0; a < A; ++a) sum += row.emplace_back(0.2 + r.uniform());
        for (auto& p : row) p /= sum;
        t.push_back(row);
    }
    return TabularPolicy(t);
}

std::vector<Trajectory> collect(const Environment& env, const Policy& beta, std::size_t n, std::uint64_t seed) {
    const RngStream root(seed, 1);
    std::vector<Trajectory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(rollout(env, beta, root.substream(i), env.horizon()));
    return out;
}

// Two deterministic-transition steps: s=0 then s=1, action 0 both times.
std::vector<Trajectory> hand_episode() {
    Trajectory tr = make_trajectory(1, 1, 2);
    tr.states << 0, 1, 1;
    tr.actions << 0, 0;
    tr.rewards << 1, 1;
    return {tr};
}

} // namespace

TEST(Pdis, HandExample) {
    const TabularPolicy pi({{0.5, 0.5}, {0.25, 0.75}});
    const TabularPolicy beta({{0.25, 0.75}, {0.5, 0.5}});
    // rho_0 = 2, rho_1 = 0.5: 2*1 + 0.5*(2*0.5)*1
    EXPECT_DOUBLE_EQ(pdis_estimate(hand_episode(), pi, beta, 0.5).estimate, 2.5);
}

TEST(Pdis, OnPolicyIsMeanDiscountedReturn) {
    const auto mdp = small_mdp(3);
    RngStream r(5, 0);
    const auto beta = random_policy(mdp.num_states, mdp.num_actions, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 500, 11);
    double mean = 0.0;
    for (const auto& e : data) mean += e.discounted_return(mdp.gamma);
    mean /= static_cast<double>(data.size());
    EXPECT_NEAR(pdis_estimate(data, beta, beta, mdp.gamma).estimate, mean, 1e-12);
}

TEST(Pdis, TabularWithinThreeStandardErrors) {
    const auto mdp = small_mdp(4);
    RngStream r(6, 0);
    const auto beta = random_policy(mdp.num_states, mdp.num_actions, r);
    const auto pi = random_policy(mdp.num_states, mdp.num_actions, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 100000, 12);
    const auto est = pdis_estimate(data, pi, beta, mdp.gamma);
    EXPECT_LE(std::abs(est.estimate - mdp.value(pi)), 3.0 * est.std_error);
    EXPECT_EQ(est.n_clipped, 0u);
}

TEST(Pdis, ZeroBehaviorDensityNamesTransition) {
    const TabularPolicy pi({{0.5, 0.5}, {0.5, 0.5}});
    const TabularPolicy beta({{1.0, 0.0}, {0.0, 1.0}}); // step 1 takes action 0 at s=1
    try {
        pdis_estimate(hand_episode(), pi, beta, 0.5);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("episode 0, step 1"), std::string::npos);
    }
}

TEST(Pdis, ClipIsCounted) {
    const TabularPolicy pi({{0.5, 0.5}, {0.25, 0.75}});
    const TabularPolicy beta({{0.25, 0.75}, {0.5, 0.5}});
    const auto est = pdis_estimate(hand_episode(), pi, beta, 0.5, 1.5);
    EXPECT_EQ(est.n_clipped, 1u);
    EXPECT_DOUBLE_EQ(est.estimate, 1.5 + 0.5 * 0.75);
}

TEST(ModelBased, OracleDynamicsReproducesEnvironmentRollouts) {
    const LinearGaussianEnv env;
    const auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    MbConfig cfg;
    cfg.T = env.horizon();
    cfg.gamma = env.gamma();
    cfg.n_rollouts = 400;
    const TransitionFn oracle = [&env](const Vec& s, const Vec& a, RngStream& rng) { return env.step(s, a, rng).next_state; };
    const RewardFn reward = [&env](const Vec& s, const Vec& a) { return env.reward(s, a); };
    const RngStream root(21, 0);
    const auto est = mb_estimate(oracle, reward, *pi, env, cfg, root);
    const auto gt = ground_truth_value(env, *pi, 400, root);
    EXPECT_DOUBLE_EQ(est.estimate, gt.value); // same streams as rollout()
    const auto far = ground_truth_value(env, *pi, 20000, RngStream(99, 0));
    EXPECT_LE(std::abs(est.estimate - far.value), 2.0 * std::hypot(est.std_error, far.std_error));
}

TEST(ModelBased, ZeroRewardIsZeroAndRerunIsIdentical) {
    const LinearGaussianEnv env;
    const auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    const auto data = collect(env, *pi, 200, 3);
    DynamicsTrainConfig dc;
    dc.fit.steps = 500;
    const auto fit = train_dynamics(data, dc, RngStream(1, 2));
    MbConfig cfg;
    cfg.T = 16;
    cfg.gamma = 0.95;
    const RewardFn zero = [](const Vec&, const Vec&) { return 0.0; };
    EXPECT_EQ(mb_estimate(fit.model.as_transition(), zero, *pi, env, cfg, RngStream(4, 0)).estimate, 0.0);
    const RewardFn rw = [&env](const Vec& s, const Vec& a) { return env.reward(s, a); };
    const auto a = mb_estimate(fit.model.as_transition(), rw, *pi, env, cfg, RngStream(4, 0));
    const auto b = mb_estimate(fit.model.as_transition(), rw, *pi, env, cfg, RngStream(4, 0));
    EXPECT_EQ(a.estimate, b.estimate);
}

TEST(ModelBased, LearnedLinearDynamicsRecoverCoefficients) {
    const LinearGaussianEnv env;
    const auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    const auto data = collect(env, *pi, 300, 8);
    DynamicsTrainConfig dc;
    dc.hidden = {};
    dc.activation = Activation::identity;
    dc.fit.steps = 4000;
    dc.fit.adam.learning_rate = 1e-2;
    const auto fit = train_dynamics(data, dc, RngStream(2, 2));
    const Vec s = Vec::Constant(1, 0.5), a = Vec::Constant(1, -0.2);
    EXPECT_NEAR(fit.model.mean_next(s, a)(0), 0.9 * 0.5 + 0.3 * -0.2, 0.01);
    EXPECT_NEAR(fit.model.noise_std()(0), 0.1, 0.01);
}

TEST(Fqe, TabularMatchesDynamicProgramming) {
    auto mdp = small_mdp(9, 2, 2, 3, 0.9);
    RngStream r(10, 0);
    const auto beta = random_policy(2, 2, r);
    const auto pi = random_policy(2, 2, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 20000, 13);
    FqeConfig cfg;
    cfg.hidden = {};
    cfg.activation = Activation::identity;
    cfg.steps = 20000;
    cfg.batch_size = 256;
    cfg.adam.weight_decay = 0.0;
    const auto res = fqe_estimate(data, pi, mdp.gamma, QFeatures::one_hot(2, 2, 3), cfg, RngStream(3, 3));
    const auto q = mdp.q_values(pi);
    double sup = 0.0;
    for (int t = 0; t < 3; ++t)
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a)
                sup = std::max(sup, std::abs(res.model.q(t, Vec::Constant(1, s), Vec::Constant(1, a)) - q[t][s][a]));
    EXPECT_LE(sup, 0.02);
    EXPECT_NEAR(res.estimate, mdp.value(pi), 0.02);

    // Residual curve: no rise above 5% over the second half of training.
    const auto& rc = res.residual_curve;
    ASSERT_GE(rc.size(), 4u);
    for (std::size_t i = rc.size() / 2 + 1; i < rc.size(); ++i) EXPECT_LE(rc[i], rc[i - 1] * 1.05) << "at block " << i;
}

TEST(Fqe, ZeroDiscountRegressesImmediateReward) {
    auto mdp = small_mdp(14, 2, 2, 2, 0.9);
    RngStream r(15, 0);
    const auto beta = random_policy(2, 2, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 5000, 16);
    FqeConfig cfg;
    cfg.hidden = {};
    cfg.activation = Activation::identity;
    cfg.steps = 6000;
    cfg.adam.learning_rate = 1e-2;
    cfg.adam.weight_decay = 0.0;
    const auto res = fqe_estimate(data, beta, 0.0, QFeatures::one_hot(2, 2, 2), cfg, RngStream(1, 1));
    double j0 = 0.0;
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) j0 += mdp.initial[s] * beta.p(s, a) * mdp.reward[s][a];
    // readout averages over the dataset's initial states
    EXPECT_NEAR(res.estimate, j0, 0.02);
}

TEST(Fqe, RerunIsIdenticalAndCheckpointRoundTrips) {
    const LinearGaussianEnv env;
    const auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    const auto data = collect(env, *pi, 50, 5);
    FqeConfig cfg;
    cfg.steps = 300;
    cfg.hidden = {16};
    const auto feat = QFeatures::normalized(NormStats::fit(data), env.horizon());
    const auto a = fqe_estimate(data, *pi, env.gamma(), feat, cfg, RngStream(7, 7));
    const auto b = fqe_estimate(data, *pi, env.gamma(), feat, cfg, RngStream(7, 7));
    EXPECT_EQ(a.estimate, b.estimate);
    const auto path = std::filesystem::temp_directory_path() / "stitch_q_roundtrip.ckpt";
    save_q(path, a.model);
    const QModel m = load_q(path);
    const Vec s = Vec::Constant(1, 0.7), act = Vec::Constant(1, 0.1);
    EXPECT_NEAR(m.q(3, s, act), a.model.q(3, s, act), 1e-5 * std::max(1.0, std::abs(a.model.q(3, s, act))));
    std::filesystem::remove(path);
}

TEST(DoublyRobust, ZeroModelsReduceToPdis) {
    const auto mdp = small_mdp(17);
    RngStream r(18, 0);
    const auto beta = random_policy(mdp.num_states, mdp.num_actions, r);
    const auto pi = random_policy(mdp.num_states, mdp.num_actions, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 2000, 19);
    const auto p = pdis_estimate(data, pi, beta, mdp.gamma);
    const auto d = dr_estimate(data, pi, beta, mdp.gamma, zero_q(), zero_v());
    EXPECT_NEAR(d.estimate, p.estimate, 1e-12);
}

TEST(DoublyRobust, OracleModelsAreExactOnDeterministicMdp) {
    // Deterministic start and transitions: every TD correction vanishes.
    TabularMdp mdp;
    mdp.num_states = 3;
    mdp.num_actions = 2;
    mdp.horizon = 4;
    mdp.gamma = 0.8;
    mdp.initial = {1.0, 0.0, 0.0};
    mdp.transition = {{{0, 1, 0}, {0, 0, 1}}, {{1, 0, 0}, {0, 0, 1}}, {{0, 1, 0}, {1, 0, 0}}};
    mdp.reward = {{0.1, 0.7}, {0.4, 0.2}, {0.9, 0.3}};
    RngStream r(20, 0);
    const auto beta = random_policy(3, 2, r);
    const auto pi = random_policy(3, 2, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 200, 21);
    const auto d = dr_estimate(data, pi, beta, mdp.gamma, tabular_q(mdp, pi), tabular_v(mdp, pi));
    EXPECT_NEAR(d.estimate, mdp.value(pi), 1e-12);
    for (double v : d.per_episode) EXPECT_NEAR(v, mdp.value(pi), 1e-12);
}

TEST(DoublyRobust, OracleModelsWithinThreeStandardErrors) {
    const auto mdp = small_mdp(22);
    RngStream r(23, 0);
    const auto beta = random_policy(mdp.num_states, mdp.num_actions, r);
    const auto pi = random_policy(mdp.num_states, mdp.num_actions, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 20000, 24);
    const auto d = dr_estimate(data, pi, beta, mdp.gamma, tabular_q(mdp, pi), tabular_v(mdp, pi));
    EXPECT_LE(std::abs(d.estimate - mdp.value(pi)), 3.0 * d.std_error);
    // oracle control variates shrink the spread well below PDIS
    EXPECT_LT(d.std_error, pdis_estimate(data, pi, beta, mdp.gamma).std_error);
}

TEST(DoublyRobust, OnPolicyBoundedQWithinThreeStandardErrors) {
    const auto mdp = small_mdp(25);
    RngStream r(26, 0);
    const auto beta = random_policy(mdp.num_states, mdp.num_actions, r);
    const TabularEnv env(mdp);
    const auto data = collect(env, beta, 100000, 27);
    const QFn q = [](int t, const Vec& s, const Vec& a) { return 0.3 * t - 0.5 * s(0) + a(0); };
    const VFn v = [&](int t, const Vec& s, RngStream&) {
        double x = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) x += beta.p(static_cast<int>(s(0)), a) * q(t, s, Vec::Constant(1, a));
        return x;
    };
    const auto d = dr_estimate(data, beta, beta, mdp.gamma, q, v);
    EXPECT_LE(std::abs(d.estimate - mdp.value(beta)), 3.0 * d.std_error);
}

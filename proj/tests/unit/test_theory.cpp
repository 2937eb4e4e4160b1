#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "stitch/envs/policy.hpp"
#include "stitch/theory/bound.hpp"
#include "stitch/theory/entropy.hpp"
#include "stitch/theory/tempered.hpp"

using namespace stitch;

namespace {

// Direct transcription of the displayed bound, kept apart from mse_bound.
double bound_oracle(double R, double g, int w, int T, double k, double d, double var) {
    double B = 0.0;
    for (int i = 0; i < w; ++i) B += R * std::pow(g, i);
    const double kw = std::pow(k, w);
    const double first = 2.0 * B / (1.0 - std::pow(g, w)) * kw * d;
    return first * first + 10.0 * (double(T) / w) * (double(T) / w) * B * B * kw * d +
           8.0 * B * B * kw * d / (1.0 - std::pow(g, 2 * w)) + var;
}

TabularPolicy random_tabular(int S, int A, RngStream& r) {
    std::vector<std::vector<double>> t;
    for (int s = 0; s < S; ++s) {
        std::vector<double> row;
        double sum = 0.0;
        for (int a = 0; a < A; ++a) sum += row.emplace_back(r.uniform() + 1e-3);
        for (auto& p : row) p /= sum;
        t.push_back(row);
    }
    return TabularPolicy(t);
}

// Brute-force entropy of the future given S_t only, from p(path) without
// reusing the checker's bookkeeping: H(tau|S_t) = sum_s p(s) H(tau | S_t = s).
double h_future_given_state(const TabularMdp& m, const std::vector<TabularPolicy>& pis, const std::vector<double>& wts,
                            int t, int H) {
    std::map<std::vector<int>, double> joint; // key: (S_t, A_t, ..., S_H)
    std::vector<int> path;
    std::function<void(int, std::vector<double>)> go = [&](int d, std::vector<double> pu) {
        if (d == H) {
            double p = 0.0;
            for (std::size_t u = 0; u < pis.size(); ++u) p += wts[u] * pu[u];
            std::vector<int> key(path.begin() + 2 * t, path.end());
            joint[key] += p;
            return;
        }
        const int s = path.back();
        for (int a = 0; a < m.num_actions; ++a)
            for (int n = 0; n < m.num_states; ++n) {
                std::vector<double> nx(pu);
                for (std::size_t u = 0; u < pis.size(); ++u) nx[u] *= pis[u].p(s, a) * m.transition[s][a][n];
                path.push_back(a);
                path.push_back(n);
                go(d + 1, nx);
                path.resize(path.size() - 2);
            }
    };
    for (int s0 = 0; s0 < m.num_states; ++s0) {
        path = {s0};
        go(0, std::vector<double>(pis.size(), m.initial[s0]));
    }
    std::map<int, double> ps;
    for (const auto& [k, p] : joint) ps[k[0]] += p;
    double h = 0.0;
    for (const auto& [k, p] : joint)
        if (p > 0.0) h -= p * std::log(p / ps[k[0]]);
    return h;
}

} // namespace

TEST(Bound, BwValues) {
    EXPECT_DOUBLE_EQ(b_w(2.0, 0.99, 1), 2.0);
    EXPECT_NEAR(b_w(1.0, 0.99, 8), 7.72553, 1e-5);
    EXPECT_DOUBLE_EQ(b_w(3.0, 0.0, 5), 3.0);
    EXPECT_THROW(b_w(1.0, 1.0, 2), PreconditionError);
}

TEST(Bound, HandExample) {
    const auto b = mse_bound({.r_max = 1, .gamma = 0.5, .w = 2, .T = 4, .kappa = 1, .delta_beta = 0.01, .var_j = 0});
    EXPECT_NEAR(b.b_w, 1.5, 1e-12);
    EXPECT_NEAR(b.bias_sq, 0.0016, 1e-12);
    EXPECT_NEAR(b.variance, 1.092, 1e-12);
    EXPECT_NEAR(b.total, 1.0936, 1e-12);
}

TEST(Bound, MatchesIndependentTranscription) {
    RngStream r(3, 0);
    for (int i = 0; i < 200; ++i) {
        const int w = 1 << (i % 4);
        const int T = w * (1 + static_cast<int>(r.index(8)));
        BoundInputs in{.r_max = 2 * r.uniform(), .gamma = 0.99 * r.uniform(), .w = w, .T = T,
                       .kappa = 1 + r.uniform(), .delta_beta = 0.1 * r.uniform(), .var_j = r.uniform()};
        const double o = bound_oracle(in.r_max, in.gamma, w, T, in.kappa, in.delta_beta, in.var_j);
        EXPECT_NEAR(mse_bound(in).total, o, 1e-12 * std::max(1.0, o));
    }
}

TEST(Bound, PerfectModelLeavesVariance) {
    EXPECT_DOUBLE_EQ(mse_bound({.kappa = 3, .delta_beta = 0, .var_j = 0.37}).total, 0.37);
}

TEST(Bound, MonotoneInKappaWAndDelta) {
    BoundInputs in{.r_max = 1, .gamma = 0.9, .w = 2, .T = 16, .kappa = 1.5, .delta_beta = 0.02, .var_j = 0.1};
    double prev = mse_bound(in).total;
    for (double k : {1.6, 2.0, 3.0}) {
        in.kappa = k;
        const double cur = mse_bound(in).total;
        EXPECT_GE(cur, prev);
        prev = cur;
    }
    in.kappa = 1.5;
    const auto rep = empirical_mse_check({0.1}, 0.0, in, {1, 2, 4, 8, 16});
    for (std::size_t i = 1; i < rep.w_curve.size(); ++i) EXPECT_GT(rep.w_curve[i].second, rep.w_curve[i - 1].second);
    const double full = mse_bound(in).total;
    in.delta_beta /= 2;
    EXPECT_LT(mse_bound(in).total, full);
}

TEST(Bound, EmpiricalCheckReportsVerdict) {
    const BoundInputs in{.r_max = 1, .gamma = 0.5, .w = 2, .T = 4, .kappa = 1, .delta_beta = 0.01, .var_j = 0};
    const auto ok = empirical_mse_check({1.0, 2.0}, 1.5, in, {1, 2, 4});
    EXPECT_DOUBLE_EQ(ok.empirical_mse, 0.25);
    EXPECT_TRUE(ok.holds);
    EXPECT_FALSE(empirical_mse_check({3.0}, 1.0, in, {}).holds);
    EXPECT_THROW(empirical_mse_check({}, 1.0, in, {}), PreconditionError);
}

TEST(Bound, KappaOfIdenticalPoliciesIsOne) {
    const auto p = make_linear_gaussian_policy(Mat::Constant(1, 1, 0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    const Mat S = Mat::Random(1, 20), A = Mat::Random(1, 20);
    EXPECT_NEAR(estimate_kappa(*p, *p, S, A, 4, RngStream(1, 1)), 1.0, 1e-12);
    // same mean, half the std: sup ratio is 2 at the mean and the samples get close
    const auto q = make_linear_gaussian_policy(Mat::Constant(1, 1, 0.5), Vec::Zero(1), Vec::Constant(1, 0.15));
    const double k = estimate_kappa(*q, *p, S, A, 50, RngStream(1, 1));
    EXPECT_LE(k, 2.0 + 1e-12);
    EXPECT_GT(k, 1.8);
}

TEST(Bound, KsProjectionSurrogate) {
    RngStream r(2, 0);
    const Mat a = gaussian(r, 3, 4000), b = gaussian(r, 3, 4000);
    EXPECT_LT(ks_projection_distance(a, b, 8, RngStream(5, 0)), 0.05);
    Mat c = b;
    c.row(1).array() += 1.0;
    EXPECT_GT(ks_projection_distance(a, c, 8, RngStream(5, 0)), 0.3);
}

TEST(Entropy, DeterministicInstanceIsZeroWithEquality) {
    TabularMdp m;
    m.num_states = 2;
    m.num_actions = 2;
    m.horizon = 4;
    m.initial = {1, 0};
    m.transition = {{{1, 0}, {0, 1}}, {{0, 1}, {1, 0}}};
    m.reward = {{0, 0}, {0, 0}};
    const TabularPolicy pi({{0, 1}, {1, 0}});
    for (int t = 0; t <= 4; ++t) {
        const auto e = entropy_inequality_check(m, pi, t, 4);
        EXPECT_NEAR(e.h_given_state, 0.0, 1e-15);
        EXPECT_NEAR(e.h_given_history, 0.0, 1e-15);
        EXPECT_TRUE(e.holds);
    }
}

TEST(Entropy, MarkovChainHasEquality) {
    // S_t carries everything the history knows about the future.
    TabularMdp m;
    m.num_states = 2;
    m.num_actions = 1;
    m.horizon = 4;
    m.initial = {0.5, 0.5};
    m.transition = {{{0.7, 0.3}}, {{0.3, 0.7}}};
    m.reward = {{0}, {0}};
    const TabularPolicy pi({{1}, {1}});
    const auto e = entropy_inequality_check(m, pi, 2, 4);
    EXPECT_NEAR(e.slack, 0.0, 1e-12);
    EXPECT_GT(e.h_given_state, 0.5);
}

TEST(Entropy, RandomInstancesHoldAndMatchBruteForce) {
    RngStream r(11, 0);
    double min_slack = 1.0;
    int strict = 0;
    for (int i = 0; i < 100; ++i) {
        const int S = 2 + static_cast<int>(r.index(3)), A = 1 + static_cast<int>(r.index(2));
        const int H = 2 + static_cast<int>(r.index(3)), t = static_cast<int>(r.index(3));
        const auto m = TabularMdp::random(S, A, H, 0.9, r);
        const std::vector<TabularPolicy> pis{random_tabular(S, A, r), random_tabular(S, A, r)};
        const double w0 = r.uniform();
        const std::vector<double> wts{w0, 1 - w0};
        const auto e = entropy_inequality_check(m, pis, wts, std::min(t, H), H);
        EXPECT_TRUE(e.holds) << "instance " << i << " slack " << e.slack;
        EXPECT_NEAR(e.h_given_state, h_future_given_state(m, pis, wts, std::min(t, H), H), 1e-10);
        min_slack = std::min(min_slack, e.slack);
        strict += e.slack > 1e-6;
    }
    EXPECT_GE(min_slack, kEntropySlack);
    EXPECT_GT(strict, 10); // the latent component makes the gap visible
}

TEST(Entropy, BudgetExceeded) {
    RngStream r(1, 0);
    const auto m = TabularMdp::random(4, 2, 12, 0.9, r);
    EXPECT_THROW(entropy_inequality_check(m, random_tabular(4, 2, r), 1, 12), PreconditionError);
}

TEST(Tempered, AnalyticDensity) {
    const auto g = tempered_gaussian(0, 1, 1, 0.5, 1, 1);
    EXPECT_DOUBLE_EQ(g.means[0], 1.0); // lambda = 1 removes the behavior factor
    EXPECT_DOUBLE_EQ(g.stds[0], 0.5);
    const auto h = tempered_gaussian(0, 1, 1, 0.5, 0.5, 0.25);
    EXPECT_NEAR(1.0 / (h.stds[0] * h.stds[0]), 0.75 + 2.0, 1e-12);
    EXPECT_NEAR(h.means[0], 2.0 / 2.75, 1e-12);
}

TEST(Tempered, GuidedSamplerMatchesPosterior) {
    const auto sched = make_schedule(ScheduleKind::linear, 100);
    for (auto [al, la] : std::vector<std::pair<double, double>>{{1, 1}, {0.5, 0.25}}) {
        TemperedSetup s;
        s.alpha = al;
        s.lambda = la;
        const auto r = tempered_posterior_ks(s, sched, 10000, RngStream(4, 0));
        EXPECT_LE(r.ks, 0.05) << al << "," << la;
    }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stitch/diffusion/exact_score.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/estimator/stitch.hpp"
#include "stitch/metrics/metrics.hpp"
#include "stitch/theory/bound.hpp"

namespace stitch {

// ---- two-mode mixture (unguided split, guided collapse) ----

struct MixtureDemo {
    double left_mass_unguided = 0.0, right_mass_unguided = 0.0;
    double right_mass_guided = 0.0;
    std::vector<double> unguided, guided;
};

inline const GaussianMixture1D& two_mode_mixture() {
    static const GaussianMixture1D m{{0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5}};
    return m;
}

inline MixtureDemo mixture_demo(std::uint64_t seed, std::size_t n = 10000, int K = 64) {
    const auto sched = make_schedule(ScheduleKind::cosine, K);
    MixtureDemo d;
    d.unguided = exact_score_sample(two_mode_mixture(), sched, n, RngStream(seed, 0xa1)).samples;
    d.guided = exact_score_sample(two_mode_mixture(), sched, n, RngStream(seed, 0xa2),
                                  [](double x, int) { return -(x - 1.0) / 0.25; })
                   .samples;
    for (double x : d.unguided) (x < 0.0 ? d.left_mass_unguided : d.right_mass_unguided) += 1.0 / double(n);
    for (double x : d.guided) d.right_mass_guided += x > 0.0 ? 1.0 / double(n) : 0.0;
    return d;
}

/// Histogram rows: bin_lo, bin_hi, unguided density, guided density, data density.
inline std::string mixture_demo_csv(const MixtureDemo& d, double lo = -3.0, double hi = 3.0, int bins = 60) {
    const double h = (hi - lo) / bins;
    std::vector<double> u(static_cast<std::size_t>(bins)), g(static_cast<std::size_t>(bins));
    auto fill = [&](const std::vector<double>& xs, std::vector<double>& out) {
        for (double x : xs) {
            const int b = static_cast<int>(std::floor((x - lo) / h));
            if (b >= 0 && b < bins) out[static_cast<std::size_t>(b)] += 1.0 / (double(xs.size()) * h);
        }
    };
    fill(d.unguided, u);
    fill(d.guided, g);
    std::string s = "bin_lo,bin_hi,unguided,guided,data\n";
    for (int b = 0; b < bins; ++b) {
        const double a = lo + b * h, z = a + h;
        const double p = (two_mode_mixture().cdf(z) - two_mode_mixture().cdf(a)) / h;
        s += format_exact(a) + "," + format_exact(z) + "," + format_exact(u[static_cast<std::size_t>(b)]) + "," +
             format_exact(g[static_cast<std::size_t>(b)]) + "," + format_exact(p) + "\n";
    }
    return s;
}

// ---- on-policy linear toy ----

/// 1-D linear-Gaussian env, behavior a = -0.5 s + N(0, 0.3^2), absolute frame.
struct LinearToy {
    LinearGaussianEnv env;
    PolicyPtr beta = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    std::vector<Trajectory> data;
    DenoiserModel model;
    int w = 4;
};

inline LinearToy train_linear_toy(std::uint64_t seed, int episodes = 200, std::int64_t steps = 8000, int w = 4) {
    LinearToy t;
    t.w = w;
    const RngStream root(seed, 0x11);
    for (int i = 0; i < episodes; ++i)
        t.data.push_back(rollout(t.env, *t.beta, root.substream(static_cast<std::uint64_t>(i)), t.env.horizon()));
    const WindowBatch wb = slice_windows(t.data, w, 1);
    t.model = DenoiserModel(wb.layout, make_schedule(ScheduleKind::linear, 32), fit_window_norm(wb, WindowFrame::absolute),
                            {64, 64}, 16, Activation::relu, WindowFrame::absolute);
    DenoiserTrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 512;
    train_denoiser(t.model, wb, cfg, RngStream(seed, 0x12));
    return t;
}

inline StitchConfig linear_toy_config(const LinearToy& t, int n_rollouts, int workers = 1) {
    StitchConfig cfg;
    cfg.w = t.w;
    cfg.T = t.env.horizon();
    cfg.gamma = t.env.gamma();
    cfg.n_rollouts = n_rollouts;
    cfg.workers = workers;
    return cfg;
}

struct OnPolicyCheck {
    double estimate = 0.0, stderr_ = 0.0;
    double truth = 0.0, truth_stderr = 0.0;
    double gap() const { return std::abs(estimate - truth); }
    double tolerance() const { return 2.0 * std::sqrt(stderr_ * stderr_ + truth_stderr * truth_stderr); }
    bool pass() const { return gap() <= tolerance(); }
};

/// pi = beta, no guidance: stitched estimate against Monte Carlo J(beta).
inline OnPolicyCheck on_policy_check(const LinearToy& t, std::uint64_t seed, int n_rollouts = 200, int gt_rollouts = 20000,
                                     int workers = 1) {
    const auto est = evaluate_policies(t.model, env_reward(t.env), linear_toy_config(t, n_rollouts, workers), t.env,
                                       {{"beta", t.beta}}, t.beta, RngStream(seed, 0x13));
    const auto gt = ground_truth_value(t.env, *t.beta, static_cast<std::size_t>(gt_rollouts), RngStream(seed, 0x14));
    return {est[0].estimate, est[0].std_error, gt.value, gt.std_error};
}

struct MsePlausibility {
    EmpiricalMseReport report;
    double kappa = 0.0;
    double delta_surrogate = 0.0;
    std::vector<double> estimates;
};

/// Empirical MSE of repeated on-policy estimates next to the bound, with
/// kappa measured on dataset pairs and delta replaced by the KS projection
/// surrogate between generated and real behavior windows.
inline MsePlausibility mse_plausibility(const LinearToy& t, std::uint64_t seed, int trials = 5, int n_rollouts = 200,
                                       int n_windows = 10000, int workers = 1) {
    MsePlausibility out;
    const auto gt = ground_truth_value(t.env, *t.beta, 20000, RngStream(seed, 0x14));
    std::vector<double> rets;
    for (int i = 0; i < trials; ++i) {
        const auto est = evaluate_policies(t.model, env_reward(t.env), linear_toy_config(t, n_rollouts, workers), t.env,
                                           {{"beta", t.beta}}, t.beta, RngStream(seed, 0x20 + static_cast<std::uint64_t>(i)));
        out.estimates.push_back(est[0].estimate);
        rets.insert(rets.end(), est[0].returns.begin(), est[0].returns.end());
    }
    const WindowBatch real = slice_windows(t.data, t.w, 1);
    Mat ref(real.layout.width(), n_windows), cond(real.layout.state_dim, n_windows);
    RngStream pick(seed, 0x15);
    for (int i = 0; i < n_windows; ++i) {
        const auto j = static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(real.size())));
        ref.col(i) = real.windows.col(j);
        cond.col(i) = real.cond_states.col(j);
    }
    std::vector<RngStream> rngs;
    for (int i = 0; i < n_windows; ++i) rngs.push_back(RngStream(seed, 0x16).substream(static_cast<std::uint64_t>(i)));
    const Mat gen = guided_sample(t.model, cond, {}, rngs);
    out.delta_surrogate = ks_projection_distance(gen, ref, 8, RngStream(seed, 0x17));

    Mat S(1, 0), A(1, 0);
    for (const auto& e : t.data) {
        const auto n = S.cols();
        S.conservativeResize(1, n + e.length());
        A.conservativeResize(1, n + e.length());
        S.rightCols(e.length()) = e.states.leftCols(e.length());
        A.rightCols(e.length()) = e.actions;
    }
    out.kappa = estimate_kappa(*t.beta, *t.beta, S, A, 4, RngStream(seed, 0x18));

    const double var_ret = [&] {
        const auto v = mean_and_stderr(rets);
        return v.std_error * v.std_error * double(rets.size()); // per-rollout variance
    }();
    BoundInputs in;
    in.r_max = t.env.reward_bound();
    in.gamma = t.env.gamma();
    in.w = t.w;
    in.T = t.env.horizon();
    in.kappa = out.kappa;
    in.delta_beta = out.delta_surrogate;
    in.var_j = var_ret / n_rollouts;
    out.report = empirical_mse_check(out.estimates, gt.value, in, {1, 2, 4, 8, t.env.horizon()});
    return out;
}

// ---- GaussianWorld row C (behavior heads up, targets head down) ----

struct RowC {
    GaussianWorld env;
    double behavior_angle = 0.5, target_angle = -0.5, sd = 0.25;
    PolicyPtr beta, pi;
    std::vector<Trajectory> data;
    int T = 128;
};

inline PolicyPtr angle_policy(double angle, double sd) {
    return make_linear_gaussian_policy(Mat::Zero(1, 2), Vec::Constant(1, angle), Vec::Constant(1, sd));
}

inline RowC row_c_setup(std::uint64_t seed, int episodes = 100) {
    RowC r;
    r.beta = angle_policy(r.behavior_angle, r.sd);
    r.pi = angle_policy(r.target_angle, r.sd);
    const RngStream root(seed, 0x31);
    for (int i = 0; i < episodes; ++i) r.data.push_back(rollout(r.env, *r.beta, root.substream(static_cast<std::uint64_t>(i)), r.T));
    return r;
}

inline DenoiserModel train_row_c_model(const RowC& r, int w, std::uint64_t seed, std::int64_t steps = 20000) {
    const WindowBatch wb = slice_windows(r.data, w, 1);
    DenoiserModel m(wb.layout, make_schedule(ScheduleKind::linear, 64), fit_window_norm(wb, WindowFrame::relative), {128, 128},
                    16, Activation::relu, WindowFrame::relative);
    DenoiserTrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 128;
    train_denoiser(m, wb, cfg, RngStream(seed, 0x32).substream(static_cast<std::uint64_t>(w)));
    return m;
}

inline StitchConfig row_c_config(int w, double alpha, double lambda, int n_rollouts = 50, int workers = 1) {
    StitchConfig cfg;
    cfg.w = w;
    cfg.T = 128;
    cfg.gamma = 0.99;
    cfg.n_rollouts = n_rollouts;
    cfg.guidance.alpha = alpha;
    cfg.guidance.lambda = lambda;
    cfg.guidance.normalize = true;
    cfg.workers = workers;
    return cfg;
}

/// Mean generated action of each stitched rollout.
inline std::vector<double> row_c_mean_actions(const RowC& r, const DenoiserModel& m, double alpha, double lambda,
                                              std::uint64_t seed, int n = 50) {
    StitchConfig cfg = row_c_config(m.layout().w, alpha, lambda, n);
    cfg.guidance.target = r.pi;
    cfg.guidance.behavior = r.beta;
    std::vector<RngStream> rngs;
    for (int i = 0; i < n; ++i) rngs.push_back(RngStream(seed, 0x33).substream(static_cast<std::uint64_t>(i)));
    const auto b = stitch_rollouts(m, env_reward(r.env), cfg, r.env, rngs);
    std::vector<double> out;
    for (const auto& tr : b.trajectories) out.push_back(tr.actions.mean());
    return out;
}

/// Mean per-step target log-likelihood of generated actions.
inline double row_c_target_loglik(const RowC& r, const DenoiserModel& m, double alpha, double lambda, std::uint64_t seed,
                                  int n = 50) {
    StitchConfig cfg = row_c_config(m.layout().w, alpha, lambda, n);
    cfg.guidance.target = r.pi;
    cfg.guidance.behavior = r.beta;
    std::vector<RngStream> rngs;
    for (int i = 0; i < n; ++i) rngs.push_back(RngStream(seed, 0x34).substream(static_cast<std::uint64_t>(i)));
    const auto b = stitch_rollouts(m, env_reward(r.env), cfg, r.env, rngs);
    double ll = 0.0;
    std::size_t cnt = 0;
    for (const auto& tr : b.trajectories)
        for (Eigen::Index t = 0; t < tr.length(); ++t, ++cnt) ll += r.pi->log_prob(tr.states.col(t), tr.actions.col(t));
    return ll / double(cnt);
}

/// Five heading targets spanning the behavior's mirror image to the behavior
/// itself, with closed-form values under the descend reward:
/// J = sum_t gamma^t (-t * step * sin(theta) * exp(-(sd^2 + noise^2) / 2)).
struct RowCTargets {
    std::vector<NamedPolicy> policies;
    std::vector<double> truth;
};

inline RowCTargets row_c_targets(const RowC& r) {
    RowCTargets out;
    const auto& p = r.env.params();
    for (double a : {-0.5, -0.25, 0.0, 0.25, 0.5}) {
        out.policies.push_back({format_exact(a), angle_policy(a, r.sd)});
        double J = 0.0, g = 1.0;
        for (int t = 0; t < r.T; ++t, g *= p.gamma)
            J += g * (-t * p.step_size * std::sin(a) * std::exp(-(r.sd * r.sd + p.noise_std * p.noise_std) / 2.0));
        out.truth.push_back(J);
    }
    return out;
}

struct AblationPoint {
    double spearman = 0.0, log_rmse = 0.0;
    std::vector<double> estimates;
};

inline AblationPoint row_c_ablation_point(const RowC& r, const RowCTargets& tg, const DenoiserModel& m, double alpha,
                                          double lambda, std::uint64_t seed, int workers = 1) {
    const auto est = evaluate_policies(m, env_reward(r.env), row_c_config(m.layout().w, alpha, lambda, 50, workers), r.env,
                                       tg.policies, r.beta, RngStream(seed, 0x35));
    AblationPoint p;
    for (const auto& e : est) p.estimates.push_back(e.estimate);
    p.spearman = spearman(p.estimates, tg.truth).rho;
    const auto [lo, hi] = std::minmax_element(tg.truth.begin(), tg.truth.end());
    p.log_rmse = log_rmse_row(normalize_values(p.estimates, *lo, *hi), normalize_values(tg.truth, *lo, *hi));
    return p;
}

/// True when the best value over an ordered grid sits strictly inside it:
/// the interior maximum beats both endpoints (ties count against).
inline bool interior_best(const std::vector<double>& xs, bool larger_is_better = true) {
    if (xs.size() < 3) return false;
    std::vector<double> v = xs;
    if (!larger_is_better)
        for (auto& x : v) x = -x;
    const double inner = *std::max_element(v.begin() + 1, v.end() - 1);
    return inner > std::max(v.front(), v.back());
}

} // namespace stitch

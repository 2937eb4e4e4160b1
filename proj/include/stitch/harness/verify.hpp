#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stitch/harness/experiments.hpp"
#include "stitch/harness/pipeline.hpp"
#include "stitch/theory/bound.hpp"
#include "stitch/theory/entropy.hpp"
#include "stitch/theory/tempered.hpp"

namespace stitch {

struct VerifyResult {
    KvText report;
    bool all_pass = true;
};

namespace detail {

inline TabularPolicy random_tabular_policy(int S, int A, RngStream& r) {
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

} // namespace detail

/// Every theory check plus the two-mode mixture data. Writes verify.txt and
/// mixture_demo.csv into `out`.
inline VerifyResult verify_run(const RunConfig& c, const fs::path& out, int workers) {
    VerifyResult v;
    auto& rep = v.report;
    auto verdict = [&](const std::string& name, bool ok) {
        rep.append("check." + name + ".verdict", ok ? "pass" : "fail");
        v.all_pass = v.all_pass && ok;
    };
    rep.append("verb", "verify");
    rep.append("seed", std::to_string(c.seed));

    // two-mode mixture
    const auto demo = mixture_demo(c.seed);
    rep.append("check.mixture.samples", "10000");
    rep.append("check.mixture.left_mass_unguided", format_exact(demo.left_mass_unguided));
    rep.append("check.mixture.right_mass_unguided", format_exact(demo.right_mass_unguided));
    rep.append("check.mixture.right_mass_guided", format_exact(demo.right_mass_guided));
    verdict("mixture", std::abs(demo.left_mass_unguided - 0.5) <= 0.03 && std::abs(demo.right_mass_unguided - 0.5) <= 0.03 &&
                           demo.right_mass_guided >= 0.9);
    write_text(out / "mixture_demo.csv", mixture_demo_csv(demo));

    // entropy inequality
    {
        RngStream r(c.seed, kStreamVerify);
        double min_slack = 1.0;
        int held = 0, strict = 0;
        for (int i = 0; i < 100; ++i) {
            const int S = 2 + static_cast<int>(r.index(3)), A = 1 + static_cast<int>(r.index(2));
            const int H = 2 + static_cast<int>(r.index(3)), t = static_cast<int>(r.index(static_cast<std::size_t>(H + 1)));
            const auto m = TabularMdp::random(S, A, H, 0.9, r);
            const std::vector<TabularPolicy> pis{detail::random_tabular_policy(S, A, r), detail::random_tabular_policy(S, A, r)};
            const double w0 = r.uniform();
            const auto e = entropy_inequality_check(m, pis, {w0, 1.0 - w0}, t, H);
            held += e.holds;
            strict += e.slack > 1e-6;
            min_slack = std::min(min_slack, e.slack);
        }
        TabularMdp det;
        det.num_states = 2;
        det.num_actions = 2;
        det.horizon = 4;
        det.initial = {1, 0};
        det.transition = {{{1, 0}, {0, 1}}, {{0, 1}, {1, 0}}};
        det.reward = {{0, 0}, {0, 0}};
        double det_max = 0.0;
        for (int t = 0; t <= 4; ++t) {
            const auto e = entropy_inequality_check(det, TabularPolicy({{0, 1}, {1, 0}}), t, 4);
            det_max = std::max({det_max, std::abs(e.h_given_state), std::abs(e.h_given_history)});
        }
        rep.append("check.entropy.instances", "100");
        rep.append("check.entropy.held", std::to_string(held));
        rep.append("check.entropy.strict", std::to_string(strict));
        rep.append("check.entropy.min_slack", format_exact(min_slack));
        rep.append("check.entropy.deterministic_max_abs", format_exact(det_max));
        verdict("entropy", held == 100 && min_slack >= kEntropySlack && det_max <= 1e-12);
    }

    // bound arithmetic
    {
        const auto b = mse_bound({.r_max = 1, .gamma = 0.5, .w = 2, .T = 4, .kappa = 1, .delta_beta = 0.01, .var_j = 0});
        rep.append("check.bound.b_w", format_exact(b.b_w));
        rep.append("check.bound.bias_sq", format_exact(b.bias_sq));
        rep.append("check.bound.variance", format_exact(b.variance));
        rep.append("check.bound.total", format_exact(b.total));
        const bool ok = std::abs(b.b_w - 1.5) <= 1e-12 && std::abs(b.bias_sq - 0.0016) <= 1e-12 &&
                        std::abs(b.variance - 1.092) <= 1e-12 && std::abs(b.total - 1.0936) <= 1e-12;
        BoundInputs in{.r_max = 1, .gamma = 0.99, .w = 1, .T = 128, .kappa = 1.5, .delta_beta = 0.01, .var_j = 0};
        std::string curve;
        double prev = -1.0;
        bool inc = true;
        for (int w : {1, 2, 4, 8, 128}) {
            in.w = w;
            const double tot = mse_bound(in).total;
            curve += (curve.empty() ? "" : ",") + std::to_string(w) + ":" + format_exact(tot);
            inc = inc && tot > prev;
            prev = tot;
        }
        rep.append("check.bound.kappa_1.5_w_curve", curve);
        verdict("bound", ok && inc);
    }

    // empirical MSE on the on-policy linear toy
    {
        const auto toy = train_linear_toy(c.seed);
        const auto p = mse_plausibility(toy, c.seed, 5, 200, 10000, workers);
        rep.append("check.empirical_mse.note", "plausibility check: delta_beta is a KS projection surrogate");
        rep.append("check.empirical_mse.kappa", format_exact(p.kappa));
        rep.append("check.empirical_mse.delta_surrogate", format_exact(p.delta_surrogate));
        rep.append("check.empirical_mse.truth", format_exact(p.report.truth));
        rep.append("check.empirical_mse.estimates", join_exact(p.estimates));
        rep.append("check.empirical_mse.mse", format_exact(p.report.empirical_mse));
        rep.append("check.empirical_mse.bound", format_exact(p.report.bound.total));
        std::string curve;
        for (const auto& [w, b] : p.report.w_curve) curve += (curve.empty() ? "" : ",") + std::to_string(w) + ":" + format_exact(b);
        rep.append("check.empirical_mse.w_curve", curve);
        verdict("empirical_mse", p.report.holds);
    }

    // tempered posterior
    {
        const auto sched = make_schedule(ScheduleKind::linear, 100);
        bool ok = true;
        for (auto [al, la] : std::vector<std::pair<double, double>>{{1, 1}, {0.5, 0.25}}) {
            TemperedSetup s;
            s.alpha = al;
            s.lambda = la;
            const std::string key = "check.tempered.a" + format_exact(al) + "_l" + format_exact(la);
            const auto post = tempered_posterior_ks(s, sched, 10000, RngStream(c.seed, kStreamVerify).substream(1));
            const auto naive = tempered_posterior_ks(s, sched, 10000, RngStream(c.seed, kStreamVerify).substream(1),
                                                     TemperedGuidance::clean);
            rep.append(key + ".target_mean", format_exact(post.target_mean));
            rep.append(key + ".target_sd", format_exact(post.target_sd));
            rep.append(key + ".ks_posterior", format_exact(post.ks));
            rep.append(key + ".ks_clean_at_iterate", format_exact(naive.ks));
            ok = ok && post.ks <= 0.05;
        }
        verdict("tempered", ok);
    }
    rep.append("overall", v.all_pass ? "pass" : "fail");
    const KvText echo = c.to_kv();
    for (const auto& [k, val] : echo.entries()) rep.append("config." + k, val);
    write_text(out / "verify.txt", rep.to_string());
    write_text(out / "config.txt", c.echo());
    return v;
}

} // namespace stitch

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/diffusion/denoiser.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// Weights and score sources for g = alpha * g_pi - lambda * g_beta.
struct GuidanceSpec {
    double alpha = 0.0;
    double lambda = 0.0;
    bool normalize = true;
    PolicyPtr target;
    PolicyPtr behavior;

    bool active() const noexcept { return alpha != 0.0 || lambda != 0.0; }
};

/// alpha * g_pi / |g_pi| - lambda * g_beta / |g_beta| (or unnormalized).
/// A zero-norm term contributes nothing.
inline Vec combine_guidance(const Vec& g_pi, const Vec& g_beta, double alpha, double lambda, bool normalize) {
    if (g_pi.size() != g_beta.size()) throw DimensionError("combine_guidance: size mismatch");
    auto unit = [normalize](const Vec& g) -> Vec {
        if (!normalize) return g;
        const double n = g.norm();
        return n > 0.0 ? Vec(g / n) : Vec(Vec::Zero(g.size()));
    };
    Vec out = Vec::Zero(g_pi.size());
    if (alpha != 0.0) out += alpha * unit(g_pi);
    if (lambda != 0.0) out -= lambda * unit(g_beta);
    return out;
}

/// Sum over window steps of grad log policy(a_u | s_u), taken with respect to
/// the normalized window coordinates. Scores are evaluated on denormalized
/// (s, a) and mapped back through the per-coordinate scale. The final state
/// carries no policy term.
inline Vec window_policy_score(const Policy& policy, const Vec& x_norm, const WindowLayout& L, const NormStats& norm,
                               const Vec* anchor = nullptr) {
    Vec g = Vec::Zero(L.width());
    for (int u = 0; u < L.w; ++u) {
        Vec s = norm.denormalize_state(x_norm.segment(L.state_offset(u), L.state_dim));
        if (anchor) s += *anchor;
        const Vec a = norm.denormalize_action(x_norm.segment(L.action_offset(u), L.action_dim));
        const PolicyScore sc = policy.guidance_score(s, a);
        g.segment(L.state_offset(u), L.state_dim) += sc.d_state.cwiseProduct(norm.state_std);
        g.segment(L.action_offset(u), L.action_dim) += sc.d_action.cwiseProduct(norm.action_std);
    }
    return g;
}

/// Guidance for a batch of normalized windows, one column per window.
/// `anchors` (one column per window) are added to decoded states for windows
/// stored relative to their cond state.
inline Mat guidance(const Mat& x_norm, const WindowLayout& L, const NormStats& norm, const GuidanceSpec& spec,
                    const Mat* anchors = nullptr) {
    Mat out = Mat::Zero(x_norm.rows(), x_norm.cols());
    if (!spec.active()) return out;
    if (spec.alpha != 0.0 && !spec.target) throw PreconditionError("guidance: alpha > 0 needs a target policy");
    if (spec.lambda != 0.0 && !spec.behavior) throw PreconditionError("guidance: lambda > 0 needs a behavior policy");
    const Vec zero = Vec::Zero(x_norm.rows());
    for (Eigen::Index b = 0; b < x_norm.cols(); ++b) {
        const Vec x = x_norm.col(b);
        Vec anchor;
        if (anchors) anchor = anchors->col(b);
        const Vec* ap = anchors ? &anchor : nullptr;
        const Vec gp = spec.alpha != 0.0 ? window_policy_score(*spec.target, x, L, norm, ap) : zero;
        const Vec gb = spec.lambda != 0.0 ? window_policy_score(*spec.behavior, x, L, norm, ap) : zero;
        out.col(b) = combine_guidance(gp, gb, spec.alpha, spec.lambda, spec.normalize);
    }
    return out;
}

/// Coefficient on the guidance term at step k.
/// marginal: sigma_k^2 = 1 - abar_k.  step: 1 - alpha_k (the reverse-step variance).
enum class GuidanceWeight { marginal, step };

inline const char* to_string(GuidanceWeight g) { return g == GuidanceWeight::step ? "step" : "marginal"; }

inline GuidanceWeight guidance_weight_from_string(const std::string& s) {
    if (s == "marginal") return GuidanceWeight::marginal;
    if (s == "step") return GuidanceWeight::step;
    throw ConfigError("unknown guidance weight '" + s + "'");
}

struct SampleOptions {
    bool clip_denoised = false;
    double clip_value = 1.5;
    GuidanceWeight guidance_weight = GuidanceWeight::marginal;
};

/// Guided reverse diffusion for a batch of windows.
///
/// Starting from tau^K ~ N(0, I), for k = K..1:
///   tau^{k-1} = mu_{k-1}(tau^k) + c_k g(tau^k) + sqrt(S_k) z,   S_k = 1 - alpha_k,
/// c_k from SampleOptions::guidance_weight (sigma_k^2 by default),
/// with no noise on the final step. The first-state coordinates are
/// overwritten by the (normalized) conditioning state before the first step
/// and after every step. Column b draws all its noise from rngs[b].
/// Returns denormalized windows whose first state equals cond_states exactly.
///
/// A non-finite iterate throws NumericalError, unless `failed` is given: then
/// the offending columns are flagged there, zeroed, and the batch carries on.
inline Mat guided_sample(const DenoiserModel& model, const Mat& cond_states, const GuidanceSpec& spec,
                         std::span<RngStream> rngs, const SampleOptions& opts = {},
                         std::vector<char>* failed = nullptr) {
    const auto& L = model.layout();
    const auto& sched = model.schedule();
    const auto B = cond_states.cols();
    if (cond_states.rows() != L.state_dim) throw DimensionError("guided_sample: cond state dim mismatch");
    if (static_cast<Eigen::Index>(rngs.size()) != B) throw DimensionError("guided_sample: one rng stream per window required");
    if (sched.K() < 1) throw PreconditionError("guided_sample: K must be >= 1");
    if (failed) failed->assign(static_cast<std::size_t>(B), 0);

    const Mat cond_norm = model.first_state(cond_states);
    const Mat cond_feat = model.cond_features(cond_states);
    const Mat* anchors = model.frame() == WindowFrame::relative ? &cond_states : nullptr;

    const int D = L.width();
    Mat x(D, B);
    for (Eigen::Index b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d) x(d, b) = rngs[static_cast<std::size_t>(b)].normal();
    x.topRows(L.state_dim) = cond_norm;

    for (int k = sched.K(); k >= 1; --k) {
        Mat mean = model.denoise_mean(x, k, cond_feat);
        const double var = sched.step_variance(k);
        if (spec.active()) {
            const double c = opts.guidance_weight == GuidanceWeight::step ? var : sched.sigma(k) * sched.sigma(k);
            mean += c * guidance(x, L, model.norm(), spec, anchors);
        }
        if (k > 1) {
            const double sd = std::sqrt(var);
            for (Eigen::Index b = 0; b < B; ++b)
                for (int d = 0; d < D; ++d) mean(d, b) += sd * rngs[static_cast<std::size_t>(b)].normal();
        }
        if (opts.clip_denoised) mean = mean.cwiseMax(-opts.clip_value).cwiseMin(opts.clip_value);
        x = std::move(mean);
        x.topRows(L.state_dim) = cond_norm;
        if (!x.allFinite()) {
            if (!failed) throw NumericalError("guided_sample: non-finite iterate at step " + std::to_string(k));
            for (Eigen::Index b = 0; b < B; ++b) {
                if (x.col(b).allFinite()) continue;
                (*failed)[static_cast<std::size_t>(b)] = 1;
                x.col(b).setZero();
                x.col(b).head(L.state_dim) = cond_norm.col(b);
            }
        }
    }
    Mat out = model.decode(x, cond_states);
    out.topRows(L.state_dim) = cond_states;
    return out;
}

/// Single-window convenience wrapper.
inline Vec guided_sample_one(const DenoiserModel& model, const Vec& cond_state, const GuidanceSpec& spec, RngStream& rng,
                             const SampleOptions& opts = {}) {
    std::vector<RngStream> r{rng};
    Vec out = guided_sample(model, Mat(cond_state), spec, r, opts).col(0);
    rng = r[0];
    return out;
}

} // namespace stitch

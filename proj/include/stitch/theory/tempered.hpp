#pragma once

#include <cmath>
#include <vector>

#include "stitch/diffusion/exact_score.hpp"
#include "stitch/diffusion/schedule.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"
#include "stitch/theory/bound.hpp"

namespace stitch {

/// 1-D single-step setup: data and behavior density beta = N(mu_b, sd_b^2),
/// target pi = N(mu_p, sd_p^2), likelihood L(x) = pi(x)^alpha / beta(x)^lambda.
struct TemperedSetup {
    double mu_b = 0.0, sd_b = 1.0;
    double mu_p = 1.0, sd_p = 0.5;
    double alpha = 1.0, lambda = 1.0;
};

enum class TemperedGuidance {
    posterior, // grad_x log E[L(x_0) | x_k = x] under the behavior posterior
    clean,     // grad log L evaluated at the noisy iterate
};

/// Guidance added to the reverse mean of exact_score_sample (which scales it by 1 - alpha_k).
inline ScalarGuidance tempered_guidance(const TemperedSetup& s, const NoiseSchedule& sched, TemperedGuidance kind) {
    // log L(x) = -a x^2 / 2 + b x + const
    const double a = s.alpha / (s.sd_p * s.sd_p) - s.lambda / (s.sd_b * s.sd_b);
    const double b = s.alpha * s.mu_p / (s.sd_p * s.sd_p) - s.lambda * s.mu_b / (s.sd_b * s.sd_b);
    if (kind == TemperedGuidance::clean) return [a, b](double x, int) { return b - a * x; };
    return [a, b, s, &sched](double x, int k) {
        const double ab = sched.alpha_bar(k);
        const double vb = s.sd_b * s.sd_b;
        const double den = ab * vb + 1.0 - ab;
        const double c = std::sqrt(ab) * vb / den;                 // d m / d x
        const double m = s.mu_b + c * (x - std::sqrt(ab) * s.mu_b); // E[x_0 | x_k]
        const double v = vb * (1.0 - ab) / den;                      // Var[x_0 | x_k]
        if (!(1.0 + a * v > 0.0)) throw NumericalError("tempered guidance: posterior expectation diverges");
        // The score term sits inside the 1 / sqrt(alpha_k) of the reverse mean.
        return c * (b - a * m) / (1.0 + a * v) / std::sqrt(sched.alpha(k));
    };
}

struct TemperedKs {
    double ks = 0.0;
    double target_mean = 0.0, target_sd = 0.0;
    double sample_mean = 0.0;
};

/// KS distance between the guided exact-score sampler and the analytic
/// tempered density.
inline TemperedKs tempered_posterior_ks(const TemperedSetup& s, const NoiseSchedule& sched, std::size_t n,
                                        const RngStream& rng, TemperedGuidance kind = TemperedGuidance::posterior) {
    const GaussianMixture1D beh{{1.0}, {s.mu_b}, {s.sd_b}};
    const GaussianMixture1D tgt = tempered_gaussian(s.mu_b, s.sd_b, s.mu_p, s.sd_p, s.alpha, s.lambda);
    const auto res = exact_score_sample(beh, sched, n, rng, tempered_guidance(s, sched, kind));
    TemperedKs out;
    out.ks = ks_distance(res.samples, [&](double x) { return tgt.cdf(x); });
    out.target_mean = tgt.means[0];
    out.target_sd = tgt.stds[0];
    for (double x : res.samples) out.sample_mean += x;
    out.sample_mean /= static_cast<double>(n);
    return out;
}

} // namespace stitch

#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "stitch/diffusion/exact_score.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// Largest discounted return of a length-w window: R_max (1 - gamma^w) / (1 - gamma).
inline double b_w(double r_max, double gamma, int w) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw PreconditionError("b_w: gamma must lie in [0, 1)");
    if (w < 1) throw PreconditionError("b_w: w must be >= 1");
    return r_max * (1.0 - std::pow(gamma, w)) / (1.0 - gamma);
}

struct BoundInputs {
    double r_max = 1.0;
    double gamma = 0.99;
    int w = 8;
    int T = 128;
    double kappa = 1.0;      // sup pi / beta
    double delta_beta = 0.0; // TV error of the window model
    double var_j = 0.0;      // variance of the return under p_pi
};

struct MseBound {
    double b_w = 0.0;
    double bias_sq = 0.0;
    double variance = 0.0; // includes var_j
    double total = 0.0;
};

/// bias^2  = (2 B_w kappa^w delta / (1 - gamma^w))^2
/// variance = 10 (T/w)^2 B_w^2 kappa^w delta + 8 B_w^2 kappa^w delta / (1 - gamma^{2w}) + Var(J)
inline MseBound mse_bound(const BoundInputs& in) {
    if (in.r_max < 0.0 || in.kappa < 0.0 || in.delta_beta < 0.0 || in.var_j < 0.0)
        throw PreconditionError("mse_bound: inputs must be nonnegative");
    if (in.T < in.w || in.T % in.w != 0) throw PreconditionError("mse_bound: w must divide T");
    MseBound b;
    b.b_w = stitch::b_w(in.r_max, in.gamma, in.w);
    const double kw = std::pow(in.kappa, in.w);
    const double gw = std::pow(in.gamma, in.w);
    const double n = static_cast<double>(in.T) / in.w;
    const double bias = 2.0 * b.b_w * kw * in.delta_beta / (1.0 - gw);
    b.bias_sq = bias * bias;
    const double bw2 = b.b_w * b.b_w;
    b.variance = 10.0 * n * n * bw2 * kw * in.delta_beta + 8.0 * bw2 * kw * in.delta_beta / (1.0 - gw * gw) + in.var_j;
    b.total = b.bias_sq + b.variance;
    return b;
}

/// Largest pi(a|s) / beta(a|s) over the given (s, a) columns plus
/// `samples_per_state` actions drawn from pi at each state.
inline double estimate_kappa(const Policy& pi, const Policy& beta, const Mat& S, const Mat& A, int samples_per_state,
                             RngStream rng) {
    if (S.cols() != A.cols()) throw DimensionError("estimate_kappa: S and A column counts differ");
    double k = 0.0;
    auto ratio = [&](const Vec& s, const Vec& a) { return std::exp(pi.log_prob(s, a) - beta.log_prob(s, a)); };
    for (Eigen::Index i = 0; i < S.cols(); ++i) {
        const Vec s = S.col(i);
        k = std::max(k, ratio(s, A.col(i)));
        for (int j = 0; j < samples_per_state; ++j) k = std::max(k, ratio(s, pi.sample(s, rng)));
    }
    return k;
}

/// Projection surrogate for the window-model TV error: the largest
/// two-sample KS distance between generated and reference windows (columns)
/// over the coordinate axes and `n_random` fixed random unit directions.
inline double ks_projection_distance(const Mat& generated, const Mat& reference, int n_random, RngStream rng) {
    if (generated.rows() != reference.rows()) throw DimensionError("ks_projection_distance: window widths differ");
    const auto D = generated.rows();
    auto project = [](const Mat& X, const Vec& u) {
        const Vec p = X.transpose() * u;
        return std::vector<double>(p.data(), p.data() + p.size());
    };
    double d = 0.0;
    for (Eigen::Index i = 0; i < D; ++i) {
        const Vec e = Vec::Unit(D, i);
        d = std::max(d, ks_distance_two_sample(project(generated, e), project(reference, e)));
    }
    for (int r = 0; r < n_random; ++r) {
        Vec u(D);
        for (Eigen::Index i = 0; i < D; ++i) u(i) = rng.normal();
        u.normalize();
        d = std::max(d, ks_distance_two_sample(project(generated, u), project(reference, u)));
    }
    return d;
}

struct EmpiricalMseReport {
    double empirical_mse = 0.0;
    double truth = 0.0;
    MseBound bound;
    bool holds = false;
    std::vector<std::pair<int, double>> w_curve; // bound total for each w
};

/// Empirical MSE of repeated estimates against the truth, next to the bound
/// evaluated at `in` and along `w_grid` (other inputs fixed).
inline EmpiricalMseReport empirical_mse_check(const std::vector<double>& estimates, double truth, const BoundInputs& in,
                                              const std::vector<int>& w_grid) {
    if (estimates.empty()) throw PreconditionError("empirical_mse_check: no estimates");
    EmpiricalMseReport r;
    r.truth = truth;
    for (double e : estimates) r.empirical_mse += (e - truth) * (e - truth);
    r.empirical_mse /= static_cast<double>(estimates.size());
    r.bound = mse_bound(in);
    r.holds = r.empirical_mse <= r.bound.total;
    for (int w : w_grid) {
        BoundInputs b = in;
        b.w = w;
        r.w_curve.emplace_back(w, mse_bound(b).total);
    }
    return r;
}

/// Density proportional to p_beta(a) pi(a)^alpha / beta(a)^lambda for 1-D
/// Gaussians, where the data density p_beta is beta itself.
inline GaussianMixture1D tempered_gaussian(double mu_b, double sd_b, double mu_p, double sd_p, double alpha, double lambda) {
    const double prec = (1.0 - lambda) / (sd_b * sd_b) + alpha / (sd_p * sd_p);
    if (!(prec > 0.0)) throw PreconditionError("tempered posterior is improper for these weights");
    const double mean = ((1.0 - lambda) * mu_b / (sd_b * sd_b) + alpha * mu_p / (sd_p * sd_p)) / prec;
    return {{1.0}, {mean}, {1.0 / std::sqrt(prec)}};
}

} // namespace stitch

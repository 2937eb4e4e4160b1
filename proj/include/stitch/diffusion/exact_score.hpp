#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

#include "stitch/diffusion/schedule.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// 1-D Gaussian mixture with closed-form noised densities.
struct GaussianMixture1D {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> stds;

    void validate() const {
        if (weights.empty() || weights.size() != means.size() || weights.size() != stds.size())
            throw DimensionError("mixture parameter lists must be nonempty and equal length");
        for (double s : stds)
            if (!(s > 0.0)) throw PreconditionError("mixture stds must be positive");
    }

    /// Mixture after forward noising to level alpha_bar: components
    /// N(sqrt(abar) m, abar s^2 + 1 - abar).
    GaussianMixture1D noised(double alpha_bar) const {
        GaussianMixture1D out = *this;
        for (std::size_t i = 0; i < means.size(); ++i) {
            out.means[i] = std::sqrt(alpha_bar) * means[i];
            out.stds[i] = std::sqrt(alpha_bar * stds[i] * stds[i] + 1.0 - alpha_bar);
        }
        return out;
    }

    double log_density(double x) const {
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> l(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double z = (x - means[i]) / stds[i];
            l[i] = std::log(weights[i]) - 0.5 * z * z - std::log(stds[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
            mx = std::max(mx, l[i]);
        }
        double s = 0.0;
        for (double li : l) s += std::exp(li - mx);
        return mx + std::log(s);
    }

    double score(double x) const {
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> l(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double z = (x - means[i]) / stds[i];
            l[i] = std::log(weights[i]) - 0.5 * z * z - std::log(stds[i]);
            mx = std::max(mx, l[i]);
        }
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double r = std::exp(l[i] - mx);
            den += r;
            num += r * (-(x - means[i]) / (stds[i] * stds[i]));
        }
        return num / den;
    }

    double cdf(double x) const {
        double c = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            c += weights[i] * 0.5 * std::erfc(-(x - means[i]) / (stds[i] * std::sqrt(2.0)));
            wsum += weights[i];
        }
        return c / wsum;
    }
};

/// Guidance term g(x, k) added to the reverse mean as S_k g (S_k = 1 - alpha_k).
using ScalarGuidance = std::function<double(double x, int k)>;

struct ExactScoreResult {
    std::vector<double> samples;                    // x^0
    std::map<int, std::vector<double>> snapshots;   // x^k for requested k
};

/// Reverse chain with the analytic score of the noised mixture:
///   x^{k-1} ~ N((x^k + (1 - alpha_k) score_k(x^k)) / sqrt(alpha_k) + (1 - alpha_k) g(x^k, k), 1 - alpha_k)
/// (deterministic final step). Sample i uses rng.substream(i).
inline ExactScoreResult exact_score_sample(const GaussianMixture1D& mixture, const NoiseSchedule& sched, std::size_t n,
                                           const RngStream& rng, const ScalarGuidance& g = nullptr,
                                           const std::vector<int>& snapshot_steps = {}) {
    mixture.validate();
    std::vector<GaussianMixture1D> levels;
    levels.reserve(static_cast<std::size_t>(sched.K()) + 1);
    for (int k = 0; k <= sched.K(); ++k) levels.push_back(mixture.noised(sched.alpha_bar(k)));

    ExactScoreResult res;
    res.samples.resize(n);
    for (int k : snapshot_steps) res.snapshots[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream r = rng.substream(i);
        double x = r.normal();
        if (res.snapshots.count(sched.K())) res.snapshots[sched.K()][i] = x;
        for (int k = sched.K(); k >= 1; --k) {
            const double a = sched.alpha(k);
            const double var = 1.0 - a;
            double mean = (x + var * levels[static_cast<std::size_t>(k)].score(x)) / std::sqrt(a);
            if (g) mean += var * g(x, k);
            x = k > 1 ? mean + std::sqrt(var) * r.normal() : mean;
            if (auto it = res.snapshots.find(k - 1); it != res.snapshots.end()) it->second[i] = x;
        }
        if (!std::isfinite(x)) throw NumericalError("exact_score_sample: non-finite sample");
        res.samples[i] = x;
    }
    return res;
}

/// One-sample Kolmogorov-Smirnov distance against a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf&& cdf) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_distance_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) return 0.0;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

} // namespace stitch

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "stitch/error.hpp"

namespace stitch {

enum class ScheduleKind { linear, cosine, custom };

inline std::string_view to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::custom: return "custom";
    }
    return "custom";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "custom") return ScheduleKind::custom;
    throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}

/// Per-step diffusion constants, indexed k = 1..K (k = 0 is the clean level).
///   alpha_bar(k) = prod_{t<=k} alpha(t)
///   sigma(k)     = sqrt(1 - alpha_bar(k))   marginal noise scale of x^k
///   step_variance(k) = 1 - alpha(k)        variance of the reverse step k -> k-1
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    static NoiseSchedule from_alphas(std::vector<double> alphas, ScheduleKind kind = ScheduleKind::custom) {
        if (alphas.empty()) throw PreconditionError("noise schedule needs K >= 1");
        for (double a : alphas)
            if (!(a > 0.0 && a < 1.0)) throw PreconditionError("schedule alphas must lie in (0, 1)");
        NoiseSchedule s;
        s.kind_ = kind;
        s.alpha_ = std::move(alphas);
        s.alpha_bar_.resize(s.alpha_.size());
        double prod = 1.0;
        for (std::size_t i = 0; i < s.alpha_.size(); ++i) s.alpha_bar_[i] = (prod *= s.alpha_[i]);
        return s;
    }

    int K() const noexcept { return static_cast<int>(alpha_.size()); }
    ScheduleKind kind() const noexcept { return kind_; }
    const std::vector<double>& alphas() const noexcept { return alpha_; }

    double alpha(int k) const { return alpha_.at(checked(k) - 1); }
    double alpha_bar(int k) const { return k == 0 ? 1.0 : alpha_bar_.at(checked(k) - 1); }
    double sigma(int k) const { return std::sqrt(1.0 - alpha_bar(k)); }
    double step_variance(int k) const { return 1.0 - alpha(k); }

private:
    std::size_t checked(int k) const {
        if (k < 0 || k > K()) throw PreconditionError("diffusion step " + std::to_string(k) + " out of range");
        return static_cast<std::size_t>(k);
    }

    ScheduleKind kind_ = ScheduleKind::custom;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

/// Standard schedules. Linear spaces 1 - alpha from 0.1/K to 20/K (the usual
/// 1e-4..0.02 range rescaled to K steps); cosine uses the squared-cosine
/// alpha_bar with offset 0.008 and step variances capped at 0.999.
inline NoiseSchedule make_schedule(ScheduleKind kind, int K) {
    if (K < 1) throw PreconditionError("noise schedule needs K >= 1");
    std::vector<double> alphas(static_cast<std::size_t>(K));
    if (kind == ScheduleKind::linear) {
        const double b0 = std::min(0.1 / K, 0.5);
        const double b1 = std::min(20.0 / K, 0.999);
        for (int k = 0; k < K; ++k) {
            const double frac = K == 1 ? 1.0 : static_cast<double>(k) / (K - 1);
            alphas[static_cast<std::size_t>(k)] = 1.0 - (b0 + (b1 - b0) * frac);
        }
    } else if (kind == ScheduleKind::cosine) {
        constexpr double s = 0.008;
        auto f = [K](int t) {
            const double x = (static_cast<double>(t) / K + s) / (1.0 + s) * std::numbers::pi / 2.0;
            return std::cos(x) * std::cos(x);
        };
        for (int k = 1; k <= K; ++k) {
            const double beta = std::min(1.0 - f(k) / f(k - 1), 0.999);
            alphas[static_cast<std::size_t>(k - 1)] = 1.0 - std::max(beta, 1e-8);
        }
    } else {
        throw PreconditionError("make_schedule: custom schedules are built with NoiseSchedule::from_alphas");
    }
    return NoiseSchedule::from_alphas(std::move(alphas), kind);
}

/// x^k = sqrt(alpha_bar_k) x0 + sigma_k eps, element-wise.
template <class Derived, class DerivedEps>
auto forward_noise(const NoiseSchedule& sched, const Derived& x0, int k, const DerivedEps& eps) {
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw DimensionError("forward_noise shape mismatch");
    return (std::sqrt(sched.alpha_bar(k)) * x0 + sched.sigma(k) * eps).eval();
}

/// Reverse mean (x^k - ((1 - alpha_k) / sigma_k) eps_hat) / sqrt(alpha_k).
template <class Derived, class DerivedEps>
auto reverse_mean(const Derived& xk, const DerivedEps& eps_hat, double alpha_k, double sigma_k) {
    if (!(sigma_k > 0.0)) throw PreconditionError("reverse_mean requires sigma_k > 0");
    if (!(alpha_k > 0.0 && alpha_k < 1.0)) throw PreconditionError("reverse_mean requires alpha_k in (0, 1)");
    return ((xk - ((1.0 - alpha_k) / sigma_k) * eps_hat) / std::sqrt(alpha_k)).eval();
}

} // namespace stitch

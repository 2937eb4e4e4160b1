#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

#include "stitch/error.hpp"

namespace stitch {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW) when > 0
    double max_grad_norm = 0.0; // global-norm clipping when > 0
};

/// Adaptive-moment optimizer over a flat parameter vector.
class AdamState {
public:
    AdamState() = default;
    AdamState(Eigen::Index n_params, AdamConfig cfg)
        : cfg_(cfg), m_(Eigen::VectorXd::Zero(n_params)), v_(Eigen::VectorXd::Zero(n_params)) {}

    const AdamConfig& config() const noexcept { return cfg_; }
    std::int64_t step_count() const noexcept { return steps_; }
    const Eigen::VectorXd& first_moment() const noexcept { return m_; }
    const Eigen::VectorXd& second_moment() const noexcept { return v_; }

    /// Apply one update. `lr_scale` multiplies the base learning rate (for schedules).
    void step(Eigen::VectorXd& params, Eigen::VectorXd grad, double lr_scale = 1.0) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw DimensionError("AdamState::step parameter count mismatch");
        if (cfg_.max_grad_norm > 0.0) {
            const double norm = grad.norm();
            if (norm > cfg_.max_grad_norm) grad *= cfg_.max_grad_norm / norm;
        }
        ++steps_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        const double lr = cfg_.learning_rate * lr_scale;
        if (cfg_.weight_decay > 0.0) params *= (1.0 - lr * cfg_.weight_decay);
        params.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.epsilon);
    }

private:
    AdamConfig cfg_;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    std::int64_t steps_ = 0;
};

/// Cosine decay from 1 to `floor` over `total` steps.
inline double cosine_lr_scale(std::int64_t step, std::int64_t total, double floor = 0.05) {
    if (total <= 0) return 1.0;
    const double p = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

} // namespace stitch

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stitch/error.hpp"
#include "stitch/numerics/adam.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

struct RegressionConfig {
    std::int64_t steps = 5000;
    int batch_size = 64;
    AdamConfig adam{.learning_rate = 1e-3};
    bool cosine_lr = true;
    int log_every = 100;
};

struct RegressionResult {
    std::vector<double> loss_curve; // mean squared error per block of steps
    double final_loss = 0.0;
};

/// Minibatch squared-error regression of Y (out x n) on X (in x n).
/// Loss is the per-sample squared norm averaged over the batch.
inline RegressionResult train_regression(Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                         const RegressionConfig& cfg, RngStream rng, bool init_params = true) {
    if (X.cols() == 0) throw PreconditionError("train_regression: no samples");
    if (X.cols() != Y.cols() || X.rows() != net.input_dim() || Y.rows() != net.output_dim())
        throw DimensionError("train_regression: data shape does not match the network");
    if (init_params) {
        RngStream init = rng.substream(0x1417);
        net.init(init);
    }
    AdamState opt(net.num_params(), cfg.adam);
    const int B = cfg.batch_size;
    Eigen::MatrixXd xb(X.rows(), B), yb(Y.rows(), B);
    Eigen::VectorXd grad(net.num_params());
    MlpTape tape;
    RegressionResult res;
    double block = 0.0;
    int block_n = 0;
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(X.cols())));
            xb.col(b) = X.col(i);
            yb.col(b) = Y.col(i);
        }
        const Eigen::MatrixXd diff = net.forward(xb, &tape) - yb;
        const double loss = diff.squaredNorm() / B;
        if (!std::isfinite(loss))
            throw NumericalError("train_regression diverged at step " + std::to_string(step));
        grad.setZero();
        net.backward(tape, (2.0 / B) * diff, &grad);
        opt.step(net.params(), grad, cfg.cosine_lr ? cosine_lr_scale(step, cfg.steps) : 1.0);
        block += loss;
        if (++block_n == cfg.log_every || step + 1 == cfg.steps) {
            res.loss_curve.push_back(block / block_n);
            block = 0.0;
            block_n = 0;
        }
    }
    res.final_loss = res.loss_curve.empty() ? 0.0 : res.loss_curve.back();
    return res;
}

} // namespace stitch

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "stitch/error.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

enum class Activation { identity, relu, sigmoid, tanh };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    throw FormatError("unknown activation '" + std::string(s) + "'");
}

/// Sinusoidal embedding of a diffusion step index, width must be even.
inline Eigen::VectorXd time_embedding(double k, int width) {
    Eigen::VectorXd e(width);
    const int half = width / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e(i) = std::sin(k * freq);
        e(half + i) = std::cos(k * freq);
    }
    return e;
}

/// Saved activations of one batched forward pass, consumed by Mlp::backward.
struct MlpTape {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;  // affine outputs per layer
    std::vector<Eigen::MatrixXd> post; // activated outputs per layer
};

/// Fully connected network acting on column batches (features x batch).
/// Parameters live in one flat vector, layer by layer: W (row-major
/// out x in, stored column-major by Eigen) followed by b.
class Mlp {
public:
    Mlp() = default;

    Mlp(std::vector<int> layer_dims, Activation hidden, Activation output = Activation::identity)
        : dims_(std::move(layer_dims)), hidden_(hidden), output_(output) {
        if (dims_.size() < 2) throw DimensionError("Mlp needs at least input and output dims");
        for (int d : dims_)
            if (d <= 0) throw DimensionError("Mlp layer dims must be positive");
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_.push_back(n);
            n += static_cast<std::size_t>(dims_[l + 1]) * (dims_[l] + 1);
        }
        params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    }

    /// He/Xavier-style uniform init, biases zero.
    void init(RngStream& rng) {
        for (std::size_t l = 0; l < num_layers(); ++l) {
            auto w = weight(l);
            const double fan_in = dims_[l];
            const double bound = (hidden_ == Activation::relu ? std::sqrt(6.0 / fan_in) : std::sqrt(3.0 / fan_in));
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
            bias(l).setZero();
        }
    }

    std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
    int input_dim() const noexcept { return dims_.front(); }
    int output_dim() const noexcept { return dims_.back(); }
    const std::vector<int>& dims() const noexcept { return dims_; }
    Activation hidden_activation() const noexcept { return hidden_; }
    Activation output_activation() const noexcept { return output_; }
    Eigen::Index num_params() const noexcept { return params_.size(); }

    Eigen::VectorXd& params() noexcept { return params_; }
    const Eigen::VectorXd& params() const noexcept { return params_; }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t l) {
        return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const {
        return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l) {
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const {
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpTape* tape = nullptr) const {
        if (x.rows() != input_dim())
            throw DimensionError("Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                                 std::to_string(input_dim()));
        if (tape) {
            tape->input = x;
            tape->pre.resize(num_layers());
            tape->post.resize(num_layers());
        }
        Eigen::MatrixXd h = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd z = weight(l) * h;
            z.colwise() += bias(l);
            const Activation act = (l + 1 == num_layers()) ? output_ : hidden_;
            h = activate(z, act);
            if (tape) {
                tape->pre[l] = std::move(z);
                tape->post[l] = h;
            }
        }
        return h;
    }

    Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const {
        return forward(Eigen::MatrixXd(x)).col(0);
    }

    /// Reverse-mode pass. `upstream` is dLoss/dOutput for the taped batch;
    /// parameter gradients are accumulated into `grad` (same layout as params()).
    /// Returns dLoss/dInput.
    Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& upstream, Eigen::VectorXd* grad) const {
        if (tape.pre.size() != num_layers()) throw DimensionError("Mlp backward without matching forward tape");
        if (upstream.rows() != output_dim() || upstream.cols() != tape.input.cols())
            throw DimensionError("Mlp backward upstream gradient shape mismatch");
        if (grad && grad->size() != num_params()) grad->setZero(num_params());
        Eigen::MatrixXd delta = upstream;
        for (std::size_t li = num_layers(); li-- > 0;) {
            const Activation act = (li + 1 == num_layers()) ? output_ : hidden_;
            delta.array() *= activation_derivative(tape.pre[li], tape.post[li], act).array();
            const Eigen::MatrixXd& in = li == 0 ? tape.input : tape.post[li - 1];
            if (grad) {
                Eigen::Map<Eigen::MatrixXd> gw(grad->data() + offsets_[li], dims_[li + 1], dims_[li]);
                Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets_[li] + dims_[li + 1] * dims_[li],
                                               dims_[li + 1]);
                gw.noalias() += delta * in.transpose();
                gb += delta.rowwise().sum();
            }
            delta = weight(li).transpose() * delta;
        }
        return delta;
    }

    /// Round every parameter to the nearest 32-bit float, matching what a
    /// checkpoint round trip preserves.
    void round_to_float32() {
        for (Eigen::Index i = 0; i < params_.size(); ++i) params_(i) = static_cast<double>(static_cast<float>(params_(i)));
    }

private:
    static Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
        switch (act) {
            case Activation::identity: return z;
            case Activation::relu: return z.cwiseMax(0.0);
            case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
            case Activation::tanh: return z.array().tanh().matrix();
        }
        return z;
    }

    static Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, const Eigen::MatrixXd& h, Activation act) {
        switch (act) {
            case Activation::identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
            case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
            case Activation::sigmoid: return (h.array() * (1.0 - h.array())).matrix();
            case Activation::tanh: return (1.0 - h.array().square()).matrix();
        }
        return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    }

    std::vector<int> dims_;
    Activation hidden_ = Activation::relu;
    Activation output_ = Activation::identity;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd params_;
};

} // namespace stitch

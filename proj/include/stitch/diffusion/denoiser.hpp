#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/diffusion/schedule.hpp"
#include "stitch/error.hpp"
#include "stitch/numerics/adam.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

namespace stitch {

/// How window states are represented to the network.
/// absolute: raw states, and the normalized cond state is an extra input.
/// relative: every state in the window minus the cond state; no cond input,
/// so the model is translation invariant in state space.
enum class WindowFrame { absolute, relative };

inline const char* to_string(WindowFrame f) { return f == WindowFrame::relative ? "relative" : "absolute"; }

inline WindowFrame window_frame_from_string(const std::string& s) {
    if (s == "absolute") return WindowFrame::absolute;
    if (s == "relative") return WindowFrame::relative;
    throw ConfigError("unknown window frame '" + s + "'");
}

/// Subtract (sign = -1) or add back (+1) each column's anchor on every state block.
inline Mat shift_window_states(const Mat& windows, const Mat& anchors, const WindowLayout& L, double sign) {
    Mat out = windows;
    for (int u = 0; u <= L.w; ++u) out.middleRows(L.state_offset(u), L.state_dim) += sign * anchors;
    return out;
}

/// Normalization stats from windows as the network will see them. Masked
/// (padded) entries are skipped; in the relative frame the first state is
/// always zero and is left out.
inline NormStats fit_window_norm(const WindowBatch& data, WindowFrame frame) {
    if (data.size() == 0) throw PreconditionError("fit_window_norm: no windows");
    const auto& L = data.layout;
    const Mat x = frame == WindowFrame::relative ? shift_window_states(data.windows, data.cond_states, L, -1.0)
                                                 : data.windows;
    auto moments = [&](int dim, auto offsets) {
        Vec sum = Vec::Zero(dim), sq = Vec::Zero(dim);
        double n = 0.0;
        for (Eigen::Index b = 0; b < x.cols(); ++b)
            for (int off : offsets) {
                if (data.mask(off, b) == 0.0) continue;
                const Vec v = x.col(b).segment(off, dim);
                sum += v;
                sq += v.cwiseProduct(v);
                n += 1.0;
            }
        if (n == 0.0) return std::pair<Vec, Vec>{Vec::Zero(dim), Vec::Ones(dim)};
        const Vec mean = sum / n;
        const Vec var = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
        return std::pair<Vec, Vec>{mean, var.cwiseSqrt().cwiseMax(NormStats::kStdFloor)};
    };
    std::vector<int> soff, aoff;
    for (int u = frame == WindowFrame::relative ? 1 : 0; u <= L.w; ++u) soff.push_back(L.state_offset(u));
    for (int u = 0; u < L.w; ++u) aoff.push_back(L.action_offset(u));
    NormStats ns;
    std::tie(ns.state_mean, ns.state_std) = moments(L.state_dim, soff);
    std::tie(ns.action_mean, ns.action_std) = moments(L.action_dim, aoff);
    return ns;
}

/// Conditional noise predictor eps_theta(tau^k, k | s_cond) over flattened
/// windows in normalized coordinates. The MLP sees
/// [noisy window ; sinusoidal embedding of k ; normalized cond state],
/// the last block only in the absolute frame.
class DenoiserModel {
public:
    DenoiserModel() = default;

    DenoiserModel(WindowLayout layout, NoiseSchedule schedule, NormStats norm, std::vector<int> hidden,
                  int embed_width = 16, Activation act = Activation::relu, WindowFrame frame = WindowFrame::absolute)
        : layout_(layout), schedule_(std::move(schedule)), norm_(std::move(norm)), embed_width_(embed_width),
          frame_(frame) {
        if (embed_width_ < 2 || embed_width_ % 2 != 0) throw PreconditionError("time embedding width must be even and >= 2");
        std::vector<int> dims{input_width()};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(layout_.width());
        net_ = Mlp(std::move(dims), act);
        build_embeddings();
    }

    /// Rebuild from stored parts (checkpoint loading).
    DenoiserModel(WindowLayout layout, NoiseSchedule schedule, NormStats norm, Mlp net, int embed_width,
                  WindowFrame frame = WindowFrame::absolute)
        : layout_(layout), schedule_(std::move(schedule)), norm_(std::move(norm)), net_(std::move(net)),
          embed_width_(embed_width), frame_(frame) {
        if (net_.input_dim() != input_width() || net_.output_dim() != layout_.width())
            throw DimensionError("denoiser network dims do not match the window layout");
        build_embeddings();
    }

    const WindowLayout& layout() const noexcept { return layout_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }
    const NormStats& norm() const noexcept { return norm_; }
    int embed_width() const noexcept { return embed_width_; }
    int width() const noexcept { return layout_.width(); }
    WindowFrame frame() const noexcept { return frame_; }
    int cond_dim() const noexcept { return frame_ == WindowFrame::absolute ? layout_.state_dim : 0; }
    int input_width() const noexcept { return layout_.width() + embed_width_ + cond_dim(); }
    Mlp& net() noexcept { return net_; }
    const Mlp& net() const noexcept { return net_; }

    const Mat& embeddings() const noexcept { return embeddings_; }

    /// Raw windows -> normalized network coordinates (and back), given raw cond states.
    Mat encode(const Mat& raw, const Mat& cond) const {
        return norm_.normalize_windows(
            frame_ == WindowFrame::relative ? shift_window_states(raw, cond, layout_, -1.0) : raw, layout_);
    }
    Mat decode(const Mat& x_norm, const Mat& cond) const {
        Mat raw = norm_.denormalize_windows(x_norm, layout_);
        return frame_ == WindowFrame::relative ? shift_window_states(raw, cond, layout_, 1.0) : raw;
    }

    /// Extra network input for raw cond states (empty rows in the relative frame).
    Mat cond_features(const Mat& cond) const {
        Mat out(cond_dim(), cond.cols());
        if (cond_dim() > 0)
            for (Eigen::Index b = 0; b < cond.cols(); ++b) out.col(b) = norm_.normalize_state(cond.col(b));
        return out;
    }

    /// Normalized first-state block that inpainting writes for raw cond states.
    Mat first_state(const Mat& cond) const {
        Mat out(layout_.state_dim, cond.cols());
        const Vec zero = Vec::Zero(layout_.state_dim);
        for (Eigen::Index b = 0; b < cond.cols(); ++b)
            out.col(b) = norm_.normalize_state(frame_ == WindowFrame::relative ? zero : Vec(cond.col(b)));
        return out;
    }

    Mat assemble_input(const Mat& x_norm, int k, const Mat& cond_feat) const {
        const auto B = x_norm.cols();
        Mat in(input_width(), B);
        in.topRows(layout_.width()) = x_norm;
        in.middleRows(layout_.width(), embed_width_) = embeddings_.col(k).replicate(1, B);
        if (cond_dim() > 0) in.bottomRows(cond_dim()) = cond_feat;
        return in;
    }

    /// Predicted noise for a batch (all columns at the same step k).
    /// cond_feat comes from cond_features().
    Mat predict_noise(const Mat& x_norm, int k, const Mat& cond_feat) const {
        if (x_norm.rows() != width() || cond_feat.rows() != cond_dim() ||
            (cond_dim() > 0 && x_norm.cols() != cond_feat.cols()))
            throw DimensionError("predict_noise: batch shape mismatch");
        return net_.forward(assemble_input(x_norm, k, cond_feat));
    }

    /// mu_{k-1} = (tau^k - ((1 - alpha_k) / sigma_k) eps_theta) / sqrt(alpha_k).
    Mat denoise_mean(const Mat& x_norm, int k, const Mat& cond_feat) const {
        if (k < 1 || k > schedule_.K()) throw PreconditionError("denoise_mean: k outside [1, K]");
        return reverse_mean(x_norm, predict_noise(x_norm, k, cond_feat), schedule_.alpha(k), schedule_.sigma(k));
    }

private:
    void build_embeddings() {
        embeddings_.resize(embed_width_, schedule_.K() + 1);
        for (int k = 0; k <= schedule_.K(); ++k) embeddings_.col(k) = time_embedding(k, embed_width_);
    }

    WindowLayout layout_;
    NoiseSchedule schedule_;
    NormStats norm_;
    Mlp net_;
    int embed_width_ = 16;
    WindowFrame frame_ = WindowFrame::absolute;
    Mat embeddings_;
};

struct DenoiserTrainConfig {
    std::int64_t steps = 20000;
    int batch_size = 128;
    AdamConfig adam{.learning_rate = 1e-3};
    bool cosine_lr = true;
    int log_every = 100; // loss curve resolution (mean loss per block of steps)
    // Write the clean first state over the noised one, as the sampler does,
    // and drop those coordinates from the loss.
    bool inpaint_cond = false;
};

struct TrainResult {
    std::vector<double> loss_curve;
    double final_loss = 0.0;
};

/// Minimizes E || eps - eps_theta(sqrt(abar_k) tau^0 + sigma_k eps, k | s^0) ||^2
/// (summed over window coordinates, averaged over the batch) with k uniform on
/// 1..K and windows uniform over the batch. The conditioning state is a clean
/// side input (absolute frame); with inpaint_cond it also overwrites the
/// window's first-state coordinates, matching guided_sample.
/// `windows` and `cond` are raw (unnormalized); the model's NormStats are applied here.
inline TrainResult train_denoiser(DenoiserModel& model, const WindowBatch& data, const DenoiserTrainConfig& cfg,
                                  RngStream rng, bool init_params = true) {
    if (data.size() == 0) throw PreconditionError("train_denoiser: no windows");
    if (data.layout.width() != model.width()) throw DimensionError("train_denoiser: window width mismatch");
    const auto& L = model.layout();
    const auto& sched = model.schedule();
    RngStream init_rng = rng.substream(0x1417);
    if (init_params) model.net().init(init_rng);

    const Mat x0_all = model.encode(data.windows, data.cond_states);
    const Mat first_all = model.first_state(data.cond_states);
    const Mat cond_all = model.cond_features(data.cond_states);
    const int C = model.cond_dim();

    AdamState opt(model.net().num_params(), cfg.adam);
    TrainResult result;
    const int B = cfg.batch_size;
    const int D = model.width();
    Mat x0(D, B), mask(D, B), eps(D, B), xk(D, B);
    Vec grad(model.net().num_params());
    double block_loss = 0.0;
    int block_n = 0;
    MlpTape tape;
    // Per-step noise levels differ across the batch, so time embeddings are filled per column.
    Mat input(model.input_width(), B);
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size())));
            const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sched.K())));
            x0.col(b) = x0_all.col(idx);
            mask.col(b) = data.mask.col(idx);
            if (cfg.inpaint_cond) mask.col(b).head(L.state_dim).setZero();
            for (int d = 0; d < D; ++d) eps(d, b) = rng.normal();
            xk.col(b) = std::sqrt(sched.alpha_bar(k)) * x0.col(b) + sched.sigma(k) * eps.col(b);
            if (cfg.inpaint_cond) xk.col(b).head(L.state_dim) = first_all.col(idx);
            input.col(b).head(D) = xk.col(b);
            input.col(b).segment(D, model.embed_width()) = model.embeddings().col(k);
            if (C > 0) input.col(b).tail(C) = cond_all.col(idx);
        }
        const Mat pred = model.net().forward(input, &tape);
        const Mat diff = (pred - eps).cwiseProduct(mask);
        const double loss = diff.squaredNorm() / B;
        if (!std::isfinite(loss))
            throw NumericalError("train_denoiser diverged at step " + std::to_string(step) + " (loss " +
                                 std::to_string(loss) + ")");
        grad.setZero();
        model.net().backward(tape, (2.0 / B) * diff, &grad);
        opt.step(model.net().params(), grad, cfg.cosine_lr ? cosine_lr_scale(step, cfg.steps) : 1.0);
        block_loss += loss;
        if (++block_n == cfg.log_every || step + 1 == cfg.steps) {
            result.loss_curve.push_back(block_loss / block_n);
            block_loss = 0.0;
            block_n = 0;
        }
    }
    result.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    return result;
}

} // namespace stitch

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "stitch/dataset/trajectory.hpp"
#include "stitch/error.hpp"

namespace stitch {

struct DatasetMeta {
    std::string env = "unknown";
    int state_dim = 0;
    int action_dim = 0;
    int horizon = 0;
    double gamma = 0.99;
    /// Extra ordered entries written verbatim to the meta file (e.g. sub-policy counts).
    std::vector<std::pair<std::string, std::string>> extra;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<Trajectory> episodes;

    std::size_t num_transitions() const {
        std::size_t n = 0;
        for (const auto& e : episodes) n += static_cast<std::size_t>(e.length());
        return n;
    }
    double mean_discounted_return() const {
        double sum = 0.0;
        for (const auto& e : episodes) sum += e.discounted_return(meta.gamma);
        return episodes.empty() ? 0.0 : sum / static_cast<double>(episodes.size());
    }
};

/// Round every stored number to 32-bit float precision (what the on-disk format keeps).
inline void quantize_float32(Dataset& ds) {
    auto q = [](auto& m) { m = m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); }); };
    for (auto& e : ds.episodes) {
        q(e.states);
        q(e.actions);
        q(e.rewards);
    }
}

struct Transition {
    Vec s;
    Vec a;
    double r = 0.0;
    Vec s_next;
    bool done = false;
    int t = 0;
    std::size_t episode = 0;
};

inline std::vector<Transition> transitions(const Dataset& ds) {
    std::vector<Transition> out;
    out.reserve(ds.num_transitions());
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
        const auto& tr = ds.episodes[e];
        for (Eigen::Index t = 0; t < tr.length(); ++t)
            out.push_back({tr.states.col(t), tr.actions.col(t), tr.rewards(t), tr.states.col(t + 1),
                           tr.dones[static_cast<std::size_t>(t)], static_cast<int>(t), e});
    }
    return out;
}

/// Column layout of a flattened length-w window
/// (s_t, a_t, s_{t+1}, a_{t+1}, ..., s_{t+w-1}, a_{t+w-1}, s_{t+w}).
struct WindowLayout {
    int state_dim = 0;
    int action_dim = 0;
    int w = 1;

    int step_width() const noexcept { return state_dim + action_dim; }
    int width() const noexcept { return w * step_width() + state_dim; }
    int state_offset(int u) const noexcept { return u * step_width(); }
    int action_offset(int u) const noexcept { return u * step_width() + state_dim; }
};

struct WindowBatch {
    WindowLayout layout;
    Mat windows;     // width x n
    Mat cond_states; // state_dim x n (each window's own first state)
    Mat mask;        // width x n, 1 where the coordinate carries data
    std::vector<std::pair<std::size_t, int>> origin; // (episode, offset)

    Eigen::Index size() const noexcept { return windows.cols(); }
};

inline Vec flatten_window(const Trajectory& tr, Eigen::Index t0, const WindowLayout& L) {
    Vec x(L.width());
    for (int u = 0; u < L.w; ++u) {
        x.segment(L.state_offset(u), L.state_dim) = tr.states.col(t0 + u);
        x.segment(L.action_offset(u), L.action_dim) = tr.actions.col(t0 + u);
    }
    x.segment(L.state_offset(L.w), L.state_dim) = tr.states.col(t0 + L.w);
    return x;
}

/// Every window at offsets 0, stride, 2*stride, ... with t + w <= T that does
/// not run past a done flag. Episodes shorter than w are skipped unless
/// `pad_short` is set, in which case they contribute one zero-padded window
/// with the padded coordinates masked out.
inline WindowBatch slice_windows(const std::vector<Trajectory>& episodes, int w, int stride, bool pad_short = false) {
    if (episodes.empty()) throw PreconditionError("slice_windows: empty dataset");
    if (w < 1 || stride < 1) throw PreconditionError("slice_windows: w and stride must be >= 1");
    WindowLayout L{static_cast<int>(episodes.front().state_dim()), static_cast<int>(episodes.front().action_dim()), w};
    std::vector<Vec> cols, conds, masks;
    std::vector<std::pair<std::size_t, int>> origin;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& tr = episodes[e];
        const auto T = tr.length();
        if (T < w) {
            if (!pad_short || T == 0) continue;
            Vec x = Vec::Zero(L.width()), m = Vec::Zero(L.width());
            for (Eigen::Index u = 0; u < T; ++u) {
                x.segment(L.state_offset(static_cast<int>(u)), L.state_dim) = tr.states.col(u);
                x.segment(L.action_offset(static_cast<int>(u)), L.action_dim) = tr.actions.col(u);
                m.segment(L.state_offset(static_cast<int>(u)), L.step_width()).setOnes();
            }
            x.segment(L.state_offset(static_cast<int>(T)), L.state_dim) = tr.states.col(T);
            m.segment(L.state_offset(static_cast<int>(T)), L.state_dim).setOnes();
            cols.push_back(std::move(x));
            masks.push_back(std::move(m));
            conds.push_back(tr.states.col(0));
            origin.emplace_back(e, 0);
            continue;
        }
        for (Eigen::Index t0 = 0; t0 + w <= T; t0 += stride) {
            bool crosses = false;
            for (Eigen::Index u = t0; u + 1 < t0 + w; ++u) crosses = crosses || tr.dones[static_cast<std::size_t>(u)];
            if (crosses) break;
            cols.push_back(flatten_window(tr, t0, L));
            masks.push_back(Vec::Ones(L.width()));
            conds.push_back(tr.states.col(t0));
            origin.emplace_back(e, static_cast<int>(t0));
        }
    }
    WindowBatch b;
    b.layout = L;
    b.windows.resize(L.width(), static_cast<Eigen::Index>(cols.size()));
    b.mask.resize(L.width(), static_cast<Eigen::Index>(cols.size()));
    b.cond_states.resize(L.state_dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        b.windows.col(static_cast<Eigen::Index>(i)) = cols[i];
        b.mask.col(static_cast<Eigen::Index>(i)) = masks[i];
        b.cond_states.col(static_cast<Eigen::Index>(i)) = conds[i];
    }
    b.origin = std::move(origin);
    return b;
}

/// Per-coordinate affine normalization fitted on behavior data.
/// Population standard deviation, floored at 1e-6.
struct NormStats {
    static constexpr double kStdFloor = 1e-6;

    Vec state_mean, state_std;
    Vec action_mean, action_std;

    static NormStats identity(int state_dim, int action_dim) {
        return {Vec::Zero(state_dim), Vec::Ones(state_dim), Vec::Zero(action_dim), Vec::Ones(action_dim)};
    }

    /// Single-pass Welford over all states (including terminal) and all actions.
    static NormStats fit(const std::vector<Trajectory>& episodes) {
        if (episodes.empty()) throw PreconditionError("fit_norm: empty dataset");
        const auto sd = episodes.front().state_dim();
        const auto ad = episodes.front().action_dim();
        auto welford = [](Eigen::Index dim, auto&& each) {
            Vec mean = Vec::Zero(dim), m2 = Vec::Zero(dim);
            double n = 0.0;
            each([&](const auto& x) {
                n += 1.0;
                const Vec delta = x - mean;
                mean += delta / n;
                m2 += delta.cwiseProduct(x - mean);
            });
            if (n == 0.0) return std::pair<Vec, Vec>{mean, Vec::Ones(dim)};
            Vec sd_v = (m2 / n).cwiseSqrt().cwiseMax(kStdFloor);
            return std::pair<Vec, Vec>{mean, sd_v};
        };
        NormStats ns;
        std::tie(ns.state_mean, ns.state_std) = welford(sd, [&](auto&& f) {
            for (const auto& e : episodes)
                for (Eigen::Index t = 0; t < e.states.cols(); ++t) f(e.states.col(t));
        });
        std::tie(ns.action_mean, ns.action_std) = welford(ad, [&](auto&& f) {
            for (const auto& e : episodes)
                for (Eigen::Index t = 0; t < e.actions.cols(); ++t) f(e.actions.col(t));
        });
        return ns;
    }

    Vec normalize_state(const Vec& s) const { return (s - state_mean).cwiseQuotient(state_std); }
    Vec denormalize_state(const Vec& z) const { return z.cwiseProduct(state_std) + state_mean; }
    Vec normalize_action(const Vec& a) const { return (a - action_mean).cwiseQuotient(action_std); }
    Vec denormalize_action(const Vec& z) const { return z.cwiseProduct(action_std) + action_mean; }

    /// Per-coordinate (mean, std) of a flattened window.
    std::pair<Vec, Vec> window_affine(const WindowLayout& L) const {
        Vec mean(L.width()), scale(L.width());
        for (int u = 0; u < L.w; ++u) {
            mean.segment(L.state_offset(u), L.state_dim) = state_mean;
            scale.segment(L.state_offset(u), L.state_dim) = state_std;
            mean.segment(L.action_offset(u), L.action_dim) = action_mean;
            scale.segment(L.action_offset(u), L.action_dim) = action_std;
        }
        mean.segment(L.state_offset(L.w), L.state_dim) = state_mean;
        scale.segment(L.state_offset(L.w), L.state_dim) = state_std;
        return {mean, scale};
    }

    Mat normalize_windows(const Mat& x, const WindowLayout& L) const {
        const auto [mean, scale] = window_affine(L);
        return (x.colwise() - mean).array().colwise() / scale.array();
    }
    Mat denormalize_windows(const Mat& z, const WindowLayout& L) const {
        const auto [mean, scale] = window_affine(L);
        return (z.array().colwise() * scale.array()).matrix().colwise() + mean;
    }
};

} // namespace stitch

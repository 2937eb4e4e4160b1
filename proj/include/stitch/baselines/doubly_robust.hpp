#pragma once

#include <functional>
#include <vector>

#include "stitch/baselines/fqe.hpp"
#include "stitch/baselines/importance.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"

namespace stitch {

using QFn = std::function<double(int t, const Vec& s, const Vec& a)>;
using VFn = std::function<double(int t, const Vec& s, RngStream& rng)>;

inline QFn zero_q() {
    return [](int, const Vec&, const Vec&) { return 0.0; };
}
inline VFn zero_v() {
    return [](int, const Vec&, RngStream&) { return 0.0; };
}

/// Q^ and V^ from a fitted Q model; V^ averages `n_samples` actions from pi
/// (exact expectation for tabular policies).
inline QFn q_of(const QModel& m) {
    return [&m](int t, const Vec& s, const Vec& a) { return m.q(t, s, a); };
}
inline VFn v_of(const QModel& m, const Policy& pi, int n_samples = 8) {
    return [&m, &pi, n_samples](int t, const Vec& s, RngStream& rng) { return m.value(t, s, pi, rng, n_samples); };
}

/// Exact finite-horizon Q and V of a tabular policy.
inline QFn tabular_q(const TabularMdp& mdp, const TabularPolicy& pi) {
    auto q = std::make_shared<std::vector<std::vector<std::vector<double>>>>(mdp.q_values(pi));
    return [q](int t, const Vec& s, const Vec& a) {
        return (*q)[static_cast<std::size_t>(t)][static_cast<std::size_t>(std::lround(s(0)))]
                   [static_cast<std::size_t>(std::lround(a(0)))];
    };
}
inline VFn tabular_v(const TabularMdp& mdp, const TabularPolicy& pi) {
    auto q = std::make_shared<std::vector<std::vector<std::vector<double>>>>(mdp.q_values(pi));
    auto p = std::make_shared<TabularPolicy>(pi);
    return [q, p](int t, const Vec& s, RngStream&) {
        const auto si = static_cast<int>(std::lround(s(0)));
        double v = 0.0;
        for (int a = 0; a < p->num_actions(); ++a)
            v += p->p(si, a) * (*q)[static_cast<std::size_t>(t)][static_cast<std::size_t>(si)][static_cast<std::size_t>(a)];
        return v;
    };
}

/// Doubly robust estimate, computed backward from the end of each episode:
///   V_DR = 0 past the last step,
///   V_DR(t) = V^(s_t) + rho_t (r_t + gamma V_DR(t + 1) - Q^(s_t, a_t)),
/// and J^ is the mean of V_DR(0). Episode e draws V^ samples from root.substream(e).
inline IsEstimate dr_estimate(const std::vector<Trajectory>& data, const Policy& pi, const Policy& beta, double gamma,
                              const QFn& q, const VFn& v, const RngStream& root = RngStream(0, 0)) {
    if (data.empty()) throw PreconditionError("dr_estimate: empty dataset");
    IsEstimate out;
    for (std::size_t e = 0; e < data.size(); ++e) {
        const auto& tr = data[e];
        RngStream rng = root.substream(e);
        double vdr = 0.0;
        for (Eigen::Index t = tr.length() - 1; t >= 0; --t) {
            const Vec s = tr.states.col(t), a = tr.actions.col(t);
            const double rho = detail::step_ratio(pi, beta, tr, e, t);
            const int ti = static_cast<int>(t);
            vdr = v(ti, s, rng) + rho * (tr.rewards(t) + gamma * vdr - q(ti, s, a));
        }
        out.per_episode.push_back(vdr);
    }
    const ValueEstimate est = mean_and_stderr(out.per_episode);
    out.estimate = est.value;
    out.std_error = est.std_error;
    return out;
}

} // namespace stitch

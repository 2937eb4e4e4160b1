#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stitch/dataset/trajectory.hpp"
#include "stitch/envs/environment.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"

namespace stitch {

struct IsEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_clipped = 0;          // cumulative ratios that hit the clip
    std::vector<double> per_episode;    // weighted return of each episode
};

namespace detail {

/// pi(a|s) / beta(a|s) at step t of episode e, with a readable error on zero behavior density.
inline double step_ratio(const Policy& pi, const Policy& beta, const Trajectory& tr, std::size_t e, Eigen::Index t) {
    if (!pi.has_density() || !beta.has_density())
        throw PreconditionError("importance sampling needs policies with densities");
    const Vec s = tr.states.col(t), a = tr.actions.col(t);
    const double lb = beta.log_prob(s, a);
    if (!std::isfinite(lb))
        throw NumericalError("zero behavior density at episode " + std::to_string(e) + ", step " + std::to_string(t));
    return std::exp(pi.log_prob(s, a) - lb);
}

} // namespace detail

/// Per-decision importance sampling:
///   J^ = mean_i sum_t gamma^t (prod_{u<=t} pi/beta) r_t,
/// with cumulative ratios clipped at `clip`.
inline IsEstimate pdis_estimate(const std::vector<Trajectory>& data, const Policy& pi, const Policy& beta, double gamma,
                                double clip = 1e6) {
    if (data.empty()) throw PreconditionError("pdis_estimate: empty dataset");
    IsEstimate out;
    out.per_episode.reserve(data.size());
    for (std::size_t e = 0; e < data.size(); ++e) {
        const auto& tr = data[e];
        double rho = 1.0, disc = 1.0, g = 0.0;
        for (Eigen::Index t = 0; t < tr.length(); ++t) {
            rho *= detail::step_ratio(pi, beta, tr, e, t);
            if (rho > clip) {
                rho = clip;
                ++out.n_clipped;
            }
            g += disc * rho * tr.rewards(t);
            disc *= gamma;
        }
        out.per_episode.push_back(g);
    }
    const ValueEstimate v = mean_and_stderr(out.per_episode);
    out.estimate = v.value;
    out.std_error = v.std_error;
    return out;
}

} // namespace stitch

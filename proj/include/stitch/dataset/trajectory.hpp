#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "stitch/error.hpp"

namespace stitch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One episode: states has one more column than actions (s_0 .. s_T).
struct Trajectory {
    Mat states;  // state_dim x (T+1)
    Mat actions; // action_dim x T
    Vec rewards; // T
    std::vector<bool> dones;

    Eigen::Index length() const noexcept { return actions.cols(); }
    Eigen::Index state_dim() const noexcept { return states.rows(); }
    Eigen::Index action_dim() const noexcept { return actions.rows(); }

    double discounted_return(double gamma) const {
        double g = 0.0, disc = 1.0;
        for (Eigen::Index t = 0; t < rewards.size(); ++t) {
            g += disc * rewards(t);
            disc *= gamma;
        }
        return g;
    }

    /// Throws if array lengths disagree or any entry is non-finite.
    void validate() const {
        const auto T = actions.cols();
        if (states.cols() != T + 1 || rewards.size() != T || static_cast<Eigen::Index>(dones.size()) != T)
            throw DimensionError("trajectory arrays have inconsistent lengths");
        if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite())
            throw NumericalError("trajectory contains NaN or Inf");
    }
};

inline Trajectory make_trajectory(Eigen::Index state_dim, Eigen::Index action_dim, Eigen::Index T) {
    Trajectory tr;
    tr.states = Mat::Zero(state_dim, T + 1);
    tr.actions = Mat::Zero(action_dim, T);
    tr.rewards = Vec::Zero(T);
    tr.dones.assign(static_cast<std::size_t>(T), false);
    return tr;
}

/// Keep the first `T` steps (and T+1 states).
inline Trajectory truncate(const Trajectory& tr, Eigen::Index T) {
    Trajectory out;
    out.states = tr.states.leftCols(T + 1);
    out.actions = tr.actions.leftCols(T);
    out.rewards = tr.rewards.head(T);
    out.dones.assign(tr.dones.begin(), tr.dones.begin() + T);
    return out;
}

} // namespace stitch

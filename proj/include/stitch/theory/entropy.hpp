#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stitch/envs/environment.hpp"
#include "stitch/envs/policy.hpp"
#include "stitch/error.hpp"

namespace stitch {

inline constexpr double kEntropySlack = -1e-10;
inline constexpr double kEnumerationBudget = 1e6;

struct EntropyCheck {
    double h_given_state = 0.0;   // H(tau | S_t)
    double h_given_history = 0.0; // H(tau | S_0, A_0, ..., S_t)
    double slack = 0.0;           // h_given_state - h_given_history
    bool holds = false;
};

namespace detail {

inline double entropy_of(const std::unordered_map<std::uint64_t, double>& m) {
    double h = 0.0;
    for (const auto& [k, p] : m)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

} // namespace detail

/// Exact conditional entropies of the future tau = (S_t, A_t, ..., S_horizon)
/// by enumerating every path. The behavior is a latent mixture: component u
/// is drawn once per episode with probability weights[u] and then followed
/// for the whole episode, so the history can carry information the state
/// alone does not. A single component is an ordinary Markov policy.
inline EntropyCheck entropy_inequality_check(const TabularMdp& mdp, const std::vector<TabularPolicy>& components,
                                             const std::vector<double>& weights, int t, int horizon) {
    mdp.validate();
    if (components.empty() || components.size() != weights.size())
        throw DimensionError("entropy check: one weight per mixture component");
    for (const auto& c : components)
        if (c.num_states() != mdp.num_states || c.num_actions() != mdp.num_actions)
            throw DimensionError("entropy check: policy table does not match the MDP");
    if (horizon < 1 || t < 0 || t > horizon) throw PreconditionError("entropy check: need 0 <= t <= horizon, horizon >= 1");
    const int S = mdp.num_states, A = mdp.num_actions;
    const double paths = std::pow(static_cast<double>(S), horizon + 1) * std::pow(static_cast<double>(A), horizon);
    if (paths > kEnumerationBudget)
        throw PreconditionError("entropy check: enumeration budget exceeded (" + std::to_string(paths) + " paths)");

    const std::size_t U = components.size();
    std::unordered_map<std::uint64_t, double> full, prefix, suffix, state;
    std::vector<int> ss(static_cast<std::size_t>(horizon + 1)), as(static_cast<std::size_t>(horizon));

    // Mixed-radix code of states[from..to] and the actions between them.
    auto code = [&](int from, int to) {
        std::uint64_t k = 0;
        for (int i = from; i <= to; ++i) {
            k = k * static_cast<std::uint64_t>(S) + static_cast<std::uint64_t>(ss[i]);
            if (i < to) k = k * static_cast<std::uint64_t>(A) + static_cast<std::uint64_t>(as[i]);
        }
        return k;
    };

    // pu[u]: probability of the path so far under component u.
    auto rec = [&](auto&& self, int depth, const std::vector<double>& pu) -> void {
        if (depth == horizon) {
            double p = 0.0;
            for (std::size_t u = 0; u < U; ++u) p += weights[u] * pu[u];
            if (p <= 0.0) return;
            full[code(0, horizon)] += p;
            prefix[code(0, t)] += p;
            suffix[code(t, horizon)] += p;
            state[static_cast<std::uint64_t>(ss[t])] += p;
            return;
        }
        const int s = ss[depth];
        std::vector<double> next(U);
        for (int a = 0; a < A; ++a) {
            as[depth] = a;
            for (int n = 0; n < S; ++n) {
                const double tr = mdp.transition[s][a][n];
                if (tr == 0.0) continue;
                bool any = false;
                for (std::size_t u = 0; u < U; ++u) {
                    next[u] = pu[u] * components[u].p(s, a) * tr;
                    any |= next[u] > 0.0;
                }
                if (!any) continue;
                ss[depth + 1] = n;
                self(self, depth + 1, next);
            }
        }
    };
    for (int s0 = 0; s0 < S; ++s0) {
        if (mdp.initial[s0] == 0.0) continue;
        ss[0] = s0;
        rec(rec, 0, std::vector<double>(U, mdp.initial[s0]));
    }

    EntropyCheck r;
    // H(tau | S_t) = H(S_t..S_H) - H(S_t);  H(tau | S_0..S_t) = H(path) - H(S_0..S_t).
    r.h_given_state = detail::entropy_of(suffix) - detail::entropy_of(state);
    r.h_given_history = detail::entropy_of(full) - detail::entropy_of(prefix);
    r.slack = r.h_given_state - r.h_given_history;
    r.holds = r.slack >= kEntropySlack;
    return r;
}

inline EntropyCheck entropy_inequality_check(const TabularMdp& mdp, const TabularPolicy& pi, int t, int horizon) {
    return entropy_inequality_check(mdp, std::vector<TabularPolicy>{pi}, std::vector<double>{1.0}, t, horizon);
}

} // namespace stitch

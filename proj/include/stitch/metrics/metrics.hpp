#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "stitch/error.hpp"
#include "stitch/kvtext.hpp"

namespace stitch {

/// (x - v_min) / (v_max - v_min), element-wise.
inline std::vector<double> normalize_values(const std::vector<double>& xs, double v_min, double v_max) {
    if (!(v_max > v_min)) throw PreconditionError("normalize_values: v_max must exceed v_min");
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back((x - v_min) / (v_max - v_min));
    return out;
}

inline constexpr double kRmseFloor = 1e-12;

/// log RMSE of one seed's estimates; `floored` reports whether the floor applied.
inline double log_rmse_row(const std::vector<double>& est, const std::vector<double>& truth, bool* floored = nullptr) {
    if (est.size() != truth.size() || est.empty()) throw DimensionError("log_rmse: estimate and truth sizes differ");
    double ss = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) ss += (est[i] - truth[i]) * (est[i] - truth[i]);
    const double rmse = std::sqrt(ss / static_cast<double>(est.size()));
    if (floored) *floored = rmse < kRmseFloor;
    return std::log(std::max(rmse, kRmseFloor));
}

/// Mean over seeds (rows) of the per-seed log RMSE.
inline double log_rmse(const std::vector<std::vector<double>>& est, const std::vector<double>& truth) {
    if (est.empty()) throw PreconditionError("log_rmse: no seeds");
    double s = 0.0;
    for (const auto& row : est) s += log_rmse_row(row, truth);
    return s / static_cast<double>(est.size());
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

struct SpearmanResult {
    double rho = 0.0;
    bool undefined = false; // one side constant; rho reported as 0
};

/// Pearson correlation of average ranks.
inline SpearmanResult spearman(const std::vector<double>& est, const std::vector<double>& truth) {
    if (est.size() != truth.size()) throw DimensionError("spearman: sizes differ");
    if (est.size() < 2) throw PreconditionError("spearman: need at least two policies");
    const auto ra = average_ranks(est), rb = average_ranks(truth);
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return {0.0, true};
    return {sab / std::sqrt(saa * sbb), false};
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax_first(const std::vector<double>& xs) {
    if (xs.empty()) throw PreconditionError("argmax of an empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[best]) best = i;
    return best;
}

/// |J(best true policy) - J(policy ranked first by the estimates)|.
inline double regret_at_1(const std::vector<double>& est, const std::vector<double>& truth) {
    if (est.size() != truth.size()) throw DimensionError("regret_at_1: sizes differ");
    return std::abs(truth[argmax_first(truth)] - truth[argmax_first(est)]);
}

/// Sample std / sqrt(n) across seeds; 0 for a single seed.
inline double stderr_across(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double n = static_cast<double>(xs.size());
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / (n - 1.0) / n);
}

inline double mean_of(const std::vector<double>& xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

struct MetricRow {
    std::string env, estimator, metric;
    double mean = 0.0, stderr_ = 0.0;
};

struct MetricSummary {
    std::vector<MetricRow> rows;
    std::size_t spearman_undefined = 0; // seeds where one side was constant
    std::size_t rmse_floored = 0;
};

/// LogRMSE, Spearman and Regret@1 over seeds. Estimates and truth are
/// normalized by the truth's min and max first; with constant truth the raw
/// values are used.
inline MetricSummary summarize(const std::string& env, const std::string& estimator,
                               const std::vector<std::vector<double>>& est, const std::vector<double>& truth) {
    if (est.empty()) throw PreconditionError("summarize: no seeds");
    for (const auto& row : est) {
        if (row.size() != truth.size()) throw DimensionError("summarize: estimate row size differs from truth");
        for (double x : row)
            if (std::isnan(x)) throw NumericalError("summarize: NaN estimate");
    }
    const double lo = *std::min_element(truth.begin(), truth.end());
    const double hi = *std::max_element(truth.begin(), truth.end());
    const bool norm = hi > lo;
    const auto nt = norm ? normalize_values(truth, lo, hi) : truth;
    std::vector<double> lr, sp, rg;
    MetricSummary out;
    for (const auto& row : est) {
        const auto ne = norm ? normalize_values(row, lo, hi) : row;
        bool fl = false;
        lr.push_back(log_rmse_row(ne, nt, &fl));
        out.rmse_floored += fl;
        if (truth.size() >= 2) {
            const auto s = spearman(ne, nt);
            out.spearman_undefined += s.undefined;
            sp.push_back(s.rho);
        }
        rg.push_back(regret_at_1(ne, nt));
    }
    out.rows.push_back({env, estimator, "log_rmse", mean_of(lr), stderr_across(lr)});
    if (!sp.empty()) out.rows.push_back({env, estimator, "spearman", mean_of(sp), stderr_across(sp)});
    out.rows.push_back({env, estimator, "regret_at_1", mean_of(rg), stderr_across(rg)});
    return out;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << "env,estimator,metric,mean,stderr\n";
    for (const auto& r : rows)
        os << r.env << ',' << r.estimator << ',' << r.metric << ',' << format_exact(r.mean) << ',' << format_exact(r.stderr_)
           << '\n';
}

} // namespace stitch

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/kvtext.hpp"

namespace stitch {

inline constexpr int kDatasetFormatVersion = 1;

namespace detail {

inline std::string f32(double x) { return format_exact(static_cast<float>(x)); }

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace detail

/// Writes `<dir>/meta` and `<dir>/trajectories.csv`.
///
/// Each episode contributes one row per step t = 0..T-1 with
/// (s_t, a_t, r_t, done_t) and one closing row t = T holding only s_T; its
/// action, reward and done cells are empty. Numbers are 32-bit floats in
/// shortest round-trip form, so write(read(dir)) reproduces the bytes.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw FormatError("cannot create dataset directory '" + dir.string() + "': " + ec.message());

    KvText meta;
    meta.append("format_version", std::to_string(kDatasetFormatVersion));
    meta.append("env", ds.meta.env);
    meta.append("state_dim", std::to_string(ds.meta.state_dim));
    meta.append("action_dim", std::to_string(ds.meta.action_dim));
    meta.append("T", std::to_string(ds.meta.horizon));
    meta.append("gamma", format_exact(ds.meta.gamma));
    meta.append("episodes", std::to_string(ds.episodes.size()));
    meta.append("transitions", std::to_string(ds.num_transitions()));
    for (const auto& [k, v] : ds.meta.extra) meta.append(k, v);
    {
        std::ofstream out(dir / "meta");
        if (!out) throw FormatError("cannot write '" + (dir / "meta").string() + "'");
        out << meta.to_string();
    }

    std::ofstream csv(dir / "trajectories.csv");
    if (!csv) throw FormatError("cannot write '" + (dir / "trajectories.csv").string() + "'");
    csv << "episode,t";
    for (int i = 0; i < ds.meta.state_dim; ++i) csv << ",s_" << i;
    for (int i = 0; i < ds.meta.action_dim; ++i) csv << ",a_" << i;
    csv << ",reward,done\n";
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
        const auto& tr = ds.episodes[e];
        if (tr.state_dim() != ds.meta.state_dim || tr.action_dim() != ds.meta.action_dim)
            throw DimensionError("episode dimensions disagree with dataset meta");
        for (Eigen::Index t = 0; t <= tr.length(); ++t) {
            csv << e << ',' << t;
            for (Eigen::Index i = 0; i < tr.state_dim(); ++i) csv << ',' << detail::f32(tr.states(i, t));
            if (t < tr.length()) {
                for (Eigen::Index i = 0; i < tr.action_dim(); ++i) csv << ',' << detail::f32(tr.actions(i, t));
                csv << ',' << detail::f32(tr.rewards(t)) << ',' << (tr.dones[static_cast<std::size_t>(t)] ? 1 : 0);
            } else {
                for (Eigen::Index i = 0; i < tr.action_dim(); ++i) csv << ',';
                csv << ",,";
            }
            csv << '\n';
        }
    }
    if (!csv) throw FormatError("write failure on trajectories.csv");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    const KvText meta = KvText::read_file((dir / "meta").string());
    if (parse_number<int>(meta.get("format_version")) != kDatasetFormatVersion)
        throw FormatError("unsupported dataset format version " + meta.get("format_version"));
    Dataset ds;
    ds.meta.env = meta.get("env");
    ds.meta.state_dim = parse_number<int>(meta.get("state_dim"));
    ds.meta.action_dim = parse_number<int>(meta.get("action_dim"));
    ds.meta.horizon = parse_number<int>(meta.get("T"));
    ds.meta.gamma = parse_number<double>(meta.get("gamma"));
    const auto n_episodes = parse_number<std::size_t>(meta.get("episodes"));
    static const std::vector<std::string> reserved = {"format_version", "env", "state_dim", "action_dim",
                                                      "T", "gamma", "episodes", "transitions"};
    for (const auto& [k, v] : meta.entries())
        if (std::find(reserved.begin(), reserved.end(), k) == reserved.end()) ds.meta.extra.emplace_back(k, v);

    std::ifstream csv(dir / "trajectories.csv");
    if (!csv) throw FormatError("cannot open '" + (dir / "trajectories.csv").string() + "'");
    std::string line;
    std::getline(csv, line); // header
    const int sd = ds.meta.state_dim, ad = ds.meta.action_dim;
    const std::size_t ncols = static_cast<std::size_t>(2 + sd + ad + 2);

    std::vector<std::vector<std::string>> rows;
    std::size_t current = 0;
    auto flush = [&]() {
        if (rows.empty()) return;
        const auto T = static_cast<Eigen::Index>(rows.size()) - 1;
        Trajectory tr = make_trajectory(sd, ad, T);
        for (Eigen::Index t = 0; t <= T; ++t) {
            const auto& r = rows[static_cast<std::size_t>(t)];
            if (parse_number<Eigen::Index>(r[1], "t") != t) throw FormatError("rows out of (episode, t) order");
            for (int i = 0; i < sd; ++i) tr.states(i, t) = parse_number<float>(r[static_cast<std::size_t>(2 + i)], "state");
            if (t < T) {
                for (int i = 0; i < ad; ++i)
                    tr.actions(i, t) = parse_number<float>(r[static_cast<std::size_t>(2 + sd + i)], "action");
                tr.rewards(t) = parse_number<float>(r[static_cast<std::size_t>(2 + sd + ad)], "reward");
                tr.dones[static_cast<std::size_t>(t)] = r[static_cast<std::size_t>(3 + sd + ad)] == "1";
            }
        }
        ds.episodes.push_back(std::move(tr));
        rows.clear();
    };
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv(line);
        if (cells.size() != ncols) throw FormatError("trajectories.csv: wrong column count");
        const auto ep = parse_number<std::size_t>(cells[0], "episode");
        if (ep != current) {
            if (ep != current + 1 && !(rows.empty() && ep == current)) throw FormatError("episodes out of order");
            flush();
            current = ep;
        }
        rows.push_back(std::move(cells));
    }
    flush();
    if (ds.episodes.size() != n_episodes) throw FormatError("episode count disagrees with meta");
    return ds;
}

} // namespace stitch

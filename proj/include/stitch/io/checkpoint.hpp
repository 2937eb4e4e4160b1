#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stitch/dataset/dataset.hpp"
#include "stitch/diffusion/denoiser.hpp"
#include "stitch/diffusion/schedule.hpp"
#include "stitch/error.hpp"
#include "stitch/kvtext.hpp"
#include "stitch/numerics/mlp.hpp"

namespace stitch {

inline constexpr std::string_view kCheckpointMagic = "stitch-checkpoint";
inline constexpr std::string_view kCheckpointEnd = "end_header";
inline constexpr int kCheckpointVersion = 1;

/// Header entries plus the network they describe.
struct Checkpoint {
    KvText header;
    Mlp net;
};

namespace detail {

inline void put_f32_le(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline double get_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
}

inline std::string vec_text(const Vec& v) { return join_exact(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vec vec_from_text(const std::string& s, Eigen::Index expected, std::string_view what) {
    const auto xs = parse_list<double>(s, what);
    if (static_cast<Eigen::Index>(xs.size()) != expected)
        throw FormatError(std::string(what) + ": expected " + std::to_string(expected) + " values");
    return Eigen::Map<const Vec>(xs.data(), expected);
}

} // namespace detail

/// Text header (`key = value` lines), an `end_header` line, then the
/// parameters as little-endian float32 in the network's flat order.
inline void write_checkpoint(const std::filesystem::path& path, const KvText& extra, const Mlp& net) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
    KvText h;
    h.append("format_version", std::to_string(kCheckpointVersion));
    for (const auto& [k, v] : extra.entries()) h.append(k, v);
    h.append("mlp.layer_dims", join_exact(net.dims()));
    h.append("mlp.hidden", std::string(to_string(net.hidden_activation())));
    h.append("mlp.output", std::string(to_string(net.output_activation())));
    h.append("mlp.param_count", std::to_string(net.num_params()));
    h.append("param_encoding", "float32-le");
    out << kCheckpointMagic << '\n' << h.to_string() << kCheckpointEnd << '\n';
    for (Eigen::Index i = 0; i < net.num_params(); ++i) detail::put_f32_le(out, net.params()(i));
    if (!out) throw FormatError("write failure on checkpoint '" + path.string() + "'");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) throw FormatError("'" + path.string() + "' is not a checkpoint");
    Checkpoint ck;
    ck.header = KvText::parse(in, kCheckpointEnd);
    if (parse_number<int>(ck.header.get("format_version")) != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + ck.header.get("format_version"));
    if (ck.header.get("param_encoding") != "float32-le") throw FormatError("unsupported parameter encoding");
    ck.net = Mlp(parse_list<int>(ck.header.get("mlp.layer_dims")), activation_from_string(ck.header.get("mlp.hidden")),
                 activation_from_string(ck.header.get("mlp.output")));
    const auto n = parse_number<std::size_t>(ck.header.get("mlp.param_count"));
    if (static_cast<Eigen::Index>(n) != ck.net.num_params()) throw FormatError("parameter count disagrees with layer dims");
    std::vector<unsigned char> buf(4 * n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError("truncated parameter block");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after parameter block");
    for (std::size_t i = 0; i < n; ++i) ck.net.params()(static_cast<Eigen::Index>(i)) = detail::get_f32_le(&buf[4 * i]);
    return ck;
}

inline void put_norm(KvText& h, const NormStats& ns) {
    h.append("norm.state_mean", detail::vec_text(ns.state_mean));
    h.append("norm.state_std", detail::vec_text(ns.state_std));
    h.append("norm.action_mean", detail::vec_text(ns.action_mean));
    h.append("norm.action_std", detail::vec_text(ns.action_std));
}

inline NormStats get_norm(const KvText& h, int state_dim, int action_dim) {
    return {detail::vec_from_text(h.get("norm.state_mean"), state_dim, "norm.state_mean"),
            detail::vec_from_text(h.get("norm.state_std"), state_dim, "norm.state_std"),
            detail::vec_from_text(h.get("norm.action_mean"), action_dim, "norm.action_mean"),
            detail::vec_from_text(h.get("norm.action_std"), action_dim, "norm.action_std")};
}

inline void put_schedule(KvText& h, const NoiseSchedule& s) {
    h.append("schedule", std::string(to_string(s.kind())));
    h.append("K", std::to_string(s.K()));
    if (s.kind() == ScheduleKind::custom) h.append("schedule.alphas", join_exact(s.alphas()));
}

inline NoiseSchedule get_schedule(const KvText& h) {
    const ScheduleKind kind = schedule_kind_from_string(h.get("schedule"));
    const int K = parse_number<int>(h.get("K"));
    if (kind == ScheduleKind::custom) {
        auto alphas = parse_list<double>(h.get("schedule.alphas"));
        if (static_cast<int>(alphas.size()) != K) throw FormatError("schedule.alphas length disagrees with K");
        return NoiseSchedule::from_alphas(std::move(alphas));
    }
    return make_schedule(kind, K);
}

inline void save_denoiser(const std::filesystem::path& path, const DenoiserModel& m) {
    KvText h;
    h.append("kind", "denoiser");
    h.append("state_dim", std::to_string(m.layout().state_dim));
    h.append("action_dim", std::to_string(m.layout().action_dim));
    h.append("w", std::to_string(m.layout().w));
    put_schedule(h, m.schedule());
    h.append("embed_width", std::to_string(m.embed_width()));
    h.append("window_frame", to_string(m.frame()));
    put_norm(h, m.norm());
    write_checkpoint(path, h, m.net());
}

inline DenoiserModel load_denoiser(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.header.get("kind") != "denoiser") throw FormatError("'" + path.string() + "' is not a denoiser checkpoint");
    const int sd = parse_number<int>(ck.header.get("state_dim"));
    const int ad = parse_number<int>(ck.header.get("action_dim"));
    const WindowLayout L{sd, ad, parse_number<int>(ck.header.get("w"))};
    return DenoiserModel(L, get_schedule(ck.header), get_norm(ck.header, sd, ad), std::move(ck.net),
                         parse_number<int>(ck.header.get("embed_width")),
                         window_frame_from_string(ck.header.get("window_frame")));
}

} // namespace stitch

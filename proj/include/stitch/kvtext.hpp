#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stitch/error.hpp"

namespace stitch {

/// Ordered `key = value` text, one entry per line; `#` starts a comment.
/// Used for dataset meta files, run configs, manifests and checkpoint headers.
class KvText {
public:
    using Entry = std::pair<std::string, std::string>;

    void set(std::string key, std::string value) {
        for (auto& e : entries_)
            if (e.first == key) {
                e.second = std::move(value);
                return;
            }
        entries_.emplace_back(std::move(key), std::move(value));
    }
    void append(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

    bool contains(std::string_view key) const { return find(key) != nullptr; }
    const std::vector<Entry>& entries() const { return entries_; }

    const std::string* find(std::string_view key) const {
        for (const auto& e : entries_)
            if (e.first == key) return &e.second;
        return nullptr;
    }

    std::string get(std::string_view key) const {
        if (const auto* v = find(key)) return *v;
        throw FormatError("missing key '" + std::string(key) + "'");
    }
    std::string get_or(std::string_view key, std::string fallback) const {
        const auto* v = find(key);
        return v ? *v : fallback;
    }

    std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    /// Parse until EOF or a line equal to `stop_line` (consumed).
    static KvText parse(std::istream& in, std::string_view stop_line = {}) {
        KvText kv;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!stop_line.empty() && line == stop_line) return kv;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value'");
            kv.append(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        if (!stop_line.empty()) throw FormatError("missing '" + std::string(stop_line) + "' terminator");
        return kv;
    }

    static KvText parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KvText read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open '" + path + "'");
        return parse(in);
    }

    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

private:
    std::vector<Entry> entries_;
};

template <class T>
T parse_number(std::string_view s, std::string_view what = "value") {
    T out{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc{} || ptr != end)
        throw FormatError("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
    return out;
}

inline bool parse_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw FormatError("cannot parse boolean from '" + std::string(s) + "'");
}

/// Shortest decimal text that round-trips the value exactly.
template <class T>
std::string format_exact(T value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

template <class T>
std::vector<T> parse_list(std::string_view s, std::string_view what = "list") {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string_view::npos) comma = s.size();
        const std::string item = KvText::trim(std::string(s.substr(start, comma - start)));
        if (!item.empty()) out.push_back(parse_number<T>(item, what));
        start = comma + 1;
    }
    return out;
}

template <class Range>
std::string join_exact(const Range& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ",";
        out += format_exact(v);
    }
    return out;
}

/// FNV-1a over bytes; used for manifest content hashes.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

} // namespace stitch

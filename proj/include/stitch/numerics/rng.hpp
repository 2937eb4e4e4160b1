#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace stitch {

namespace detail {

// SplitMix64 finalizer; a bijective avalanche mix on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
    return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

} // namespace detail

/// Counter-based random stream. The n-th draw is a pure function of
/// (seed, stream_id, n), so substreams can be handed to independent workers
/// and the results do not depend on scheduling.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Child stream keyed by `id`; independent of how many draws this stream has made.
    RngStream substream(std::uint64_t id) const noexcept {
        return RngStream(seed_, detail::mix64(stream_ ^ detail::mix64(id + 0x632be59bd9b4e019ULL)));
    }

    std::uint64_t next_u64() noexcept { return detail::hash_key(seed_, stream_, counter_++); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Box-Muller, one normal per pair of uniforms (no cached spare).
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Draw from a discrete distribution given by (unnormalized) weights.
    template <class Range>
    std::size_t categorical(const Range& weights) noexcept {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        std::size_t i = 0, last = 0;
        for (double w : weights) {
            if (w > 0.0) last = i;
            if (u < w) return i;
            u -= w;
            ++i;
        }
        return last;
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

inline Eigen::MatrixXd gaussian(RngStream& rng, Eigen::Index rows, Eigen::Index cols = 1) {
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = rng.normal();
    return out;
}

inline Eigen::VectorXd gaussian_vector(RngStream& rng, Eigen::Index n) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = rng.normal();
    return out;
}

} // namespace stitch

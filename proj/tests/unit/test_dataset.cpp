#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stitch/dataset/dataset.hpp"
#include "stitch/dataset/io.hpp"
#include "stitch/envs/environment.hpp"

using namespace stitch;

namespace {

Trajectory ramp(int T, int sd = 2, int ad = 1) {
    Trajectory tr = make_trajectory(sd, ad, T);
    for (int t = 0; t <= T; ++t)
        for (int i = 0; i < sd; ++i) tr.states(i, t) = 10.0 * t + i;
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < ad; ++i) tr.actions(i, t) = -t - 0.5 * i;
        tr.rewards(t) = 0.25 * t;
    }
    return tr;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("stitch_test_" + name);
    std::filesystem::remove_all(d);
    return d;
}

} // namespace

TEST(SliceWindows, StrideEqualsWindow) {
    const WindowBatch b = slice_windows({ramp(16)}, 8, 8);
    ASSERT_EQ(b.size(), 2);
    EXPECT_EQ(b.origin[0].second, 0);
    EXPECT_EQ(b.origin[1].second, 8);
}

TEST(SliceWindows, WindowCoversWholeEpisode) {
    EXPECT_EQ(slice_windows({ramp(10)}, 10, 1).size(), 1);
}

TEST(SliceWindows, StrideOneEnumeratesEveryOffset) {
    const Trajectory tr = ramp(12);
    const WindowBatch b = slice_windows({tr}, 4, 1);
    ASSERT_EQ(b.size(), 9);
    EXPECT_EQ(b.layout.width(), 4 * 3 + 2);
    for (int j = 0; j < 9; ++j) {
        EXPECT_EQ(Vec(b.cond_states.col(j)), Vec(tr.states.col(j)));
        EXPECT_EQ(Vec(b.windows.col(j).head(2)), Vec(tr.states.col(j)));
        EXPECT_EQ(Vec(b.windows.col(j).tail(2)), Vec(tr.states.col(j + 4)));
    }
}

TEST(SliceWindows, EmptyDatasetThrows) { EXPECT_THROW(slice_windows({}, 4, 1), PreconditionError); }

TEST(SliceWindows, NeverCrossesDone) {
    Trajectory tr = ramp(12);
    tr.dones[5] = true; // episode effectively ends at t = 6
    const WindowBatch b = slice_windows({tr}, 4, 1);
    for (const auto& [e, t0] : b.origin) EXPECT_LE(t0 + 4, 6);
    EXPECT_EQ(b.size(), 3);
}

TEST(SliceWindows, ShortEpisodesArePaddedAndMaskedOnlyOnRequest) {
    EXPECT_EQ(slice_windows({ramp(3), ramp(8)}, 4, 4).size(), 2);
    const WindowBatch b = slice_windows({ramp(3)}, 4, 4, true);
    ASSERT_EQ(b.size(), 1);
    EXPECT_EQ(b.mask.col(0).sum(), 3 * 3 + 2);
    EXPECT_EQ(b.windows.col(0).tail(3).norm(), 0.0);
}

TEST(SliceWindows, StrideWWindowsReconstructTrajectory) {
    const Trajectory tr = ramp(16);
    const WindowBatch b = slice_windows({tr}, 4, 4);
    const WindowLayout& L = b.layout;
    std::vector<double> rebuilt;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        const Vec x = b.windows.col(j);
        const int keep = j + 1 == b.size() ? L.width() : L.width() - L.state_dim;
        for (int i = 0; i < keep; ++i) rebuilt.push_back(x(i));
    }
    const Vec direct = flatten_window(tr, 0, WindowLayout{2, 1, 16});
    ASSERT_EQ(rebuilt.size(), static_cast<std::size_t>(direct.size()));
    for (std::size_t i = 0; i < rebuilt.size(); ++i) EXPECT_EQ(rebuilt[i], direct(static_cast<Eigen::Index>(i)));
}

TEST(NormStats, TwoPointColumn) {
    Trajectory tr = make_trajectory(1, 1, 1);
    tr.states << 0.0, 2.0;
    tr.actions << 5.0;
    const NormStats ns = NormStats::fit({tr});
    EXPECT_DOUBLE_EQ(ns.state_mean(0), 1.0);
    EXPECT_DOUBLE_EQ(ns.state_std(0), 1.0);
    EXPECT_DOUBLE_EQ(ns.normalize_state(Vec::Constant(1, 0.0))(0), -1.0);
    EXPECT_DOUBLE_EQ(ns.normalize_state(Vec::Constant(1, 2.0))(0), 1.0);
}

TEST(NormStats, ConstantColumnUsesFloor) {
    Trajectory tr = make_trajectory(1, 1, 4);
    tr.states.setConstant(3.0);
    const NormStats ns = NormStats::fit({tr});
    EXPECT_EQ(ns.state_std(0), NormStats::kStdFloor);
    EXPECT_EQ(ns.normalize_state(Vec::Constant(1, 3.0))(0), 0.0);
}

TEST(NormStats, RoundTripAndMoments) {
    LinearGaussianEnv env;
    auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    std::vector<Trajectory> eps;
    for (int i = 0; i < 50; ++i) eps.push_back(rollout(env, *pi, RngStream(2, i), 16));
    const NormStats ns = NormStats::fit(eps);
    const WindowBatch b = slice_windows(eps, 4, 1);
    const Mat z = ns.normalize_windows(b.windows, b.layout);
    EXPECT_LT((ns.denormalize_windows(z, b.layout) - b.windows).cwiseAbs().maxCoeff(), 1e-9);
    double m = 0.0, v = 0.0, n = 0.0;
    for (const auto& e : eps)
        for (Eigen::Index t = 0; t < e.actions.cols(); ++t) {
            const double a = ns.normalize_action(e.actions.col(t))(0);
            m += a;
            v += a * a;
            n += 1;
        }
    EXPECT_NEAR(m / n, 0.0, 1e-12);
    EXPECT_NEAR(v / n, 1.0, 1e-12);
}

TEST(DatasetIo, RoundTripIsBitExact) {
    LinearGaussianEnv env;
    auto pi = make_linear_gaussian_policy(Mat::Constant(1, 1, -0.5), Vec::Zero(1), Vec::Constant(1, 0.3));
    Dataset ds;
    ds.meta = {"linear_gaussian", 1, 1, 16, 0.95, {{"behavior", "lin"}}};
    for (int i = 0; i < 7; ++i) ds.episodes.push_back(rollout(env, *pi, RngStream(3, i), 16 - i));
    ds.episodes[2].dones.back() = true;
    const auto d1 = temp_dir("io1"), d2 = temp_dir("io2");
    write_dataset(ds, d1);
    const Dataset back = read_dataset(d1);
    write_dataset(back, d2);
    EXPECT_EQ(slurp(d1 / "meta"), slurp(d2 / "meta"));
    EXPECT_EQ(slurp(d1 / "trajectories.csv"), slurp(d2 / "trajectories.csv"));

    Dataset q = ds;
    quantize_float32(q);
    ASSERT_EQ(back.episodes.size(), q.episodes.size());
    for (std::size_t e = 0; e < q.episodes.size(); ++e) {
        EXPECT_EQ(back.episodes[e].states, q.episodes[e].states);
        EXPECT_EQ(back.episodes[e].actions, q.episodes[e].actions);
        EXPECT_EQ(back.episodes[e].rewards, q.episodes[e].rewards);
        EXPECT_EQ(back.episodes[e].dones, q.episodes[e].dones);
    }
    EXPECT_EQ(back.meta.extra, ds.meta.extra);
    EXPECT_EQ(back.meta.gamma, 0.95);
}

TEST(DatasetIo, HeaderAndRowOrder) {
    Dataset ds;
    ds.meta = {"toy", 2, 1, 2, 0.5, {}};
    ds.episodes = {ramp(2)};
    const auto d = temp_dir("io3");
    write_dataset(ds, d);
    EXPECT_EQ(slurp(d / "trajectories.csv"),
              "episode,t,s_0,s_1,a_0,reward,done\n"
              "0,0,0,1,0,0,0\n"
              "0,1,10,11,-1,0.25,0\n"
              "0,2,20,21,,,\n");
}

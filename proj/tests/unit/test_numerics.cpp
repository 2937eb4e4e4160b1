#include <gtest/gtest.h>

#include <cmath>

#include "stitch/numerics/adam.hpp"
#include "stitch/numerics/mlp.hpp"
#include "stitch/numerics/rng.hpp"

using namespace stitch;

TEST(Rng, SameSeedAndStreamIsBitwiseIdentical) {
    RngStream a(7, 0), b(7, 0);
    const Eigen::MatrixXd x = gaussian(a, 16, 4);
    const Eigen::MatrixXd y = gaussian(b, 16, 4);
    EXPECT_EQ(0, std::memcmp(x.data(), y.data(), sizeof(double) * 64));
}

TEST(Rng, GaussianMomentsAtOneHundredThousandSamples) {
    RngStream r(11, 3);
    const Eigen::VectorXd x = gaussian_vector(r, 100000);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Rng, DistinctStreamsAreUncorrelated) {
    RngStream a(5, 0), b(5, 1);
    const Eigen::VectorXd x = gaussian_vector(a, 10000);
    const Eigen::VectorXd y = gaussian_vector(b, 10000);
    const double mx = x.mean(), my = y.mean();
    const double cov = ((x.array() - mx) * (y.array() - my)).mean();
    const double corr = cov / std::sqrt((x.array() - mx).square().mean() * (y.array() - my).square().mean());
    EXPECT_LT(std::abs(corr), 0.03);
}

TEST(Rng, SubstreamDoesNotDependOnParentDraws) {
    RngStream a(9, 2);
    RngStream child_before = a.substream(4);
    for (int i = 0; i < 10; ++i) a.next_u64();
    RngStream child_after = a.substream(4);
    EXPECT_EQ(child_before.next_u64(), child_after.next_u64());
}

TEST(Mlp, ZeroParametersGiveZeroOutput) {
    Mlp net({3, 5, 2}, Activation::relu);
    const Eigen::VectorXd y = net.forward_one(Eigen::Vector3d(0.3, -1.0, 2.0));
    EXPECT_EQ(y.size(), 2);
    EXPECT_EQ(y.norm(), 0.0);
}

TEST(Mlp, IdentityLayerEchoesInput) {
    Mlp net({3, 3}, Activation::relu, Activation::identity);
    net.weight(0).setIdentity();
    const Eigen::Vector3d x(0.5, -2.0, 7.0);
    EXPECT_EQ(net.forward_one(x), Eigen::VectorXd(x));
}

TEST(Mlp, DimensionMismatchThrows) {
    Mlp net({3, 2}, Activation::relu);
    EXPECT_THROW(net.forward_one(Eigen::Vector2d(1, 2)), DimensionError);
}

TEST(Mlp, ForwardMatchesHandRolledOracle) {
    RngStream r(1, 0);
    Mlp net({2, 3, 1}, Activation::sigmoid);
    net.init(r);
    for (Eigen::Index i = 0; i < net.bias(0).size(); ++i) net.bias(0)(i) = r.normal();
    net.bias(1)(0) = r.normal();
    const double x0 = 0.7, x1 = -1.3;
    double out = net.bias(1)(0);
    for (int j = 0; j < 3; ++j) {
        const double z = net.weight(0)(j, 0) * x0 + net.weight(0)(j, 1) * x1 + net.bias(0)(j);
        out += net.weight(1)(0, j) * (1.0 / (1.0 + std::exp(-z)));
    }
    EXPECT_NEAR(net.forward_one(Eigen::Vector2d(x0, x1))(0), out, 1e-10);
}

TEST(Mlp, LinearSquaredLossGradientClosedForm) {
    RngStream r(2, 0);
    Mlp net({3, 2}, Activation::identity);
    net.init(r);
    net.bias(0) << 0.1, -0.2;
    const Eigen::Vector3d x(1.0, 2.0, -0.5);
    const Eigen::Vector2d y(0.3, 0.4);
    MlpTape tape;
    const Eigen::VectorXd out = net.forward(Eigen::MatrixXd(x), &tape).col(0);
    Eigen::VectorXd grad;
    net.backward(tape, Eigen::MatrixXd(2.0 * (out - y)), &grad);
    const Eigen::MatrixXd expected_w = 2.0 * (net.weight(0) * x + net.bias(0) - y) * x.transpose();
    Eigen::Map<const Eigen::MatrixXd> gw(grad.data(), 2, 3);
    EXPECT_LT((gw - expected_w).norm(), 1e-12);
    EXPECT_LT((grad.tail(2) - 2.0 * (out - y)).norm(), 1e-12);
}

TEST(Mlp, ZeroUpstreamGradientGivesZeroGradients) {
    RngStream r(3, 0);
    Mlp net({4, 6, 3}, Activation::tanh);
    net.init(r);
    MlpTape tape;
    net.forward(Eigen::MatrixXd::Random(4, 5), &tape);
    Eigen::VectorXd grad;
    const Eigen::MatrixXd dx = net.backward(tape, Eigen::MatrixXd::Zero(3, 5), &grad);
    EXPECT_EQ(grad.norm(), 0.0);
    EXPECT_EQ(dx.norm(), 0.0);
}

namespace {

// Scalar loss 0.5 * |net(x) - y|^2 evaluated independently of backward().
double half_sq_loss(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return 0.5 * (net.forward_one(x) - y).squaredNorm();
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * (std::abs(a) + std::abs(b)) + 1e-9; }

} // namespace

TEST(Mlp, GradientsMatchCentralFiniteDifferencesOnRandomNets) {
    RngStream r(42, 0);
    const Activation acts[] = {Activation::sigmoid, Activation::tanh, Activation::identity};
    for (int trial = 0; trial < 100; ++trial) {
        const int depth = 1 + static_cast<int>(r.index(3));
        std::vector<int> dims;
        for (int l = 0; l <= depth; ++l) dims.push_back(1 + static_cast<int>(r.index(8)));
        Mlp net(dims, acts[r.index(3)]);
        net.init(r);
        for (Eigen::Index i = 0; i < net.num_params(); ++i) net.params()(i) += 0.1 * r.normal();
        Eigen::VectorXd x(dims.front()), y(dims.back());
        for (auto& v : x) v = r.normal();
        for (auto& v : y) v = r.normal();

        MlpTape tape;
        const Eigen::VectorXd out = net.forward(Eigen::MatrixXd(x), &tape).col(0);
        Eigen::VectorXd grad;
        const Eigen::VectorXd dx = net.backward(tape, Eigen::MatrixXd(out - y), &grad).col(0);

        const double h = 1e-5;
        for (Eigen::Index i = 0; i < net.num_params(); ++i) {
            Mlp plus = net, minus = net;
            plus.params()(i) += h;
            minus.params()(i) -= h;
            const double fd = (half_sq_loss(plus, x, y) - half_sq_loss(minus, x, y)) / (2 * h);
            ASSERT_TRUE(close_rel(grad(i), fd, 1e-4)) << "trial " << trial << " param " << i << ": " << grad(i) << " vs " << fd;
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (half_sq_loss(net, xp, y) - half_sq_loss(net, xm, y)) / (2 * h);
            ASSERT_TRUE(close_rel(dx(i), fd, 1e-4)) << "trial " << trial << " input " << i;
        }
    }
}

TEST(Mlp, ReluGradientsMatchFiniteDifferencesAwayFromKinks) {
    RngStream r(43, 0);
    Mlp net({5, 7, 7, 2}, Activation::relu);
    net.init(r);
    Eigen::VectorXd x(5), y(2);
    for (auto& v : x) v = r.normal();
    for (auto& v : y) v = r.normal();
    MlpTape tape;
    const Eigen::VectorXd out = net.forward(Eigen::MatrixXd(x), &tape).col(0);
    for (const auto& z : tape.pre) ASSERT_GT(z.cwiseAbs().minCoeff(), 1e-4);
    Eigen::VectorXd grad;
    net.backward(tape, Eigen::MatrixXd(out - y), &grad);
    for (Eigen::Index i = 0; i < net.num_params(); ++i) {
        Mlp plus = net, minus = net;
        plus.params()(i) += 1e-6;
        minus.params()(i) -= 1e-6;
        const double fd = (half_sq_loss(plus, x, y) - half_sq_loss(minus, x, y)) / 2e-6;
        EXPECT_TRUE(close_rel(grad(i), fd, 1e-4)) << i;
    }
}

TEST(Mlp, TimeEmbeddingHasRequestedWidth) {
    const Eigen::VectorXd e = time_embedding(3, 16);
    EXPECT_EQ(e.size(), 16);
    EXPECT_NEAR(e(0), std::sin(3.0), 1e-15);
    EXPECT_NEAR(e(8), std::cos(3.0), 1e-15);
}

TEST(Adam, StepCountIncrementsAndUpdatesStayFinite) {
    Eigen::VectorXd p = Eigen::VectorXd::Ones(3);
    AdamState opt(3, AdamConfig{.learning_rate = 0.1});
    for (int i = 1; i <= 5; ++i) {
        opt.step(p, 2.0 * p);
        EXPECT_EQ(opt.step_count(), i);
        EXPECT_TRUE(p.allFinite());
    }
}

TEST(Adam, MinimizesQuadratic) {
    Eigen::VectorXd p(2);
    p << 3.0, -2.0;
    AdamState opt(2, AdamConfig{.learning_rate = 0.05});
    for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * (p - Eigen::Vector2d(1.0, 0.5)));
    EXPECT_NEAR(p(0), 1.0, 1e-3);
    EXPECT_NEAR(p(1), 0.5, 1e-3);
}

TEST(Adam, GradientClippingBoundsTheUpdateNorm) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    AdamState opt(2, AdamConfig{.learning_rate = 1.0, .max_grad_norm = 1.0});
    opt.step(p, Eigen::Vector2d(300.0, 400.0));
    // First Adam step moves each coordinate by ~lr regardless of scale; clipping keeps it finite.
    EXPECT_TRUE(p.allFinite());
    EXPECT_THROW(opt.step(p, Eigen::Vector3d(1, 2, 3)), DimensionError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace compass;

namespace {

Tensor random_image(std::mt19937_64& rng, std::size_t h = 32, std::size_t w = 32) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t({1, h, w});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST(Forward, MatchesStraightLineOracle) {
    std::mt19937_64 rng(1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = init_params(8, seed);
        const auto img = random_image(rng);
        const auto got = forward(p, img);
        const auto want = oracle::forward(p, img);
        for (std::size_t i = 0; i < got.latent.size(); ++i) EXPECT_NEAR(got.latent[i], want.latent[i], 1e-12);
        for (std::size_t i = 0; i < got.logits.size(); ++i) {
            EXPECT_NEAR(got.logits[i], want.logits[i], 1e-11);
            EXPECT_GT(got.probs[i], 0.0);
            EXPECT_LT(got.probs[i], 1.0);
        }
    }
}

TEST(Forward, ZeroNetwork) {
    const auto p = zero_params(8);
    std::mt19937_64 rng(2);
    const auto r = forward(p, random_image(rng));
    for (double v : r.logits.data()) EXPECT_EQ(v, 0.0);
    for (double v : r.probs.data()) EXPECT_EQ(v, 0.5);
    EXPECT_EQ(metric_value(r.probs.data(), soft_area), 512.0);
}

TEST(Forward, LastLayerAffine) {
    std::mt19937_64 rng(3);
    auto p = init_params(8, 3);
    const auto img = random_image(rng);
    const auto base = forward(p, img);
    p.w3 *= 2.0;
    p.b3 *= 2.0;
    const auto doubled = forward(p, img);
    for (std::size_t i = 0; i < base.logits.size(); ++i) EXPECT_DOUBLE_EQ(doubled.logits[i], 2.0 * base.logits[i]);
}

TEST(DecodeMetric, SaturationAndCounting) {
    std::mt19937_64 rng(4);
    const auto p = init_params(8, 4);
    const auto r = forward(p, random_image(rng));
    Tensor shifted = r.logits;
    for (auto& v : shifted.data()) v += 50.0;
    EXPECT_EQ(decode_metric(p, shifted, hard_area, Tap::logits), 1024.0);

    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> probs(1000);
    double count = 0;
    for (auto& v : probs) {
        v = u(rng);
        count += v > 0.5 ? 1 : 0;
    }
    EXPECT_EQ(metric_value(probs, hard_area), count);
    EXPECT_EQ(decode_metric(p, r.latent, hard_area), metric_value(r.probs.data(), hard_area));
}

TEST(Jacobian, LogitsTapIsSigmoidDerivative) {
    std::mt19937_64 rng(5);
    const auto p = init_params(8, 5);
    const auto img = random_image(rng);
    const auto j = metric_jacobian(p, img, soft_area, Tap::logits);
    const auto r = forward(p, img);
    for (std::size_t i = 0; i < j.size(); ++i) EXPECT_NEAR(j[i], r.probs[i] * (1.0 - r.probs[i]), 1e-15);
}

TEST(Jacobian, DeadDecoderIsZero) {
    auto p = init_params(8, 6);
    p.w3 *= 0.0;
    std::mt19937_64 rng(6);
    const auto j = metric_jacobian(p, random_image(rng), soft_area, Tap::latent);
    for (double v : j.data()) EXPECT_EQ(v, 0.0);
}

TEST(Jacobian, HardAreaRejected) {
    const auto p = init_params(8, 7);
    std::mt19937_64 rng(7);
    try {
        metric_jacobian(p, random_image(rng), hard_area, Tap::latent);
        FAIL();
    } catch (const NonDifferentiableMetricError& e) {
        EXPECT_NE(std::string(e.what()).find("non-differentiable metric"), std::string::npos);
    }
}

TEST(Jacobian, MatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = init_params(8, 100 + seed);
        const auto img = random_image(rng);
        const auto j = metric_jacobian(p, img, soft_area, Tap::latent);
        const auto fd = oracle::latent_fd(p, encode(p, img), 1e-4);
        for (std::size_t i = 0; i < j.size(); ++i) {
            const double tol = std::max(1e-4 * std::abs(fd.grad[i]), 1e-8);
            ASSERT_LE(std::abs(j[i] - fd.grad[i]), tol) << "entry " << i;
        }
    }
}

TEST(Jacobian, DirectionalDerivative) {
    std::mt19937_64 rng(9);
    const auto p = init_params(8, 9);
    const auto img = random_image(rng);
    const auto z = encode(p, img);
    const auto j = metric_jacobian(p, img, soft_area, Tap::latent);
    auto delta = oracle::random_tensor(z.shape(), rng);
    delta *= 1.0 / delta.norm();
    const DirectLine line(p, z, delta, soft_area, Tap::latent);
    const double eps = 1e-3;
    const double fd = (line(eps) - line(-eps)) / (2 * eps);
    EXPECT_NEAR(dot(j, delta), fd, 0.01 * std::abs(fd));
}

TEST(Train, LossGradientMatchesFiniteDifference) {
    const auto data = generate_dataset(6, TaskSpec{}, 10);
    const auto p = init_params(8, 10);
    const auto lg = loss_and_gradient(p, data);
    EXPECT_NEAR(oracle::bce_loss(p, data), lg.loss, 1e-12);
    std::mt19937_64 rng(10);
    const double eps = 1e-4;
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t i = rng() % p.w2.size();
        auto plus = p, minus = p;
        plus.w2[i] += eps;
        minus.w2[i] -= eps;
        // across a ReLU kink the difference is taken with the activation pattern at p frozen
        const bool kink = oracle::relu_pattern_changes(p, plus, data) || oracle::relu_pattern_changes(p, minus, data);
        const double fd = (oracle::bce_loss(plus, data, kink ? &p : nullptr) - oracle::bce_loss(minus, data, kink ? &p : nullptr)) / (2 * eps);
        EXPECT_NEAR(lg.grad.w2[i], fd, 1e-4 * std::abs(fd) + 1e-9) << "w2 entry " << i << (kink ? " (kink)" : "");
    }
    auto plus = p, minus = p;
    plus.b3[0] += eps;
    minus.b3[0] -= eps;
    const double fd_b3 = (oracle::bce_loss(plus, data) - oracle::bce_loss(minus, data)) / (2 * eps);
    EXPECT_NEAR(lg.grad.b3[0], fd_b3, 1e-4 * std::abs(fd_b3));
}

TEST(Train, ZeroEpochsKeepsParams) {
    const auto data = generate_dataset(4, TaskSpec{}, 11);
    const auto p = init_params(8, 11);
    const auto r = train(p, data, TrainConfig{0.05, 0, 0.35});
    EXPECT_EQ(r.params, p);
    EXPECT_EQ(r.loss_history.size(), 1u);
}

TEST(Train, LossDecreases) {
    const auto data = generate_dataset(24, TaskSpec{}, 12);
    const auto r = train(init_params(8, 12), data, TrainConfig{0.05, 15, 0.35});
    EXPECT_LT(r.final_loss(), r.loss_history.front());
}

TEST(Train, DivergenceNamesEpoch) {
    const auto data = generate_dataset(4, TaskSpec{}, 13);
    try {
        train(init_params(8, 13), data, TrainConfig{1e200, 5, 0.35});
        FAIL() << "expected divergence";
    } catch (const TrainingDivergedError& e) {
        EXPECT_LE(e.epoch(), 5u);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Lines, LatentLineMatchesDirectDecode) {
    std::mt19937_64 rng(14);
    const auto p = init_params(8, 14);
    const auto z = encode(p, random_image(rng));
    auto delta = oracle::random_tensor(z.shape(), rng);
    delta *= 1.0 / delta.norm();
    const LatentLine fast_soft(p, z, delta, soft_area);
    const DirectLine ref_soft(p, z, delta, soft_area, Tap::latent);
    const LatentLine fast_hard(p, z, delta, hard_area);
    const DirectLine ref_hard(p, z, delta, hard_area, Tap::latent);
    for (double beta : {-7.0, -1.3, 0.0, 0.4, 2.5, 11.0}) {
        EXPECT_NEAR(fast_soft(beta), ref_soft(beta), 1e-9);
        EXPECT_EQ(fast_hard(beta), ref_hard(beta));
    }
}

TEST(Lines, OnesDirectionMonotoneAtLogits) {
    std::mt19937_64 rng(15);
    const auto grid = uniform_grid(20.0, 80);
    for (int inst = 0; inst < 100; ++inst) {
        const auto logits = oracle::random_tensor({1, 8, 8}, rng, 3.0);
        const Tensor ones = Tensor::ones(logits.shape());
        const LogitLine soft(logits, ones, soft_area), hard(logits, ones, hard_area);
        double prev_soft = -1, prev_hard = -1;
        for (double g : grid) {
            const double beta = g - 10.0;
            const double s = soft(beta), h = hard(beta);
            if (prev_soft >= 0) {
                EXPECT_GT(s, prev_soft);
                EXPECT_GE(h, prev_hard);
            }
            prev_soft = s;
            prev_hard = h;
        }
    }
}

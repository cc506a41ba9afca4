#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace compass;

namespace {

std::vector<std::vector<double>> gaussian_cloud(std::size_t n, const std::vector<double>& sd, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> out(n, std::vector<double>(sd.size()));
    for (auto& v : out)
        for (std::size_t j = 0; j < sd.size(); ++j) v[j] = sd[j] * g(rng);
    return out;
}

Tensor broadcast(const std::vector<double>& channel_sums, std::size_t h, std::size_t w) {
    Tensor t({channel_sums.size(), h, w});
    for (std::size_t c = 0; c < channel_sums.size(); ++c)
        for (std::size_t i = 0; i < h * w; ++i) t[c * h * w + i] = channel_sums[c] / static_cast<double>(h * w);
    return t;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

}  // namespace

TEST(ChannelSummarize, Examples) {
    EXPECT_EQ(channel_summarize(Tensor({2, 2, 2}, 1.0)), (std::vector<double>{4, 4}));
    EXPECT_EQ(channel_summarize(Tensor({3, 2, 2})), (std::vector<double>{0, 0, 0}));
    EXPECT_THROW(channel_summarize(Tensor({4})), ShapeError);
}

TEST(ChannelSummarize, MatchesLoopOracle) {
    std::mt19937_64 rng(1);
    const auto j = oracle::random_tensor({5, 7, 3}, rng);
    const auto s = channel_summarize(j);
    for (std::size_t c = 0; c < 5; ++c) {
        double want = 0;
        for (std::size_t y = 0; y < 7; ++y)
            for (std::size_t x = 0; x < 3; ++x) want += j(c, y, x);
        EXPECT_NEAR(s[c], want, 1e-12);
    }
}

TEST(FitSubspace, RankOneCloud) {
    const std::vector<double> u{1.0, -2.0, 2.0}, mean{0.5, 0.5, 0.5};
    std::vector<std::vector<double>> pts;
    for (double t : {-3.0, -1.0, 0.5, 2.0, 4.0}) {
        std::vector<double> p(3);
        for (int j = 0; j < 3; ++j) p[j] = mean[j] + t * u[j];
        pts.push_back(p);
    }
    const auto s = fit_subspace(pts, 1);
    const double sign = s.basis(0, 0) > 0 ? 1.0 : -1.0;
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(s.basis(j, 0), sign * u[j] / 3.0, 1e-10);
    EXPECT_NEAR(s.explained_variance_ratio(0), 1.0, 1e-10);
}

TEST(FitSubspace, IsotropicCloud) {
    std::mt19937_64 rng(2);
    const auto s = fit_subspace(gaussian_cloud(2000, {1.0, 1.0}, rng), 1);
    EXPECT_NEAR(s.explained_variance_ratio(0), 0.5, 0.1);
}

TEST(FitSubspace, DiagonalCovarianceRecovered) {
    std::mt19937_64 rng(3);
    const auto s = fit_subspace(gaussian_cloud(500, {3.0, 2.0, 1.0}, rng), 3);
    const double want[] = {9.0, 4.0, 1.0};
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(s.eigenvalues[k], want[k], 0.15 * want[k]);
}

TEST(FitSubspace, OrthonormalAndIdempotent) {
    std::mt19937_64 rng(4);
    for (std::size_t l = 1; l <= 4; ++l) {
        const auto s = fit_subspace(gaussian_cloud(100, {4.0, 3.0, 2.0, 1.5, 1.0, 0.5}, rng), l);
        EXPECT_LT(max_abs_diff(s.basis.transpose() * s.basis, Matrix::identity(l)), 1e-8);
        const Matrix proj = s.basis * s.basis.transpose();
        EXPECT_LT(max_abs_diff(proj * proj, proj), 1e-8);
    }
}

TEST(FitSubspace, DeterministicSign) {
    std::mt19937_64 a(5), b(5);
    const auto s1 = fit_subspace(gaussian_cloud(50, {2.0, 1.0, 0.5}, a), 2);
    const auto s2 = fit_subspace(gaussian_cloud(50, {2.0, 1.0, 0.5}, b), 2);
    EXPECT_EQ(s1.basis, s2.basis);
}

TEST(FitSubspace, Errors) {
    std::mt19937_64 rng(6);
    EXPECT_THROW(fit_subspace(gaussian_cloud(1, {1.0, 1.0}, rng), 1), SubspaceError);
    EXPECT_THROW(fit_subspace(gaussian_cloud(10, {1.0, 1.0}, rng), 3), SubspaceError);
    EXPECT_THROW(fit_subspace(gaussian_cloud(10, {1.0, 1.0}, rng), 0), SubspaceError);
}

TEST(Direction, UnitNormAndUniformBroadcast) {
    std::mt19937_64 rng(7);
    const auto s = fit_subspace(gaussian_cloud(60, {3.0, 1.0, 1.0, 0.5}, rng), 2);
    for (int t = 0; t < 20; ++t) {
        const auto j = oracle::random_tensor({4, 5, 6}, rng, 2.0);
        const auto d = direction_for(s, j);
        EXPECT_EQ(d.norm_kind, NormKind::unit);
        EXPECT_NEAR(d.values.norm(), 1.0, 1e-10);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 1; i < 30; ++i) EXPECT_EQ(d.values[c * 30 + i], d.values[c * 30]);
    }
}

TEST(Direction, ProjectorFixedPoint) {
    std::mt19937_64 rng(8);
    const auto s = fit_subspace(gaussian_cloud(80, {3.0, 2.0, 1.0}, rng), 1);
    // summary = center + 2.5 v1 lies in the affine span; centered projection returns 2.5 v1
    std::vector<double> summary(3);
    for (int c = 0; c < 3; ++c) summary[c] = s.center[c] + 2.5 * s.basis(c, 0);
    const auto p = project(s, summary);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p[c], 2.5 * s.basis(c, 0), 1e-12);

    const auto j = oracle::random_tensor({3, 4, 4}, rng);
    const auto d1 = direction_for(s, j);
    const auto p1 = project(s, channel_summarize(j));
    std::vector<double> rebuilt(3);
    for (int c = 0; c < 3; ++c) rebuilt[c] = s.center[c] + p1[c];
    const auto d2 = direction_for(s, broadcast(rebuilt, 4, 4));
    for (std::size_t i = 0; i < d1.values.size(); ++i) EXPECT_NEAR(d1.values[i], d2.values[i], 1e-12);
}

TEST(Direction, FullRankEqualsNormalizedCenteredSummary) {
    std::mt19937_64 rng(9);
    const auto s = fit_subspace(gaussian_cloud(40, {2.0, 1.5, 1.0, 0.7}, rng), 4);
    const auto j = oracle::random_tensor({4, 3, 5}, rng);
    const auto sum = channel_summarize(j);
    std::vector<double> centered(4);
    double norm = 0;
    for (int c = 0; c < 4; ++c) {
        centered[c] = sum[c] - s.center[c];
        norm += centered[c] * centered[c];
    }
    norm = std::sqrt(norm);
    const auto d = direction_for(s, j);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(d.values[c * 15 + i], centered[c] / (norm * std::sqrt(15.0)), 1e-12);
}

TEST(Direction, VanishingProjectionFallsBack) {
    std::mt19937_64 rng(10);
    const auto s = fit_subspace(gaussian_cloud(30, {2.0, 1.0}, rng), 1);
    const auto d = direction_for(s, broadcast(s.center, 2, 2));
    EXPECT_TRUE(d.fallback);
    for (double v : d.values.data()) EXPECT_DOUBLE_EQ(v, 0.5 / std::sqrt(2.0));
    EXPECT_THROW(direction_for(s, Tensor({3, 2, 2})), ShapeError);
}

TEST(Direction, SignFlipLeavesIntervalUnchanged) {
    std::mt19937_64 rng(11);
    const auto p = init_params(8, 11);
    const auto z = encode(p, oracle::random_tensor({1, 32, 32}, rng, 0.3));
    auto delta = oracle::random_tensor(z.shape(), rng);
    delta *= 1.0 / delta.norm();
    Tensor flipped = delta;
    flipped *= -1.0;
    const LatentLine a(p, z, delta, soft_area), b(p, z, flipped, soft_area);
    for (double beta : {0.0, 0.5, 3.0}) {
        const auto ia = perturbed_interval(a, beta), ib = perturbed_interval(b, beta);
        EXPECT_NEAR(ia.lo, ib.lo, 1e-9);
        EXPECT_NEAR(ia.hi, ib.hi, 1e-9);
    }
}

TEST(LogitsDirection, OnesShiftEveryLogit) {
    const auto d = logits_direction({1, 2, 2});
    EXPECT_EQ(d.norm_kind, NormKind::ones);
    for (double v : d.values.data()) EXPECT_EQ(v, 1.0);
    std::mt19937_64 rng(12);
    const auto logits = oracle::random_tensor({1, 2, 2}, rng);
    Tensor shifted = logits;
    shifted += 0.75 * d.values;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(shifted[i], logits[i] + 0.75);
}

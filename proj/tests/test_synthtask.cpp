#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <set>

#include "oracles.hpp"

using namespace compass;

TEST(Generate, SampleInvariants) {
    const TaskSpec spec{};
    const auto data = generate_dataset(200, spec, 11);
    for (const auto& s : data) {
        ASSERT_EQ(s.image.shape(), (Shape{1, 32, 32}));
        ASSERT_EQ(s.mask.shape(), (Shape{1, 32, 32}));
        double count = 0;
        for (double m : s.mask.data()) {
            EXPECT_TRUE(m == 0.0 || m == 1.0);
            count += m;
        }
        EXPECT_EQ(s.area, count);
        EXPECT_GT(s.area, 0.0);
        for (double v : s.image.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Generate, DeterministicPerIndex) {
    const TaskSpec spec{};
    const auto a = generate_dataset(30, spec, 5), b = generate_dataset(30, spec, 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].image, b[i].image);
        EXPECT_EQ(a[i].mask, b[i].mask);
        EXPECT_EQ(a[i].image, generate_sample(spec, 5, i).image);
    }
    EXPECT_NE(generate_dataset(1, spec, 6)[0].image, a[0].image);
}

TEST(Generate, FixedRadiusNoNoiseMatchesRasterizedDisk) {
    TaskSpec spec{};
    spec.hard_fraction = 0.0;
    spec.easy_radius = {7.0, 7.0};
    spec.noise = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto s = generate_sample(spec, 3, i);
        auto rng = stream(3, i);
        std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const double r = std::uniform_real_distribution<double>(7.0, 7.0)(rng);
        const double cx = std::uniform_real_distribution<double>(r, 32 - r)(rng);
        const double cy = std::uniform_real_distribution<double>(r, 32 - r)(rng);
        EXPECT_EQ(s.area, oracle::disk_area(cx, cy, r, 32, 32));
        EXPECT_EQ(s.image, generate_sample(spec, 3, i).image);
    }
}

TEST(Generate, EasyAreaDistributionMatchesRasterization) {
    TaskSpec spec{};
    spec.hard_fraction = 0.0;
    const std::size_t n = 2000;
    const auto data = generate_dataset(n, spec, 21);
    double mean_gen = 0.0, mean_oracle = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto rng = stream(21, i);
        std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const double r = std::uniform_real_distribution<double>(5.0, 10.0)(rng);
        // rasterize the drawn radius at the canvas centre
        mean_oracle += oracle::disk_area(16.0, 16.0, r, 32, 32) / n;
        mean_gen += data[i].area / n;
    }
    EXPECT_NEAR(mean_gen, mean_oracle, 0.05 * mean_oracle);
}

TEST(Generate, HardFractionAndDifficulty) {
    const TaskSpec spec{};
    const auto data = generate_dataset(2000, spec, 9);
    double hard = 0;
    for (const auto& s : data) hard += s.class_label == ClassLabel::hard ? 1.0 : 0.0;
    const double sd = std::sqrt(2000.0 * spec.hard_fraction * (1.0 - spec.hard_fraction));
    EXPECT_NEAR(hard, 2000.0 * spec.hard_fraction, 4.0 * sd);
}

TEST(Generate, Errors) {
    EXPECT_THROW(generate_dataset(0, TaskSpec{}, 1), TaskError);
    TaskSpec small{};
    small.height = small.width = 16;
    EXPECT_THROW(generate_dataset(5, small, 1), TaskError);
    TaskSpec frac{};
    frac.hard_fraction = 1.5;
    EXPECT_THROW(generate_dataset(5, frac, 1), TaskError);
}

namespace {

std::vector<ClassLabel> alternating(std::size_t n, std::size_t hard_every) {
    std::vector<ClassLabel> labels(n, ClassLabel::easy);
    for (std::size_t i = 0; i < n; i += hard_every) labels[i] = ClassLabel::hard;
    return labels;
}

}  // namespace

TEST(Splits, SizesDisjointExhaustive) {
    const auto labels = alternating(100, 3);
    const auto s = make_splits(labels, SplitSpec{0.5, 0.25, 0.25, 4, {}});
    EXPECT_EQ(s.train.size(), 50u);
    EXPECT_EQ(s.cal.size(), 25u);
    EXPECT_EQ(s.test.size(), 25u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.cal.begin(), s.cal.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 100u);
}

TEST(Splits, SeedsChangePermutationNotSizes) {
    const auto labels = alternating(100, 3);
    const auto a = make_splits(labels, SplitSpec{0.5, 0.25, 0.25, 1, {}});
    const auto b = make_splits(labels, SplitSpec{0.5, 0.25, 0.25, 2, {}});
    EXPECT_NE(a.train, b.train);
    EXPECT_EQ(a.cal.size(), b.cal.size());
    EXPECT_EQ(a.test.size(), b.test.size());
}

TEST(Splits, ShiftFractionsPerClass) {
    const auto labels = alternating(1000, 2);
    SplitSpec spec{0.5, 0.25, 0.25, 7, {{ClassLabel::easy, {0.6, 0.4}}}};
    const auto s = make_splits(labels, spec);
    std::set<std::size_t> train(s.train.begin(), s.train.end());
    double easy_pool = 0, easy_cal = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!train.count(i) && labels[i] == ClassLabel::easy) ++easy_pool;
    for (auto i : s.cal) easy_cal += labels[i] == ClassLabel::easy;
    EXPECT_NEAR(easy_cal, 0.6 * easy_pool, 1.0);
}

TEST(Splits, ShiftedPrevalencesByCounting) {
    // 40 easy / 60 hard outside train
    std::vector<ClassLabel> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(ClassLabel::easy);
    for (int i = 0; i < 60; ++i) labels.push_back(ClassLabel::hard);
    SplitSpec spec{0.0, 0.5, 0.5, 3, {{ClassLabel::hard, {0.7, 0.3}}}};
    const auto s = make_shifted_splits(labels, spec);
    // hard: 42 cal / 18 test, easy: 20 / 20
    EXPECT_DOUBLE_EQ(s.cal_prevalence[1], 42.0 / 62.0);
    EXPECT_DOUBLE_EQ(s.test_prevalence[1], 18.0 / 38.0);
    EXPECT_DOUBLE_EQ(s.cal_prevalence[0], 20.0 / 62.0);
    EXPECT_LT(make_shifted_splits(labels, SplitSpec{0.0, 0.5, 0.5, 3, {{ClassLabel::hard, {0.3, 0.7}}}})
                  .cal_prevalence[1],
              0.5);
}

TEST(Splits, NoShiftMapMatchesMakeSplits) {
    const auto labels = alternating(200, 4);
    const SplitSpec spec{0.5, 0.25, 0.25, 8, {}};
    const auto a = make_splits(labels, spec);
    const auto b = make_shifted_splits(labels, spec);
    EXPECT_EQ(a.cal, b.splits.cal);
    EXPECT_EQ(a.test, b.splits.test);
}

TEST(Splits, Errors) {
    const auto labels = alternating(100, 3);
    EXPECT_THROW(make_splits(labels, SplitSpec{0.5, 0.3, 0.3, 1, {}}), SplitError);
    EXPECT_THROW(make_splits(labels, SplitSpec{0.5, 0.5, 0.0, 1, {}}), SplitError);
    EXPECT_THROW(make_splits(labels, SplitSpec{0.5, 0.25, 0.25, 1, {{ClassLabel::hard, {0.7, 0.7}}}}), SplitError);
    EXPECT_THROW(make_shifted_splits(labels, SplitSpec{0.5, 0.25, 0.25, 1, {{ClassLabel::hard, {1.0, 0.0}}}}),
                 SplitError);
    EXPECT_THROW(make_shifted_splits(std::vector<ClassLabel>(10, ClassLabel::easy), SplitSpec{}), SplitError);
}

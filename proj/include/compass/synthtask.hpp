#pragma once
// Synthetic segmentation task: bright disks ("easy") and faint noisy
// ellipses ("hard") on a square canvas, plus exchangeable and
// label-shifted train/calibration/test splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/parallel.hpp"
#include "compass/tensor.hpp"

namespace compass {

enum class ClassLabel : int { easy = 0, hard = 1 };
inline constexpr std::size_t class_count = 2;

inline const char* to_string(ClassLabel c) { return c == ClassLabel::easy ? "easy" : "hard"; }

inline ClassLabel class_from_string(const std::string& s) {
    if (s == "easy") return ClassLabel::easy;
    if (s == "hard") return ClassLabel::hard;
    throw std::invalid_argument("unknown class label '" + s + "'");
}

struct Sample {
    Tensor image;  // [1,H,W], intensities in [0,1]
    Tensor mask;   // [1,H,W], entries in {0,1}
    double area = 0.0;
    ClassLabel class_label = ClassLabel::easy;
};

struct Range {
    double lo, hi;
};

struct TaskSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    double hard_fraction = 0.6;
    Range easy_radius{5.0, 10.0};
    Range hard_semi_axis{4.0, 12.0};
    double background = 0.2;
    double contrast = 0.4;  // easy foreground minus background; hard uses half
    double noise = 0.08;    // easy noise std; hard uses double
    double blur = 0.8;      // Gaussian sigma in pixels, 0 disables
};

class TaskError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void validate_task(const TaskSpec& spec) {
    const double extent = std::min(spec.height, spec.width);
    if (spec.easy_radius.lo <= 0 || spec.easy_radius.hi < spec.easy_radius.lo || spec.hard_semi_axis.lo <= 0 ||
        spec.hard_semi_axis.hi < spec.hard_semi_axis.lo) {
        throw TaskError("task: shape size ranges must be positive and ordered");
    }
    const double largest = std::max(spec.easy_radius.hi, spec.hard_semi_axis.hi);
    if (2.0 * largest + 2.0 > extent) {
        throw TaskError("task: canvas " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                        " too small for shapes of size " + std::to_string(largest));
    }
    if (spec.hard_fraction < 0 || spec.hard_fraction > 1) throw TaskError("task: hard_fraction must lie in [0,1]");
    if (spec.noise < 0 || spec.blur < 0) throw TaskError("task: noise and blur must be non-negative");
}

inline double uniform(std::mt19937_64& rng, Range r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

inline Tensor gaussian_blur(const Tensor& img, double sigma) {
    if (sigma <= 0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& k : kernel) k /= total;
    const std::size_t h = img.dim(1), w = img.dim(2);
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
    Tensor tmp(img.shape()), out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[i + radius] * img(0, y, clampi(static_cast<int>(x) + i, static_cast<int>(w)));
            tmp(0, y, x) = s;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += kernel[i + radius] * tmp(0, clampi(static_cast<int>(y) + i, static_cast<int>(h)), x);
            out(0, y, x) = s;
        }
    return out;
}

}  // namespace detail

/// Builds sample `index` of a dataset. Draw order from stream(seed, index):
/// class u ~ U[0,1) (hard iff u < hard_fraction); then for easy: radius,
/// center x, center y; for hard: semi-axis a, semi-axis b, angle, center x,
/// center y; then per-pixel noise in row-major order. A pixel is foreground
/// when its center (x+0.5, y+0.5) lies inside the shape.
inline Sample generate_sample(const TaskSpec& spec, std::uint64_t seed, std::size_t index) {
    auto rng = stream(seed, index);
    const std::size_t h = spec.height, w = spec.width;
    Sample s;
    s.mask = Tensor({1, h, w});
    const bool hard = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.hard_fraction;
    s.class_label = hard ? ClassLabel::hard : ClassLabel::easy;

    if (!hard) {
        const double r = detail::uniform(rng, spec.easy_radius);
        const double cx = detail::uniform(rng, {r, static_cast<double>(w) - r});
        const double cy = detail::uniform(rng, {r, static_cast<double>(h) - r});
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                s.mask(0, y, x) = dx * dx + dy * dy <= r * r ? 1.0 : 0.0;
            }
    } else {
        const double a = detail::uniform(rng, spec.hard_semi_axis);
        const double b = detail::uniform(rng, spec.hard_semi_axis);
        const double theta = detail::uniform(rng, {0.0, std::numbers::pi});
        const double reach = std::max(a, b);
        const double cx = detail::uniform(rng, {reach, static_cast<double>(w) - reach});
        const double cy = detail::uniform(rng, {reach, static_cast<double>(h) - reach});
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double u = (ct * dx + st * dy) / a, v = (-st * dx + ct * dy) / b;
                s.mask(0, y, x) = u * u + v * v <= 1.0 ? 1.0 : 0.0;
            }
    }
    s.area = s.mask.sum();

    const double contrast = hard ? 0.5 * spec.contrast : spec.contrast;
    const double noise = hard ? 2.0 * spec.noise : spec.noise;
    const double background = hard ? spec.background + 0.25 * spec.contrast : spec.background;
    Tensor clean({1, h, w});
    for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = background + contrast * s.mask[i];
    s.image = detail::gaussian_blur(clean, spec.blur);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < s.image.size(); ++i) {
        const double eps = gauss(rng);
        s.image[i] = std::clamp(s.image[i] + noise * eps, 0.0, 1.0);
    }
    return s;
}

/// Seed-deterministic dataset; sample i depends only on (spec, seed, i).
inline std::vector<Sample> generate_dataset(std::size_t n, const TaskSpec& spec, std::uint64_t seed) {
    if (n == 0) throw TaskError("generate_dataset: requested zero samples");
    detail::validate_task(spec);
    return parallel_map<Sample>(n, [&](std::size_t i) { return generate_sample(spec, seed, i); });
}

// ---------------------------------------------------------------------------
// Splits

struct ShiftFractions {
    double cal = 0.5;
    double test = 0.5;
};

struct SplitSpec {
    double train = 0.5;
    double cal = 0.25;
    double test = 0.25;
    std::uint64_t seed = 0;
    // class -> share of that class's non-train samples sent to cal / test
    std::map<ClassLabel, ShiftFractions> shift;
};

struct Splits {
    std::vector<std::size_t> train, cal, test;
};

struct ShiftedSplits {
    Splits splits;
    std::array<double, class_count> cal_prevalence{};
    std::array<double, class_count> test_prevalence{};
};

class SplitError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void validate_split(const SplitSpec& spec) {
    for (double r : {spec.train, spec.cal, spec.test})
        if (r < 0 || r > 1) throw SplitError("split ratios must lie in [0,1]");
    if (std::abs(spec.train + spec.cal + spec.test - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
    if (spec.cal + spec.test <= 0) throw SplitError("split leaves no calibration or test mass");
    for (const auto& [label, f] : spec.shift) {
        if (f.cal < 0 || f.cal > 1 || f.test < 0 || f.test > 1)
            throw SplitError(std::string("shift fractions for class ") + to_string(label) + " must lie in [0,1]");
        if (std::abs(f.cal + f.test - 1.0) > 1e-9)
            throw SplitError(std::string("shift fractions for class ") + to_string(label) + " must sum to 1");
    }
}

inline std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace detail

/// Divides a pool into calibration and test. Without a shift entry a class is
/// spread in proportion cal_share; classes listed in `shift` use their own
/// fractions. Pool order is randomised with `seed` first.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pool(
    std::vector<std::size_t> pool, std::span<const ClassLabel> labels, double cal_share,
    const std::map<ClassLabel, ShiftFractions>& shift, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x5eed));
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::size_t> cal, test;
    if (shift.empty()) {
        const std::size_t n_cal = detail::rounded(cal_share * static_cast<double>(pool.size()));
        cal.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_cal));
        test.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_cal), pool.end());
        return {cal, test};
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        const auto label = static_cast<ClassLabel>(c);
        std::vector<std::size_t> members;
        for (std::size_t idx : pool)
            if (labels[idx] == label) members.push_back(idx);
        const auto it = shift.find(label);
        const double share = it == shift.end() ? cal_share : it->second.cal;
        const std::size_t n_cal = detail::rounded(share * static_cast<double>(members.size()));
        cal.insert(cal.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_cal));
        test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_cal), members.end());
    }
    std::sort(cal.begin(), cal.end());
    std::sort(test.begin(), test.end());
    std::shuffle(cal.begin(), cal.end(), rng);
    std::shuffle(test.begin(), test.end(), rng);
    return {cal, test};
}

/// Train set is a uniform random subset of size round(train·n); the rest is
/// divided by split_pool.
inline Splits make_splits(std::span<const ClassLabel> labels, const SplitSpec& spec) {
    detail::validate_split(spec);
    const std::size_t n = labels.size();
    if (n == 0) throw SplitError("make_splits: empty dataset");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(spec.seed, 0x7a17));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = detail::rounded(spec.train * static_cast<double>(n));
    Splits out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> pool(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(pool.begin(), pool.end());
    auto [cal, test] = split_pool(std::move(pool), labels, spec.cal / (spec.cal + spec.test), spec.shift, spec.seed);
    out.cal = std::move(cal);
    out.test = std::move(test);
    if (out.cal.empty() || out.test.empty()) throw SplitError("make_splits: empty calibration or test partition");
    return out;
}

inline std::vector<ClassLabel> labels_of(std::span<const Sample> samples) {
    std::vector<ClassLabel> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.class_label);
    return out;
}

inline std::array<double, class_count> prevalence(std::span<const std::size_t> idx, std::span<const ClassLabel> labels) {
    std::array<double, class_count> p{};
    for (std::size_t i : idx) p[static_cast<std::size_t>(labels[i])] += 1.0;
    for (auto& v : p) v /= static_cast<double>(idx.size());
    return p;
}

/// make_splits plus the exact class prevalences of calibration and test.
inline ShiftedSplits make_shifted_splits(std::span<const ClassLabel> labels, const SplitSpec& spec) {
    std::array<std::size_t, class_count> counts{};
    for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < class_count; ++c)
        if (counts[c] == 0)
            throw SplitError(std::string("make_shifted_splits: class ") + to_string(static_cast<ClassLabel>(c)) +
                             " absent from dataset");
    ShiftedSplits out{make_splits(labels, spec), {}, {}};
    out.cal_prevalence = prevalence(out.splits.cal, labels);
    out.test_prevalence = prevalence(out.splits.test, labels);
    for (std::size_t c = 0; c < class_count; ++c) {
        if (out.cal_prevalence[c] == 0 || out.test_prevalence[c] == 0)
            throw SplitError(std::string("make_shifted_splits: class ") + to_string(static_cast<ClassLabel>(c)) +
                             " absent from calibration or test");
    }
    return out;
}

}  // namespace compass

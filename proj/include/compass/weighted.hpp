#pragma once
// Weighted calibration under covariate shift.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/calibrate.hpp"
#include "compass/linalg.hpp"
#include "compass/parallel.hpp"
#include "compass/pipeline.hpp"
#include "compass/subspace.hpp"
#include "compass/synthtask.hpp"

namespace compass {

enum class WeightSource { uniform, class_oracle, latent_classifier, jacobian_classifier };

inline const char* to_string(WeightSource s) {
    switch (s) {
        case WeightSource::uniform: return "uniform";
        case WeightSource::class_oracle: return "class";
        case WeightSource::latent_classifier: return "latent";
        case WeightSource::jacobian_classifier: return "jacobian";
    }
    return "?";
}

struct WeightVector {
    std::vector<double> weights;
    WeightSource source = WeightSource::uniform;
    double clip_min = 0.0, clip_max = infinity;
    std::size_t clipped = 0;

    double clip_rate() const { return weights.empty() ? 0.0 : static_cast<double>(clipped) / weights.size(); }
};

class NegativeWeightError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct WeightedQuantileOptions {
    // Adds the test point's own weight as mass at +inf in the denominator.
    bool include_test_mass = false;
    double test_weight = 1.0;
};

/// inf{beta : sum_i w_i 1{R_i <= beta} / sum_j w_j >= 1 - alpha}, scanned over
/// the sorted distinct scores.
inline double weighted_quantile(std::span<const double> scores, std::span<const double> weights, double alpha,
                                const WeightedQuantileOptions& opts = {}) {
    if (scores.size() != weights.size()) throw std::invalid_argument("weighted_quantile: length mismatch");
    if (scores.empty()) throw EmptyScoresError();
    if (!(alpha >= 0 && alpha < 1)) throw std::invalid_argument("weighted_quantile: alpha must lie in [0,1)");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0) throw NegativeWeightError("weighted_quantile: negative weight");
        if (!std::isfinite(w)) throw std::invalid_argument("weighted_quantile: non-finite weight");
        total += w;
    }
    if (opts.include_test_mass) {
        if (opts.test_weight < 0) throw NegativeWeightError("weighted_quantile: negative test weight");
        total += opts.test_weight;
    }
    if (!(total > 0)) throw std::invalid_argument("weighted_quantile: weights sum to zero");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // relative slack so exact-arithmetic ties such as 3/4 >= 0.75 survive rounding
    const double target = (1.0 - alpha) * total * (1.0 - 1e-12);
    double cumulative = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double value = scores[order[i]];
        while (i < order.size() && scores[order[i]] == value) cumulative += weights[order[i++]];
        if (cumulative >= target) return value;
    }
    return infinity;
}

inline CalibrationResult calibrate_weighted(std::span<const double> scores, std::span<const double> weights,
                                            double alpha, const WeightedQuantileOptions& opts = {}) {
    CalibrationResult r;
    r.beta_hat = weighted_quantile(scores, weights, alpha, opts);
    r.alpha = alpha;
    r.n = scores.size();
    r.weighted = true;
    r.too_small = !std::isfinite(r.beta_hat);
    return r;
}

inline CalibrationResult calibrate_weighted_asymmetric(std::span<const double> lo, std::span<const double> hi,
                                                       std::span<const double> weights, double alpha_lo,
                                                       double alpha_hi, const WeightedQuantileOptions& opts = {}) {
    CalibrationResult r;
    r.mode = ScoreMode::asymmetric;
    r.beta_hat_lo = weighted_quantile(lo, weights, alpha_lo, opts);
    r.beta_hat_hi = weighted_quantile(hi, weights, alpha_hi, opts);
    r.alpha_lo = alpha_lo;
    r.alpha_hi = alpha_hi;
    r.alpha = alpha_lo + alpha_hi;
    r.n = lo.size();
    r.weighted = true;
    r.too_small = !r.finite();
    return r;
}

/// w_i = test_prev[class_i] / cal_prev[class_i]
inline WeightVector class_oracle_weights(std::span<const ClassLabel> cal_labels,
                                         const std::array<double, class_count>& cal_prev,
                                         const std::array<double, class_count>& test_prev) {
    WeightVector out;
    out.source = WeightSource::class_oracle;
    out.weights.reserve(cal_labels.size());
    for (auto label : cal_labels) {
        const auto c = static_cast<std::size_t>(label);
        if (!(cal_prev[c] > 0))
            throw std::invalid_argument(std::string("class_oracle_weights: zero calibration prevalence for class ") +
                                        to_string(label));
        out.weights.push_back(test_prev[c] / cal_prev[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classifier-based density ratios

struct RatioConfig {
    LogisticConfig logistic{};
    double clip_min = 1e-3;
    double clip_max = 1e3;
    double holdout_fraction = 0.2;  // for the AUC diagnostic only
    std::uint64_t seed = 0;
};

struct RatioWeights {
    WeightVector weights;
    double holdout_auc = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
};

namespace detail {

struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const Matrix& a, const Matrix& b) {
        const std::size_t d = a.cols();
        Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
        const double n = static_cast<double>(a.rows() + b.rows());
        for (const Matrix* m : {&a, &b})
            for (std::size_t i = 0; i < m->rows(); ++i)
                for (std::size_t j = 0; j < d; ++j) s.mean[j] += (*m)(i, j) / n;
        std::vector<double> var(d, 0.0);
        for (const Matrix* m : {&a, &b})
            for (std::size_t i = 0; i < m->rows(); ++i)
                for (std::size_t j = 0; j < d; ++j) var[j] += std::pow((*m)(i, j) - s.mean[j], 2) / n;
        for (std::size_t j = 0; j < d; ++j) s.scale[j] = var[j] > 1e-24 ? std::sqrt(var[j]) : 1.0;
        return s;
    }

    void apply(std::span<const double> in, std::span<double> out) const {
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
    }
};

// Mann-Whitney AUC of scores for positives vs negatives.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j + 1);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum += mid_rank, pos += 1.0;
        i = j;
    }
    const double neg = static_cast<double>(scores.size()) - pos;
    if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
    return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

}  // namespace detail

/// Logistic classifier of calibration (0) vs test (1);
/// w_i = p_i / (1 - p_i) · n_cal / n_test, clipped to [clip_min, clip_max].
inline RatioWeights estimate_ratio_weights(const Matrix& cal, const Matrix& test, const RatioConfig& cfg,
                                           WeightSource source = WeightSource::latent_classifier) {
    if (cal.rows() == 0 || test.rows() == 0) throw DegenerateClassificationError();
    if (cal.cols() != test.cols()) throw std::invalid_argument("estimate_ratio_weights: feature dimensions differ");
    const std::size_t d = cal.cols();
    const auto standardizer = detail::Standardizer::fit(cal, test);
    Matrix x(cal.rows() + test.rows(), d);
    std::vector<int> labels(x.rows());
    for (std::size_t i = 0; i < cal.rows(); ++i) standardizer.apply(cal.row(i), x.row(i));
    for (std::size_t i = 0; i < test.rows(); ++i) {
        standardizer.apply(test.row(i), x.row(cal.rows() + i));
        labels[cal.rows() + i] = 1;
    }

    RatioWeights out;
    // held-out AUC
    if (cfg.holdout_fraction > 0 && cfg.holdout_fraction < 1) {
        std::vector<std::size_t> order(x.rows());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(cfg.seed, 0xa0c));
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_hold = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * x.rows()));
        Matrix fit_x(x.rows() - n_hold, d);
        std::vector<int> fit_y;
        for (std::size_t i = n_hold; i < order.size(); ++i) {
            std::copy_n(x.row(order[i]).begin(), d, fit_x.row(i - n_hold).begin());
            fit_y.push_back(labels[order[i]]);
        }
        try {
            const auto model = logistic_fit(fit_x, fit_y, cfg.logistic);
            std::vector<double> s;
            std::vector<int> y;
            for (std::size_t i = 0; i < n_hold; ++i) {
                s.push_back(model.logit(x.row(order[i])));
                y.push_back(labels[order[i]]);
            }
            out.holdout_auc = detail::auc(s, y);
        } catch (const DegenerateClassificationError&) {
        }
    }

    const auto model = logistic_fit(x, labels, cfg.logistic);
    out.converged = model.converged;
    const double prior = static_cast<double>(cal.rows()) / static_cast<double>(test.rows());
    auto& wv = out.weights;
    wv.source = source;
    wv.clip_min = cfg.clip_min;
    wv.clip_max = cfg.clip_max;
    for (std::size_t i = 0; i < cal.rows(); ++i) {
        // odds = exp(logit), computed without forming p/(1-p)
        const double w = std::exp(model.logit(x.row(i))) * prior;
        const double clipped = std::clamp(std::isfinite(w) ? w : cfg.clip_max, cfg.clip_min, cfg.clip_max);
        if (clipped != w) ++wv.clipped;
        wv.weights.push_back(clipped);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shift features

enum class FeatureKind { class_onehot, latent, jacobian };

inline const char* to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::class_onehot: return "class";
        case FeatureKind::latent: return "latent";
        case FeatureKind::jacobian: return "jacobian";
    }
    return "?";
}

/// One row per sample: class one-hot, channel-summed latent, or
/// channel-summed soft-area Jacobian at the latent tap.
inline Matrix build_shift_features(std::span<const Sample> samples, FeatureKind kind,
                                   const PipelineParams* params = nullptr) {
    if (kind == FeatureKind::class_onehot) {
        Matrix out(samples.size(), class_count);
        for (std::size_t i = 0; i < samples.size(); ++i) out(i, static_cast<std::size_t>(samples[i].class_label)) = 1.0;
        return out;
    }
    if (params == nullptr) throw std::invalid_argument("build_shift_features: pipeline required for latent/jacobian");
    const std::size_t c = params->channels();
    Matrix out(samples.size(), c);
    parallel_for(samples.size(), [&](std::size_t i) {
        const Tensor latent = encode(*params, samples[i].image);
        const auto row = kind == FeatureKind::latent
                             ? channel_summarize(latent)
                             : channel_summarize(metric_jacobian_from_latent(*params, latent, soft_area, Tap::latent));
        std::copy(row.begin(), row.end(), out.row(i).begin());
    });
    return out;
}

}  // namespace compass

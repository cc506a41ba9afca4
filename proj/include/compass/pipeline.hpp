#pragma once
// Toy differentiable segmentation stack split at a latent tap:
//   encoder  f : conv1 (1->C, 3x3) + ReLU                 -> latent
//   decoder  g : conv2 (C->C, 3x3) + ReLU, conv3 (C->1, 1x1) -> logits -> sigmoid
//   metric   h : soft area (sum of probabilities) or hard area (thresholded count)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/parallel.hpp"
#include "compass/synthtask.hpp"
#include "compass/tensor.hpp"

namespace compass {

struct PipelineParams {
    Tensor w1, b1;  // [C,1,3,3], [C]
    Tensor w2, b2;  // [C,C,3,3], [C]
    Tensor w3, b3;  // [1,C,1,1], [1]

    std::size_t channels() const { return w1.dim(0); }

    template <typename Fn>
    void for_each(Fn&& fn) {
        fn(w1), fn(b1), fn(w2), fn(b2), fn(w3), fn(b3);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        fn(w1), fn(b1), fn(w2), fn(b2), fn(w3), fn(b3);
    }

    friend bool operator==(const PipelineParams&, const PipelineParams&) = default;
};

inline PipelineParams zero_params(std::size_t channels) {
    return {Tensor({channels, 1, 3, 3}), Tensor({channels}), Tensor({channels, channels, 3, 3}),
            Tensor({channels}),          Tensor({1, channels, 1, 1}), Tensor({1})};
}

/// He-normal weights, zero biases, output bias at the logit of `prior`.
inline PipelineParams init_params(std::size_t channels, std::uint64_t seed, double prior = 0.15) {
    if (channels == 0) throw std::invalid_argument("init_params: zero channels");
    auto p = zero_params(channels);
    std::mt19937_64 rng(derive_seed(seed, 0x1417));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto fill = [&](Tensor& t, double fan_in) {
        const double scale = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data()) v = scale * gauss(rng);
    };
    fill(p.w1, 9.0);
    fill(p.w2, 9.0 * static_cast<double>(channels));
    fill(p.w3, static_cast<double>(channels));
    p.b3[0] = std::log(prior / (1.0 - prior));
    return p;
}

enum class Tap { latent, logits };
enum class MetricKind { soft_area, hard_area };

inline const char* to_string(Tap t) { return t == Tap::latent ? "latent" : "logits"; }
inline const char* to_string(MetricKind k) { return k == MetricKind::soft_area ? "soft_area" : "hard_area"; }

struct MetricSpec {
    MetricKind kind = MetricKind::hard_area;
    double threshold = 0.5;
};

inline constexpr MetricSpec soft_area{MetricKind::soft_area, 0.5};
inline constexpr MetricSpec hard_area{MetricKind::hard_area, 0.5};

class NonDifferentiableMetricError : public std::invalid_argument {
public:
    NonDifferentiableMetricError() : std::invalid_argument("non-differentiable metric") {}
};

class TrainingDivergedError : public std::runtime_error {
public:
    explicit TrainingDivergedError(std::size_t epoch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double metric_value(std::span<const double> probs, const MetricSpec& metric) {
    if (!(metric.threshold > 0 && metric.threshold < 1)) throw std::invalid_argument("metric threshold must lie in (0,1)");
    double s = 0.0;
    if (metric.kind == MetricKind::soft_area) {
        for (double p : probs) s += p;
    } else {
        for (double p : probs) s += p > metric.threshold ? 1.0 : 0.0;
    }
    return s;
}

inline Tensor sigmoid(const Tensor& logits) {
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
    return out;
}

inline Tensor relu(Tensor t) {
    for (auto& v : t.data()) v = v > 0 ? v : 0.0;
    return t;
}

struct ForwardResult {
    Tensor latent;  // f(x), [C,H,W]
    Tensor logits;  // [1,H,W]
    Tensor probs;   // sigmoid(logits)
};

namespace detail {

inline void check_image(const PipelineParams& p, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 1)
        throw ShapeError("pipeline: expected image [1,H,W], got " + shape_str(image.shape()));
    (void)p;
}

inline void check_latent(const PipelineParams& p, const Tensor& latent) {
    if (latent.rank() != 3 || latent.dim(0) != p.channels())
        throw ShapeError("pipeline: expected latent [" + std::to_string(p.channels()) + ",H,W], got " +
                         shape_str(latent.shape()));
}

}  // namespace detail

inline Tensor encode(const PipelineParams& p, const Tensor& image) {
    detail::check_image(p, image);
    return relu(conv2d(image, p.w1, p.b1));
}

inline Tensor decode_logits(const PipelineParams& p, const Tensor& latent) {
    detail::check_latent(p, latent);
    return conv2d(relu(conv2d(latent, p.w2, p.b2)), p.w3, p.b3);
}

inline ForwardResult forward(const PipelineParams& p, const Tensor& image) {
    ForwardResult r;
    r.latent = encode(p, image);
    r.logits = decode_logits(p, r.latent);
    r.probs = sigmoid(r.logits);
    return r;
}

/// Runs only the part of the network after `tap` on a (possibly perturbed)
/// representation and applies the metric.
inline double decode_metric(const PipelineParams& p, const Tensor& representation, const MetricSpec& metric,
                            Tap tap = Tap::latent) {
    const Tensor logits = tap == Tap::latent ? decode_logits(p, representation) : representation;
    return metric_value(sigmoid(logits).data(), metric);
}

/// d soft_area / d representation at the given tap, by reverse mode through
/// the decoder.
inline Tensor metric_jacobian_from_latent(const PipelineParams& p, const Tensor& latent, const MetricSpec& metric,
                                          Tap tap) {
    if (metric.kind != MetricKind::soft_area) throw NonDifferentiableMetricError();
    detail::check_latent(p, latent);
    const Tensor pre2 = conv2d(latent, p.w2, p.b2);
    const Tensor hidden = relu(pre2);
    const Tensor logits = conv2d(hidden, p.w3, p.b3);
    Tensor grad_logits(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double s = sigmoid(logits[i]);
        grad_logits[i] = s * (1.0 - s);
    }
    if (tap == Tap::logits) return grad_logits;
    Tensor grad_pre2 = conv2d_input_grad(grad_logits, p.w3);
    for (std::size_t i = 0; i < pre2.size(); ++i)
        if (!(pre2[i] > 0)) grad_pre2[i] = 0.0;
    return conv2d_input_grad(grad_pre2, p.w2);
}

inline Tensor metric_jacobian(const PipelineParams& p, const Tensor& image, const MetricSpec& metric, Tap tap) {
    if (metric.kind != MetricKind::soft_area) throw NonDifferentiableMetricError();
    return metric_jacobian_from_latent(p, encode(p, image), metric, tap);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 300;
    double loss_threshold = 0.35;
};

struct TrainResult {
    PipelineParams params;
    std::vector<double> loss_history;  // mean loss before each update, plus the final loss
    bool below_threshold = false;

    double final_loss() const { return loss_history.empty() ? 0.0 : loss_history.back(); }
};

struct LossGradient {
    double loss = 0.0;
    PipelineParams grad;
};

namespace detail {

inline constexpr std::size_t gradient_blocks = 16;

inline double bce_with_logits(double logit, double target) {
    const double sp = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
    return sp - target * logit;
}

// Adds the unnormalised loss gradient for one sample into `grad`; returns
// the summed pixel loss.
inline double accumulate_sample_gradient(const PipelineParams& p, const Tensor& image, const Tensor& mask,
                                         PipelineParams& grad) {
    const Tensor pre1 = conv2d(image, p.w1, p.b1);
    const Tensor latent = relu(pre1);
    const Tensor pre2 = conv2d(latent, p.w2, p.b2);
    const Tensor hidden = relu(pre2);
    const Tensor logits = conv2d(hidden, p.w3, p.b3);

    double loss = 0.0;
    Tensor g_logits(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        loss += bce_with_logits(logits[i], mask[i]);
        g_logits[i] = sigmoid(logits[i]) - mask[i];
    }
    conv2d_param_grad(hidden, g_logits, grad.w3, grad.b3.data());
    Tensor g_pre2 = conv2d_input_grad(g_logits, p.w3);
    for (std::size_t i = 0; i < pre2.size(); ++i)
        if (!(pre2[i] > 0)) g_pre2[i] = 0.0;
    conv2d_param_grad(latent, g_pre2, grad.w2, grad.b2.data());
    Tensor g_pre1 = conv2d_input_grad(g_pre2, p.w2);
    for (std::size_t i = 0; i < pre1.size(); ++i)
        if (!(pre1[i] > 0)) g_pre1[i] = 0.0;
    conv2d_param_grad(image, g_pre1, grad.w1, grad.b1.data());
    return loss;
}

}  // namespace detail

/// Mean pixelwise binary cross-entropy over `samples` and its gradient.
/// Partial sums are formed over a fixed number of contiguous blocks, so the
/// result is identical for any worker count.
inline LossGradient loss_and_gradient(const PipelineParams& p, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("loss_and_gradient: empty sample set");
    const std::size_t n = samples.size();
    const std::size_t blocks = std::min(detail::gradient_blocks, n);
    std::vector<LossGradient> partial(blocks);
    parallel_for(blocks, [&](std::size_t b) {
        auto& out = partial[b];
        out.grad = zero_params(p.channels());
        const std::size_t begin = b * n / blocks, end = (b + 1) * n / blocks;
        for (std::size_t i = begin; i < end; ++i)
            out.loss += detail::accumulate_sample_gradient(p, samples[i].image, samples[i].mask, out.grad);
    });
    LossGradient total{0.0, zero_params(p.channels())};
    for (auto& part : partial) {
        total.loss += part.loss;
        auto add = [](Tensor& dst, const Tensor& src) { dst += src; };
        add(total.grad.w1, part.grad.w1), add(total.grad.b1, part.grad.b1), add(total.grad.w2, part.grad.w2);
        add(total.grad.b2, part.grad.b2), add(total.grad.w3, part.grad.w3), add(total.grad.b3, part.grad.b3);
    }
    const double pixels = static_cast<double>(n * samples.front().mask.size());
    total.loss /= pixels;
    total.grad.for_each([&](Tensor& t) { t *= 1.0 / pixels; });
    return total;
}

inline double mean_loss(const PipelineParams& p, std::span<const Sample> samples) {
    double total = 0.0, pixels = 0.0;
    for (const auto& s : samples) {
        const auto logits = forward(p, s.image).logits;
        for (std::size_t i = 0; i < logits.size(); ++i) total += detail::bce_with_logits(logits[i], s.mask[i]);
        pixels += static_cast<double>(logits.size());
    }
    return total / pixels;
}

/// Full-batch gradient descent on pixelwise BCE.
inline TrainResult train(PipelineParams params, std::span<const Sample> train_set, const TrainConfig& cfg = {}) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto lg = loss_and_gradient(params, train_set);
        if (!std::isfinite(lg.loss)) throw TrainingDivergedError(epoch);
        result.loss_history.push_back(lg.loss);
        params.w1.axpy(-cfg.learning_rate, lg.grad.w1);
        params.b1.axpy(-cfg.learning_rate, lg.grad.b1);
        params.w2.axpy(-cfg.learning_rate, lg.grad.w2);
        params.b2.axpy(-cfg.learning_rate, lg.grad.b2);
        params.w3.axpy(-cfg.learning_rate, lg.grad.w3);
        params.b3.axpy(-cfg.learning_rate, lg.grad.b3);
    }
    if (cfg.epochs > 0) {
        const double final_loss = loss_and_gradient(params, train_set).loss;
        if (!std::isfinite(final_loss)) throw TrainingDivergedError(cfg.epochs);
        result.loss_history.push_back(final_loss);
    } else {
        result.loss_history.push_back(mean_loss(params, train_set));
    }
    result.below_threshold = result.final_loss() < cfg.loss_threshold;
    result.params = std::move(params);
    return result;
}

// ---------------------------------------------------------------------------
// Metric responses along a perturbation line, beta -> h(g(rep + beta·delta)).

/// Reference evaluator: re-runs the decoder on rep + beta·delta every call.
class DirectLine {
public:
    DirectLine(const PipelineParams& p, Tensor rep, Tensor delta, MetricSpec metric, Tap tap)
        : params_(&p), rep_(std::move(rep)), delta_(std::move(delta)), metric_(metric), tap_(tap) {
        rep_.require_same_shape(delta_, "DirectLine");
    }
    double operator()(double beta) const {
        Tensor z = rep_;
        z.axpy(beta, delta_);
        return decode_metric(*params_, z, metric_, tap_);
    }

private:
    const PipelineParams* params_;
    Tensor rep_, delta_;
    MetricSpec metric_;
    Tap tap_;
};

/// Latent-tap evaluator. conv2 is linear, so conv2(z + beta·delta) is
/// precomputed as base + beta·slope and each call costs one ReLU and one
/// 1x1 convolution.
class LatentLine {
public:
    LatentLine(const PipelineParams& p, const Tensor& latent, const Tensor& delta, MetricSpec metric)
        : metric_(metric) {
        detail::check_latent(p, latent);
        latent.require_same_shape(delta, "LatentLine");
        base_ = conv2d(latent, p.w2, p.b2);
        const std::vector<double> no_bias(p.channels(), 0.0);
        slope_ = conv2d(delta, p.w2, no_bias);
        w3_.assign(p.w3.data().begin(), p.w3.data().end());
        b3_ = p.b3[0];
        pixels_ = latent.dim(1) * latent.dim(2);
    }

    double operator()(double beta) const {
        const std::size_t channels = w3_.size();
        double total = 0.0;
        for (std::size_t i = 0; i < pixels_; ++i) {
            double logit = b3_;
            for (std::size_t c = 0; c < channels; ++c) {
                const double a = base_[c * pixels_ + i] + beta * slope_[c * pixels_ + i];
                if (a > 0) logit += w3_[c] * a;
            }
            const double s = sigmoid(logit);
            total += metric_.kind == MetricKind::soft_area ? s : (s > metric_.threshold ? 1.0 : 0.0);
        }
        return total;
    }

private:
    Tensor base_, slope_;
    std::vector<double> w3_;
    double b3_ = 0.0;
    std::size_t pixels_ = 0;
    MetricSpec metric_;
};

/// Logit-tap evaluator: sigmoid(logits + beta·delta) then the metric.
class LogitLine {
public:
    LogitLine(Tensor logits, Tensor delta, MetricSpec metric)
        : logits_(std::move(logits)), delta_(std::move(delta)), metric_(metric) {
        logits_.require_same_shape(delta_, "LogitLine");
    }

    double operator()(double beta) const {
        double total = 0.0;
        for (std::size_t i = 0; i < logits_.size(); ++i) {
            const double s = sigmoid(logits_[i] + beta * delta_[i]);
            total += metric_.kind == MetricKind::soft_area ? s : (s > metric_.threshold ? 1.0 : 0.0);
        }
        return total;
    }

private:
    Tensor logits_, delta_;
    MetricSpec metric_;
};

}  // namespace compass

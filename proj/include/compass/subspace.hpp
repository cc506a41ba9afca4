#pragma once
// Metric-sensitive subspace: PCA over channel-summed Jacobians and the
// per-sample perturbation directions derived from it.

#include <cmath>
#include <cstddef>
#include <iostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "compass/linalg.hpp"
#include "compass/tensor.hpp"

namespace compass {

enum class NormKind { unit, ones };

struct Direction {
    Tensor values;
    NormKind norm_kind = NormKind::unit;
    bool fallback = false;  // projection vanished, ones direction used instead
};

struct SensitiveSubspace {
    Matrix basis;                       // C x L, orthonormal columns
    std::vector<double> center;         // mean summary, length C
    std::vector<double> eigenvalues;    // all C covariance eigenvalues, descending

    std::size_t channels() const { return basis.rows(); }
    std::size_t components() const { return basis.cols(); }

    double explained_variance_ratio(std::size_t k) const {
        double total = 0.0;
        for (double v : eigenvalues) total += std::max(v, 0.0);
        return total > 0 ? std::max(eigenvalues.at(k), 0.0) / total : 0.0;
    }
};

class SubspaceError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Sums a [C,H,W] tensor over its spatial axes.
inline std::vector<double> channel_summarize(const Tensor& t) {
    if (t.rank() != 3) throw ShapeError("channel_summarize: expected [C,H,W], got " + shape_str(t.shape()));
    const std::size_t c = t.dim(0), hw = t.dim(1) * t.dim(2);
    std::vector<double> out(c, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
        const double* p = t.data().data() + k * hw;
        for (std::size_t i = 0; i < hw; ++i) out[k] += p[i];
    }
    return out;
}

/// Top-`components` principal directions of mean-centred summaries.
inline SensitiveSubspace fit_subspace(std::span<const std::vector<double>> summaries, std::size_t components) {
    if (summaries.size() < 2) throw SubspaceError("fit_subspace: need at least two summaries");
    const std::size_t c = summaries.front().size();
    if (components < 1 || components > c) {
        throw SubspaceError("fit_subspace: component count " + std::to_string(components) + " outside [1, " +
                            std::to_string(c) + "]");
    }
    for (const auto& s : summaries)
        if (s.size() != c) throw SubspaceError("fit_subspace: summaries differ in dimension");

    const double n = static_cast<double>(summaries.size());
    std::vector<double> mean(c, 0.0);
    for (const auto& s : summaries)
        for (std::size_t j = 0; j < c; ++j) mean[j] += s[j] / n;
    Matrix cov(c, c);
    for (const auto& s : summaries)
        for (std::size_t a = 0; a < c; ++a)
            for (std::size_t b = 0; b <= a; ++b) cov(a, b) += (s[a] - mean[a]) * (s[b] - mean[b]);
    for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            cov(a, b) /= n - 1.0;
            cov(b, a) = cov(a, b);
        }

    const auto eig = sym_eigendecomp(cov);
    SensitiveSubspace out{Matrix(c, components), std::move(mean), eig.values};
    for (std::size_t k = 0; k < components; ++k)
        for (std::size_t r = 0; r < c; ++r) out.basis(r, k) = eig.vectors(r, k);
    return out;
}

/// V Vᵀ (v - center)
inline std::vector<double> project(const SensitiveSubspace& s, std::span<const double> v) {
    const std::size_t c = s.channels(), l = s.components();
    if (v.size() != c) throw ShapeError("project: expected " + std::to_string(c) + " channels");
    std::vector<double> coeff(l, 0.0), out(c, 0.0);
    for (std::size_t k = 0; k < l; ++k)
        for (std::size_t r = 0; r < c; ++r) coeff[k] += s.basis(r, k) * (v[r] - s.center[r]);
    for (std::size_t r = 0; r < c; ++r)
        for (std::size_t k = 0; k < l; ++k) out[r] += s.basis(r, k) * coeff[k];
    return out;
}

/// Every entry 1, unnormalised: beta becomes a per-element shift.
inline Direction logits_direction(const Shape& shape) { return {Tensor::ones(shape), NormKind::ones, false}; }

/// Projects the sample's channel-summed Jacobian onto the subspace and
/// spreads the result uniformly over spatial positions with unit L2 norm.
inline Direction direction_for(const SensitiveSubspace& s, const Tensor& jacobian) {
    if (jacobian.rank() != 3 || jacobian.dim(0) != s.channels()) {
        throw ShapeError("direction_for: Jacobian " + shape_str(jacobian.shape()) + " does not match " +
                         std::to_string(s.channels()) + " channels");
    }
    const auto d = project(s, channel_summarize(jacobian));
    double norm = 0.0;
    for (double v : d) norm += v * v;
    norm = std::sqrt(norm);
    const std::size_t hw = jacobian.dim(1) * jacobian.dim(2);
    Direction out{Tensor(jacobian.shape()), NormKind::unit, false};
    if (norm < 1e-12) {
        std::clog << "compass: projected sensitivity vanished, using normalised ones direction\n";
        out.values = Tensor(jacobian.shape(), 1.0 / std::sqrt(static_cast<double>(jacobian.size())));
        out.fallback = true;
        return out;
    }
    const double scale = 1.0 / (norm * std::sqrt(static_cast<double>(hw)));
    for (std::size_t c = 0; c < d.size(); ++c)
        for (std::size_t i = 0; i < hw; ++i) out.values[c * hw + i] = d[c] * scale;
    return out;
}

}  // namespace compass

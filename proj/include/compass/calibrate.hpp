#pragma once
// Conformal calibration over perturbation intervals
//   S_beta(x) = [min(m(-beta), m(+beta)), max(m(-beta), m(+beta))]
// where m(beta) is any metric response along a line in representation space.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/parallel.hpp"

namespace compass {

template <typename F>
concept MetricLine = requires(const F& f, double beta) {
    { f(beta) } -> std::convertible_to<double>;
};

inline constexpr double infinity = std::numeric_limits<double>::infinity();

struct PerturbationInterval {
    double lo = 0.0, hi = 0.0;
    double beta_lo = 0.0, beta_hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double y) const { return lo <= y && y <= hi; }
};

class NonFiniteMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <MetricLine Line>
double eval_finite(const Line& line, double beta) {
    const double v = static_cast<double>(line(beta));
    if (!std::isfinite(v)) throw NonFiniteMetricError("metric is not finite at beta = " + std::to_string(beta));
    return v;
}

// Lower and upper envelope of the two endpoints at magnitude beta.
template <MetricLine Line>
std::pair<double, double> endpoints(const Line& line, double beta) {
    const double minus = eval_finite(line, -beta);
    const double plus = beta == 0.0 ? minus : eval_finite(line, beta);
    return {std::min(minus, plus), std::max(minus, plus)};
}

}  // namespace detail

template <MetricLine Line>
PerturbationInterval perturbed_interval(const Line& line, double beta) {
    if (!(beta >= 0)) throw std::invalid_argument("perturbed_interval: beta must be non-negative");
    const auto [lo, hi] = detail::endpoints(line, beta);
    return {lo, hi, beta, beta};
}

/// Lower end from the envelope at beta_lo, upper end from the envelope at beta_hi.
template <MetricLine Line>
PerturbationInterval perturbed_interval(const Line& line, double beta_lo, double beta_hi) {
    if (!(beta_lo >= 0) || !(beta_hi >= 0)) throw std::invalid_argument("perturbed_interval: beta must be non-negative");
    const double lo = detail::endpoints(line, beta_lo).first;
    const double hi = detail::endpoints(line, beta_hi).second;
    return {std::min(lo, hi), std::max(lo, hi), beta_lo, beta_hi};
}

// ---------------------------------------------------------------------------
// Score search

enum class SearchMethod { linear, binary };
enum class ScoreMode { symmetric, asymmetric };

inline const char* to_string(SearchMethod m) { return m == SearchMethod::linear ? "linear" : "binary"; }
inline const char* to_string(ScoreMode m) { return m == ScoreMode::symmetric ? "symmetric" : "asymmetric"; }

struct SearchConfig {
    SearchMethod method = SearchMethod::binary;
    double beta_range = 20.0;
    std::size_t k_max = 40;
    double beta_step = 0.0;  // linear search step; 0 means beta_range / 1024

    double step() const { return beta_step > 0 ? beta_step : beta_range / 1024.0; }
    double resolution() const {
        return method == SearchMethod::binary ? std::ldexp(beta_range, -static_cast<int>(k_max)) : step();
    }
};

namespace detail {

// Smallest k·step (k >= 0, k·step <= beta_max) with covered(k·step).
template <typename Pred>
double linear_search(Pred&& covered, double step, double beta_max) {
    if (!(step > 0)) throw std::invalid_argument("linear search: step must be positive");
    for (std::size_t k = 0;; ++k) {
        const double beta = static_cast<double>(k) * step;
        if (beta > beta_max * (1.0 + 1e-12)) return infinity;
        if (covered(beta)) return beta;
    }
}

// Halving search on [0, beta_range]. Returns 0 when covered at 0, +inf when
// not covered at beta_range, otherwise b_high after k_max halvings.
template <typename Pred>
double binary_search(Pred&& covered, double beta_range, std::size_t k_max) {
    if (k_max < 1) throw std::invalid_argument("binary search: k_max must be >= 1");
    if (covered(0.0)) return 0.0;
    if (!covered(beta_range)) return infinity;
    double low = 0.0, high = beta_range;
    for (std::size_t k = 0; k < k_max; ++k) {
        const double mid = 0.5 * (low + high);
        if (covered(mid))
            high = mid;
        else
            low = mid;
    }
    return high;
}

}  // namespace detail

/// Smallest multiple of beta_step whose interval contains y; +inf past beta_max.
template <MetricLine Line>
double score_symmetric_linear(const Line& line, double y, double beta_step, double beta_max) {
    return detail::linear_search([&](double b) { return perturbed_interval(line, b).contains(y); }, beta_step,
                                 beta_max);
}

template <MetricLine Line>
double score_symmetric_binary(const Line& line, double y, double beta_range, std::size_t k_max) {
    return detail::binary_search([&](double b) { return perturbed_interval(line, b).contains(y); }, beta_range, k_max);
}

template <MetricLine Line>
double score_symmetric(const Line& line, double y, const SearchConfig& cfg) {
    return cfg.method == SearchMethod::binary ? score_symmetric_binary(line, y, cfg.beta_range, cfg.k_max)
                                              : score_symmetric_linear(line, y, cfg.step(), cfg.beta_range);
}

struct AsymmetricScore {
    double lo = 0.0;  // inf{beta : lower envelope <= y}
    double hi = 0.0;  // inf{beta : upper envelope >= y}
};

template <MetricLine Line>
AsymmetricScore score_asymmetric(const Line& line, double y, const SearchConfig& cfg) {
    auto lower_ok = [&](double b) { return detail::endpoints(line, b).first <= y; };
    auto upper_ok = [&](double b) { return detail::endpoints(line, b).second >= y; };
    if (cfg.method == SearchMethod::binary) {
        return {detail::binary_search(lower_ok, cfg.beta_range, cfg.k_max),
                detail::binary_search(upper_ok, cfg.beta_range, cfg.k_max)};
    }
    return {detail::linear_search(lower_ok, cfg.step(), cfg.beta_range),
            detail::linear_search(upper_ok, cfg.step(), cfg.beta_range)};
}

struct ScoreSet {
    ScoreMode mode = ScoreMode::symmetric;
    std::vector<double> scores;  // symmetric
    std::vector<double> lo, hi;  // asymmetric
    SearchMethod method = SearchMethod::binary;
    double beta_range = 0.0;
    double resolution = 0.0;

    std::size_t size() const { return mode == ScoreMode::symmetric ? scores.size() : lo.size(); }
};

/// Scores every (line, y) pair; runs in parallel, output in input order.
template <MetricLine Line>
ScoreSet compute_scores(std::span<const Line> lines, std::span<const double> ys, ScoreMode mode,
                        const SearchConfig& cfg) {
    if (lines.size() != ys.size()) throw std::invalid_argument("compute_scores: line and target counts differ");
    ScoreSet out{mode, {}, {}, {}, cfg.method, cfg.beta_range, cfg.resolution()};
    if (mode == ScoreMode::symmetric) {
        out.scores = parallel_map<double>(lines.size(), [&](std::size_t i) { return score_symmetric(lines[i], ys[i], cfg); });
    } else {
        const auto pairs =
            parallel_map<AsymmetricScore>(lines.size(), [&](std::size_t i) { return score_asymmetric(lines[i], ys[i], cfg); });
        for (const auto& p : pairs) {
            out.lo.push_back(p.lo);
            out.hi.push_back(p.hi);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quantiles and calibration

class EmptyScoresError : public std::invalid_argument {
public:
    EmptyScoresError() : std::invalid_argument("empty score set") {}
};

struct QuantileResult {
    double value = 0.0;
    std::size_t rank = 0;      // k = ceil((1 - alpha)(n + 1))
    std::size_t n = 0;
    bool too_small = false;    // k > n, value is +inf
};

/// ceil((1 - alpha)(n + 1)) with a guard against products such as
/// 9.000000000000002 that are integers in exact arithmetic.
inline std::size_t conformal_rank(double alpha, std::size_t n) {
    const double x = (1.0 - alpha) * static_cast<double>(n + 1);
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

/// The ceil((1-alpha)(n+1))-th smallest score; +inf (flagged) when that rank exceeds n.
inline QuantileResult conformal_quantile(std::span<const double> scores, double alpha) {
    if (scores.empty()) throw EmptyScoresError();
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("conformal_quantile: alpha must lie in (0,1)");
    QuantileResult r;
    r.n = scores.size();
    r.rank = std::max<std::size_t>(1, conformal_rank(alpha, r.n));
    if (r.rank > r.n) {
        r.value = infinity;
        r.too_small = true;
        return r;
    }
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r.rank - 1), sorted.end());
    r.value = sorted[r.rank - 1];
    return r;
}

struct CalibrationResult {
    ScoreMode mode = ScoreMode::symmetric;
    double beta_hat = 0.0;
    double beta_hat_lo = 0.0, beta_hat_hi = 0.0;
    double alpha = 0.0;
    double alpha_lo = 0.0, alpha_hi = 0.0;
    std::size_t n = 0;
    std::size_t quantile_index = 0;  // unweighted rank; 0 when weighted
    bool weighted = false;
    bool too_small = false;

    bool finite() const {
        return mode == ScoreMode::symmetric ? std::isfinite(beta_hat)
                                            : std::isfinite(beta_hat_lo) && std::isfinite(beta_hat_hi);
    }
};

inline CalibrationResult calibrate_symmetric(std::span<const double> scores, double alpha) {
    const auto q = conformal_quantile(scores, alpha);
    CalibrationResult r;
    r.beta_hat = q.value;
    r.alpha = alpha;
    r.n = q.n;
    r.quantile_index = q.rank;
    r.too_small = q.too_small;
    return r;
}

inline CalibrationResult calibrate_asymmetric(std::span<const double> lo, std::span<const double> hi, double alpha_lo,
                                              double alpha_hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("calibrate_asymmetric: score lengths differ");
    const auto ql = conformal_quantile(lo, alpha_lo);
    const auto qh = conformal_quantile(hi, alpha_hi);
    CalibrationResult r;
    r.mode = ScoreMode::asymmetric;
    r.beta_hat_lo = ql.value;
    r.beta_hat_hi = qh.value;
    r.alpha_lo = alpha_lo;
    r.alpha_hi = alpha_hi;
    r.alpha = alpha_lo + alpha_hi;
    r.n = ql.n;
    r.too_small = ql.too_small || qh.too_small;
    return r;
}

struct Prediction {
    PerturbationInterval interval;
    bool degenerate = false;  // non-finite calibration, full metric range returned
};

/// Interval at the calibrated magnitude(s); [0, range_max] when the
/// calibration is not finite.
template <MetricLine Line>
Prediction predict_interval(const Line& line, const CalibrationResult& cal, double range_max) {
    if (!cal.finite()) return {{0.0, range_max, infinity, infinity}, true};
    if (cal.mode == ScoreMode::symmetric) return {perturbed_interval(line, cal.beta_hat), false};
    return {perturbed_interval(line, cal.beta_hat_lo, cal.beta_hat_hi), false};
}

// ---------------------------------------------------------------------------
// Split conformal baseline on |y - yhat|

struct ScpCalibration {
    double margin = 0.0;
    QuantileResult quantile;
};

inline ScpCalibration scp_calibrate(std::span<const double> residuals, double alpha) {
    for (double r : residuals)
        if (r < 0) throw std::invalid_argument("scp_calibrate: residuals must be absolute values");
    const auto q = conformal_quantile(residuals, alpha);
    return {q.value, q};
}

inline PerturbationInterval scp_interval(double yhat, double margin, double range_max) {
    if (!std::isfinite(margin)) return {0.0, range_max, margin, margin};
    return {std::max(0.0, yhat - margin), std::min(range_max, yhat + margin), margin, margin};
}

// ---------------------------------------------------------------------------
// Nestedness diagnostics

struct NestednessReport {
    bool ok = true;
    double max_violation = 0.0;    // largest containment breach, metric units
    std::size_t violations = 0;    // consecutive grid pairs that breach
};

/// Checks S_{beta_k} within S_{beta_k+1} over an ascending grid.
template <MetricLine Line>
NestednessReport check_nestedness(const Line& line, std::span<const double> grid) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] < grid[i - 1]) throw std::invalid_argument("check_nestedness: grid must be ascending");
    NestednessReport r;
    if (grid.size() < 2) return r;
    auto prev = detail::endpoints(line, grid[0]);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const auto cur = detail::endpoints(line, grid[i]);
        const double breach = std::max(cur.first - prev.first, prev.second - cur.second);
        if (breach > 0) {
            r.ok = false;
            ++r.violations;
            r.max_violation = std::max(r.max_violation, breach);
        }
        prev = cur;
    }
    return r;
}

inline std::vector<double> uniform_grid(double max_beta, std::size_t intervals) {
    std::vector<double> g(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) g[i] = max_beta * static_cast<double>(i) / static_cast<double>(intervals);
    return g;
}

}  // namespace compass

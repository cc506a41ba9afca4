#pragma once
// Repeated-split experiments, beta/area trajectories and the log-log score
// compression fit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "compass/calibrate.hpp"
#include "compass/parallel.hpp"
#include "compass/pipeline.hpp"
#include "compass/subspace.hpp"
#include "compass/synthtask.hpp"
#include "compass/weighted.hpp"

namespace compass {

enum class Method { compass_j, compass_l, scp };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::compass_j: return "compass_j";
        case Method::compass_l: return "compass_l";
        case Method::scp: return "scp";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "compass_j") return Method::compass_j;
    if (s == "compass_l") return Method::compass_l;
    if (s == "scp") return Method::scp;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline WeightSource weighting_from_string(const std::string& s) {
    if (s == "none" || s == "uniform") return WeightSource::uniform;
    if (s == "class") return WeightSource::class_oracle;
    if (s == "latent") return WeightSource::latent_classifier;
    if (s == "jacobian") return WeightSource::jacobian_classifier;
    throw std::invalid_argument("unknown weighting '" + s + "'");
}

struct ExperimentConfig {
    TaskSpec task{};
    std::size_t n_samples = 2000;
    SplitSpec split{0.5, 0.25, 0.25, 0, {}};
    std::size_t channels = 8;
    TrainConfig train{};
    std::size_t components = 1;
    std::vector<Method> methods{Method::compass_j, Method::compass_l, Method::scp};
    std::vector<double> alphas{0.05, 0.1, 0.15};
    bool asymmetric = false;
    double alpha_lo = 0.05, alpha_hi = 0.05;
    std::size_t n_splits = 100;
    std::uint64_t seed = 0;
    SearchConfig search_latent{SearchMethod::binary, 20.0, 40, 0.0};
    SearchConfig search_logits{SearchMethod::binary, 15.0, 40, 0.0};
    std::vector<WeightSource> weightings{WeightSource::uniform};
    RatioConfig ratio{};
    WeightedQuantileOptions weighted_quantile{};
    double max_failure_rate = 0.05;
};

/// Split-independent quantities for one non-train sample.
struct PoolRecord {
    std::size_t index = 0;  // into the dataset
    ClassLabel label = ClassLabel::easy;
    double y = 0.0;
    double yhat = 0.0;  // hard area of the unperturbed prediction
    double score_j = infinity, score_l = infinity;
    AsymmetricScore asym_j{infinity, infinity}, asym_l{infinity, infinity};
    bool direction_fallback = false;
};

/// A trained pipeline, its sensitive subspace and all per-sample state needed
/// to calibrate and evaluate any cal/test division of the non-train pool.
struct Benchmark {
    ExperimentConfig config;
    std::vector<Sample> dataset;
    std::vector<ClassLabel> labels;
    std::vector<std::size_t> train, pool;
    TrainResult training;
    SensitiveSubspace subspace;
    std::vector<LatentLine> latent_lines;  // parallel to pool
    std::vector<LogitLine> logit_lines;    // parallel to pool
    std::vector<PoolRecord> records;       // parallel to pool
    Matrix latent_features, jacobian_features;  // rows parallel to pool
    double range_max = 0.0;

    bool uses(Method m) const {
        return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
    }
};

/// Generates data, trains (unless `pretrained` is given), fits the subspace on
/// training Jacobians and scores every pool sample once.
inline Benchmark prepare_benchmark(const ExperimentConfig& cfg, std::optional<PipelineParams> pretrained = std::nullopt) {
    Benchmark b;
    b.config = cfg;
    b.dataset = generate_dataset(cfg.n_samples, cfg.task, cfg.seed);
    b.labels = labels_of(b.dataset);
    SplitSpec base = cfg.split;
    base.seed = cfg.seed;
    base.shift.clear();
    const auto splits = make_splits(b.labels, base);
    b.train = splits.train;
    b.pool = splits.cal;
    b.pool.insert(b.pool.end(), splits.test.begin(), splits.test.end());
    std::sort(b.pool.begin(), b.pool.end());
    b.range_max = static_cast<double>(cfg.task.height * cfg.task.width);

    std::vector<Sample> train_set;
    train_set.reserve(b.train.size());
    for (auto i : b.train) train_set.push_back(b.dataset[i]);
    if (pretrained) {
        b.training.params = *pretrained;
        b.training.loss_history = {mean_loss(*pretrained, train_set)};
        b.training.below_threshold = b.training.final_loss() < cfg.train.loss_threshold;
    } else {
        b.training = train(init_params(cfg.channels, cfg.seed), train_set, cfg.train);
    }
    const auto& params = b.training.params;

    const auto train_summaries = parallel_map<std::vector<double>>(b.train.size(), [&](std::size_t i) {
        return channel_summarize(metric_jacobian(params, b.dataset[b.train[i]].image, soft_area, Tap::latent));
    });
    b.subspace = fit_subspace(train_summaries, cfg.components);

    const std::size_t n = b.pool.size();
    b.records.resize(n);
    b.latent_lines.reserve(n);
    b.logit_lines.reserve(n);
    b.latent_features = Matrix(n, params.channels());
    b.jacobian_features = Matrix(n, params.channels());
    std::vector<std::optional<LatentLine>> latent_lines(n);
    std::vector<std::optional<LogitLine>> logit_lines(n);
    parallel_for(n, [&](std::size_t k) {
        const auto& s = b.dataset[b.pool[k]];
        const auto fwd = forward(params, s.image);
        const Tensor jac = metric_jacobian_from_latent(params, fwd.latent, soft_area, Tap::latent);
        const auto dir = direction_for(b.subspace, jac);
        latent_lines[k].emplace(params, fwd.latent, dir.values, hard_area);
        logit_lines[k].emplace(fwd.logits, logits_direction(fwd.logits.shape()).values, hard_area);

        auto& rec = b.records[k];
        rec.index = b.pool[k];
        rec.label = s.class_label;
        rec.y = s.area;
        rec.yhat = metric_value(fwd.probs.data(), hard_area);
        rec.direction_fallback = dir.fallback;
        if (b.uses(Method::compass_j)) {
            rec.score_j = score_symmetric(*latent_lines[k], rec.y, cfg.search_latent);
            if (cfg.asymmetric) rec.asym_j = score_asymmetric(*latent_lines[k], rec.y, cfg.search_latent);
        }
        if (b.uses(Method::compass_l)) {
            rec.score_l = score_symmetric(*logit_lines[k], rec.y, cfg.search_logits);
            if (cfg.asymmetric) rec.asym_l = score_asymmetric(*logit_lines[k], rec.y, cfg.search_logits);
        }
        const auto lat = channel_summarize(fwd.latent);
        const auto jsum = channel_summarize(jac);
        std::copy(lat.begin(), lat.end(), b.latent_features.row(k).begin());
        std::copy(jsum.begin(), jsum.end(), b.jacobian_features.row(k).begin());
    });
    for (std::size_t k = 0; k < n; ++k) {
        b.latent_lines.push_back(std::move(*latent_lines[k]));
        b.logit_lines.push_back(std::move(*logit_lines[k]));
    }
    return b;
}

// ---------------------------------------------------------------------------
// Per-split evaluation

struct SplitRecord {
    std::size_t split = 0;
    std::string method;     // e.g. compass_j, compass_l_asym, scp
    std::string weighting;  // uniform, class, latent, jacobian
    double alpha = 0.0;     // total miscoverage target
    double beta_hat = 0.0;  // margin for scp; beta_hat_hi for asymmetric
    double beta_hat_lo = 0.0;
    double coverage = 0.0;
    double mean_width = 0.0;
    std::size_t n_cal = 0, n_test = 0;
    std::size_t degenerate = 0;  // test intervals replaced by the full range
    double clip_rate = 0.0;
    double auc = std::numeric_limits<double>::quiet_NaN();
};

struct SplitFailure {
    std::size_t split;
    std::string message;
};

struct MethodSummary {
    std::string method, weighting;
    double alpha = 0.0;
    double coverage_mean = 0.0, coverage_std = 0.0;
    double width_mean = 0.0, width_std = 0.0;
    std::size_t n_splits = 0;
    double degenerate_rate = 0.0;
    double clip_rate = 0.0;
};

struct ExperimentReport {
    std::vector<MethodSummary> summaries;
    std::vector<SplitRecord> records;
    std::vector<SplitFailure> failures;
    std::size_t n_splits = 0;
    std::uint64_t seed = 0;
    double train_loss = 0.0;

    const MethodSummary& find(const std::string& method, const std::string& weighting, double alpha) const {
        for (const auto& s : summaries)
            if (s.method == method && s.weighting == weighting && std::abs(s.alpha - alpha) < 1e-12) return s;
        throw std::out_of_range("no summary for " + method + "/" + weighting + " at alpha " + std::to_string(alpha));
    }
};

class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean and sample standard deviation per (method, weighting, alpha).
inline std::vector<MethodSummary> aggregate(std::span<const SplitRecord> records) {
    std::map<std::tuple<std::string, std::string, double>, std::vector<const SplitRecord*>> groups;
    for (const auto& r : records) groups[{r.method, r.weighting, r.alpha}].push_back(&r);
    std::vector<MethodSummary> out;
    for (const auto& [key, rs] : groups) {
        MethodSummary s;
        std::tie(s.method, s.weighting, s.alpha) = key;
        s.n_splits = rs.size();
        const double n = static_cast<double>(rs.size());
        double tests = 0.0, degenerate = 0.0;
        for (const auto* r : rs) {
            s.coverage_mean += r->coverage / n;
            s.width_mean += r->mean_width / n;
            s.clip_rate += r->clip_rate / n;
            tests += static_cast<double>(r->n_test);
            degenerate += static_cast<double>(r->degenerate);
        }
        for (const auto* r : rs) {
            s.coverage_std += std::pow(r->coverage - s.coverage_mean, 2);
            s.width_std += std::pow(r->mean_width - s.width_mean, 2);
        }
        s.coverage_std = rs.size() > 1 ? std::sqrt(s.coverage_std / (n - 1)) : 0.0;
        s.width_std = rs.size() > 1 ? std::sqrt(s.width_std / (n - 1)) : 0.0;
        s.degenerate_rate = tests > 0 ? degenerate / tests : 0.0;
        out.push_back(s);
    }
    return out;
}

namespace detail {

template <typename IntervalFn>
void evaluate_test(SplitRecord& rec, std::span<const std::size_t> test, std::span<const PoolRecord> records,
                   IntervalFn&& interval_for) {
    double covered = 0.0, width = 0.0;
    for (std::size_t k : test) {
        const Prediction p = interval_for(k);
        covered += p.interval.contains(records[k].y) ? 1.0 : 0.0;
        width += p.interval.width();
        rec.degenerate += p.degenerate ? 1 : 0;
    }
    rec.n_test = test.size();
    rec.coverage = covered / static_cast<double>(test.size());
    rec.mean_width = width / static_cast<double>(test.size());
}

struct SplitWeights {
    WeightSource source;
    std::vector<double> w;
    double clip_rate = 0.0;
    double auc = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace detail

/// Calibrates and evaluates every configured method on one cal/test division
/// of the pool (positions into Benchmark::pool).
inline std::vector<SplitRecord> run_split(const Benchmark& b, std::size_t split_index, std::span<const std::size_t> cal,
                                          std::span<const std::size_t> test) {
    const auto& cfg = b.config;
    if (cal.empty() || test.empty()) throw SplitError("run_split: empty calibration or test partition");
    const auto& recs = b.records;

    std::vector<detail::SplitWeights> weightings;
    for (auto source : cfg.weightings) {
        detail::SplitWeights sw{source, {}, 0.0, std::numeric_limits<double>::quiet_NaN()};
        if (source == WeightSource::uniform) {
            sw.w.assign(cal.size(), 1.0);
        } else if (source == WeightSource::class_oracle) {
            std::vector<ClassLabel> pool_labels(recs.size());
            for (std::size_t k = 0; k < recs.size(); ++k) pool_labels[k] = recs[k].label;
            std::vector<ClassLabel> cal_labels;
            for (auto k : cal) cal_labels.push_back(recs[k].label);
            sw.w = class_oracle_weights(cal_labels, prevalence(cal, pool_labels), prevalence(test, pool_labels)).weights;
        } else {
            const Matrix& feats =
                source == WeightSource::latent_classifier ? b.latent_features : b.jacobian_features;
            Matrix fc(cal.size(), feats.cols()), ft(test.size(), feats.cols());
            for (std::size_t i = 0; i < cal.size(); ++i) std::copy_n(feats.row(cal[i]).begin(), feats.cols(), fc.row(i).begin());
            for (std::size_t i = 0; i < test.size(); ++i) std::copy_n(feats.row(test[i]).begin(), feats.cols(), ft.row(i).begin());
            RatioConfig rc = cfg.ratio;
            rc.seed = derive_seed(cfg.seed, 0xc1a55 + split_index);
            auto rw = estimate_ratio_weights(fc, ft, rc, source);
            sw.w = std::move(rw.weights.weights);
            sw.clip_rate = static_cast<double>(rw.weights.clipped) / static_cast<double>(cal.size());
            sw.auc = rw.holdout_auc;
        }
        weightings.push_back(std::move(sw));
    }

    auto calibrate_sym = [&](std::span<const double> scores, const detail::SplitWeights& sw, double alpha) {
        return sw.source == WeightSource::uniform ? calibrate_symmetric(scores, alpha)
                                                  : calibrate_weighted(scores, sw.w, alpha, cfg.weighted_quantile);
    };
    auto calibrate_asym = [&](std::span<const double> lo, std::span<const double> hi, const detail::SplitWeights& sw) {
        return sw.source == WeightSource::uniform
                   ? calibrate_asymmetric(lo, hi, cfg.alpha_lo, cfg.alpha_hi)
                   : calibrate_weighted_asymmetric(lo, hi, sw.w, cfg.alpha_lo, cfg.alpha_hi, cfg.weighted_quantile);
    };

    std::vector<SplitRecord> out;
    auto base_record = [&](const std::string& method, const detail::SplitWeights& sw, double alpha) {
        SplitRecord r;
        r.split = split_index;
        r.method = method;
        r.weighting = to_string(sw.source);
        r.alpha = alpha;
        r.n_cal = cal.size();
        r.clip_rate = sw.clip_rate;
        r.auc = sw.auc;
        return r;
    };

    for (Method m : cfg.methods) {
        std::vector<double> scores(cal.size()), lo(cal.size()), hi(cal.size());
        for (std::size_t i = 0; i < cal.size(); ++i) {
            const auto& r = recs[cal[i]];
            switch (m) {
                case Method::compass_j: scores[i] = r.score_j, lo[i] = r.asym_j.lo, hi[i] = r.asym_j.hi; break;
                case Method::compass_l: scores[i] = r.score_l, lo[i] = r.asym_l.lo, hi[i] = r.asym_l.hi; break;
                case Method::scp: scores[i] = std::abs(r.y - r.yhat); break;
            }
        }
        for (const auto& sw : weightings) {
            for (double alpha : cfg.alphas) {
                auto rec = base_record(to_string(m), sw, alpha);
                const auto cal_result = calibrate_sym(scores, sw, alpha);
                rec.beta_hat = cal_result.beta_hat;
                if (m == Method::scp) {
                    detail::evaluate_test(rec, test, recs, [&](std::size_t k) {
                        const auto iv = scp_interval(recs[k].yhat, cal_result.beta_hat, b.range_max);
                        return Prediction{iv, !std::isfinite(cal_result.beta_hat)};
                    });
                } else if (m == Method::compass_j) {
                    detail::evaluate_test(rec, test, recs, [&](std::size_t k) {
                        return predict_interval(b.latent_lines[k], cal_result, b.range_max);
                    });
                } else {
                    detail::evaluate_test(rec, test, recs, [&](std::size_t k) {
                        return predict_interval(b.logit_lines[k], cal_result, b.range_max);
                    });
                }
                out.push_back(rec);
            }
            if (cfg.asymmetric && m != Method::scp) {
                auto rec = base_record(std::string(to_string(m)) + "_asym", sw, cfg.alpha_lo + cfg.alpha_hi);
                const auto cal_result = calibrate_asym(lo, hi, sw);
                rec.beta_hat = cal_result.beta_hat_hi;
                rec.beta_hat_lo = cal_result.beta_hat_lo;
                detail::evaluate_test(rec, test, recs, [&](std::size_t k) {
                    return m == Method::compass_j ? predict_interval(b.latent_lines[k], cal_result, b.range_max)
                                                  : predict_interval(b.logit_lines[k], cal_result, b.range_max);
                });
                out.push_back(rec);
            }
        }
    }
    return out;
}

/// Seeded cal/test division of the pool for split r (positions into pool).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pool_division(const Benchmark& b, std::size_t r) {
    std::vector<std::size_t> positions(b.pool.size());
    std::iota(positions.begin(), positions.end(), 0);
    std::vector<ClassLabel> labels(b.records.size());
    for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = b.records[k].label;
    const auto& sp = b.config.split;
    return split_pool(std::move(positions), labels, sp.cal / (sp.cal + sp.test), sp.shift,
                      derive_seed(b.config.seed, 1000 + r));
}

inline ExperimentReport run_splits(const Benchmark& b) {
    const auto& cfg = b.config;
    std::vector<std::vector<SplitRecord>> per_split(cfg.n_splits);
    std::vector<std::optional<std::string>> errors(cfg.n_splits);
    parallel_for(cfg.n_splits, [&](std::size_t r) {
        try {
            const auto [cal, test] = pool_division(b, r);
            per_split[r] = run_split(b, r, cal, test);
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });
    ExperimentReport report;
    report.n_splits = cfg.n_splits;
    report.seed = cfg.seed;
    report.train_loss = b.training.final_loss();
    for (std::size_t r = 0; r < cfg.n_splits; ++r) {
        if (errors[r]) report.failures.push_back({r, *errors[r]});
        report.records.insert(report.records.end(), per_split[r].begin(), per_split[r].end());
    }
    if (cfg.n_splits > 0 &&
        static_cast<double>(report.failures.size()) / static_cast<double>(cfg.n_splits) > cfg.max_failure_rate) {
        throw ExperimentError("split failure rate " + std::to_string(report.failures.size()) + "/" +
                              std::to_string(cfg.n_splits) + " exceeds limit; first: " + report.failures.front().message);
    }
    report.summaries = aggregate(report.records);
    return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) { return run_splits(prepare_benchmark(cfg)); }

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryPoint {
    double beta = 0.0;
    double area = 0.0;
    double delta_pct = 0.0;  // (A_beta - A_0) / A_0 · 100; NaN when A_0 = 0
};

struct TrajectoryReport {
    std::vector<TrajectoryPoint> points;
    bool monotone = true;  // area nondecreasing along the grid
    bool zero_baseline = false;
};

/// Area change along a beta grid; the grid must contain 0.
template <MetricLine Line>
TrajectoryReport beta_sweep(const Line& line, std::span<const double> grid) {
    if (std::find(grid.begin(), grid.end(), 0.0) == grid.end())
        throw std::invalid_argument("beta_sweep: grid must contain 0");
    TrajectoryReport r;
    const double a0 = static_cast<double>(line(0.0));
    r.zero_baseline = a0 == 0.0;
    for (double beta : grid) {
        const double a = static_cast<double>(line(beta));
        const double pct = r.zero_baseline ? std::numeric_limits<double>::quiet_NaN() : (a - a0) / a0 * 100.0;
        r.points.push_back({beta, a, pct});
    }
    std::vector<TrajectoryPoint> sorted = r.points;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.beta < b.beta; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].area < sorted[i - 1].area) r.monotone = false;
    return r;
}

/// Signed beta reaching a target percentage area change: a coarse scan in the
/// direction that moves area the right way, then bisection inside the first
/// bracketing cell. NaN if the target is out of reach within beta_max.
template <MetricLine Line>
double beta_for_area_change(const Line& line, double target_pct, double beta_max, std::size_t scan_steps = 64,
                            std::size_t refinements = 50) {
    const double a0 = static_cast<double>(line(0.0));
    if (target_pct == 0.0) return 0.0;
    const double target = a0 * (1.0 + target_pct / 100.0);
    const bool grow = target_pct > 0;
    auto reached = [&](double beta) {
        const double a = static_cast<double>(line(beta));
        return grow ? a >= target : a <= target;
    };
    for (double sign : {1.0, -1.0}) {
        double prev = 0.0;
        for (std::size_t k = 1; k <= scan_steps; ++k) {
            const double beta = sign * beta_max * static_cast<double>(k) / static_cast<double>(scan_steps);
            if (reached(beta)) {
                double inside = beta, outside = prev;
                for (std::size_t it = 0; it < refinements; ++it) {
                    const double mid = 0.5 * (inside + outside);
                    (reached(mid) ? inside : outside) = mid;
                }
                return inside;
            }
            prev = beta;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Power-law fit log(compass) = slope · log(scp) + intercept

struct PowerLawFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    std::size_t points = 0;
    std::size_t excluded = 0;  // pairs with a zero or non-finite score
};

class InsufficientDataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline PowerLawFit powerlaw_fit(std::span<const double> scp_scores, std::span<const double> compass_scores) {
    if (scp_scores.size() != compass_scores.size()) throw std::invalid_argument("powerlaw_fit: length mismatch");
    std::vector<double> xs, ys;
    PowerLawFit fit;
    for (std::size_t i = 0; i < scp_scores.size(); ++i) {
        const double x = scp_scores[i], y = compass_scores[i];
        if (x > 0 && y > 0 && std::isfinite(x) && std::isfinite(y)) {
            xs.push_back(std::log(x));
            ys.push_back(std::log(y));
        } else {
            ++fit.excluded;
        }
    }
    fit.points = xs.size();
    if (xs.size() < 10) throw InsufficientDataError("powerlaw_fit: fewer than 10 positive score pairs");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0)) throw InsufficientDataError("powerlaw_fit: SCP scores have no spread");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

inline void write_records_csv(std::ostream& os, std::span<const SplitRecord> records) {
    os << "split,method,weighting,alpha,beta_hat,beta_hat_lo,coverage,mean_width,n_cal,n_test,degenerate,clip_rate,auc\n";
    for (const auto& r : records) {
        using detail::fmt_double;
        os << r.split << ',' << r.method << ',' << r.weighting << ',' << fmt_double(r.alpha) << ','
           << fmt_double(r.beta_hat) << ',' << fmt_double(r.beta_hat_lo) << ',' << fmt_double(r.coverage) << ','
           << fmt_double(r.mean_width) << ',' << r.n_cal << ',' << r.n_test << ',' << r.degenerate << ','
           << fmt_double(r.clip_rate) << ',' << fmt_double(r.auc) << '\n';
    }
}

inline void write_summary_csv(std::ostream& os, std::span<const MethodSummary> summaries) {
    os << "method,weighting,alpha,coverage_mean,coverage_std,width_mean,width_std,n_splits,degenerate_rate,clip_rate\n";
    for (const auto& s : summaries) {
        using detail::fmt_double;
        os << s.method << ',' << s.weighting << ',' << fmt_double(s.alpha) << ',' << fmt_double(s.coverage_mean)
           << ',' << fmt_double(s.coverage_std) << ',' << fmt_double(s.width_mean) << ','
           << fmt_double(s.width_std) << ',' << s.n_splits << ',' << fmt_double(s.degenerate_rate) << ','
           << fmt_double(s.clip_rate) << '\n';
    }
}

}  // namespace compass

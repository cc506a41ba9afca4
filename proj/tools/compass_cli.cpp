// compass: command-line driver for the synthetic area-interval benchmark.
//
//   compass <generate|train|calibrate|evaluate|sweep|analyze|export> [--config file.json]
//           [--set key=value]... [--seed N] [--alpha A] [--splits N] [--out DIR]
//
// Every command writes <out>/<command>/manifest.json next to its artifacts.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "compass/compass.hpp"

namespace fs = std::filesystem;
using namespace compass;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::size_t> splits;
    std::string out;
    std::string logits, metrics;  // calibrate: external import
};

RunConfig resolve(const Options& o) {
    auto overrides = o.sets;
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    if (o.alpha) {
        std::ostringstream os;
        os << std::setprecision(17) << "alphas=[" << *o.alpha << "]";
        overrides.push_back(os.str());
    }
    if (o.splits) overrides.push_back("n_splits=" + std::to_string(*o.splits));
    if (!o.out.empty()) overrides.push_back("output_dir=" + nlohmann::json(o.out).dump());
    return load_config(o.config, overrides);
}

std::ofstream open_csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

std::string num(double v) { return detail::fmt_double(v); }

Benchmark prepare(const RunConfig& cfg) {
    std::optional<PipelineParams> params;
    if (!cfg.params.empty()) params = load_params(cfg.params);
    return prepare_benchmark(cfg.experiment, params);
}

// ---------------------------------------------------------------------------

void cmd_generate(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto& e = cfg.experiment;
    const auto data = generate_dataset(e.n_samples, e.task, e.seed);
    const auto labels = labels_of(data);
    SplitSpec spec = e.split;
    spec.seed = e.seed;
    const auto shifted = make_shifted_splits(labels, spec);

    save_dataset(dir, data);

    std::vector<std::string> role(data.size());
    for (auto i : shifted.splits.train) role[i] = "train";
    for (auto i : shifted.splits.cal) role[i] = "cal";
    for (auto i : shifted.splits.test) role[i] = "test";
    auto csv = open_csv(dir / "samples.csv");
    csv << "index,class,area,split\n";
    for (std::size_t i = 0; i < data.size(); ++i)
        csv << i << ',' << to_string(data[i].class_label) << ',' << data[i].area << ',' << role[i] << '\n';

    m.outputs = {"images.ctx", "masks.ctx", "labels.ctx", "samples.csv"};
    m.results = {{"n_samples", data.size()},
                 {"n_train", shifted.splits.train.size()},
                 {"n_cal", shifted.splits.cal.size()},
                 {"n_test", shifted.splits.test.size()},
                 {"cal_hard_prevalence", shifted.cal_prevalence[1]},
                 {"test_hard_prevalence", shifted.test_prevalence[1]}};
}

void cmd_train(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto& e = cfg.experiment;
    const auto data = generate_dataset(e.n_samples, e.task, e.seed);
    SplitSpec spec = e.split;
    spec.seed = e.seed;
    spec.shift.clear();
    const auto splits = make_splits(labels_of(data), spec);
    std::vector<Sample> train_set;
    for (auto i : splits.train) train_set.push_back(data[i]);
    const auto result = train(init_params(e.channels, e.seed), train_set, e.train);
    save_params(dir / "params.ctx", result.params);
    const auto summaries = parallel_map<std::vector<double>>(train_set.size(), [&](std::size_t i) {
        return channel_summarize(metric_jacobian(result.params, train_set[i].image, soft_area, Tap::latent));
    });
    save_subspace(dir / "subspace.ctx", fit_subspace(summaries, e.components));
    auto csv = open_csv(dir / "loss.csv");
    csv << "epoch,loss\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) csv << i << ',' << result.loss_history[i] << '\n';
    m.outputs = {"params.ctx", "subspace.ctx", "loss.csv"};
    m.results = {{"final_loss", result.final_loss()},
                 {"below_threshold", result.below_threshold},
                 {"epochs", e.train.epochs}};
}

void cmd_calibrate_import(const RunConfig& cfg, const Options& o, Manifest& m, const fs::path& dir) {
    if (o.metrics.empty()) throw ConfigError("--logits requires --metrics");
    const auto set = import_external_logits(o.logits, o.metrics);
    std::vector<double> scores(set.size()), residuals(set.size());
    parallel_for(set.size(), [&](std::size_t i) {
        scores[i] = score_symmetric(set.line(i), set.y[i], cfg.experiment.search_logits);
        residuals[i] = std::abs(set.y[i] - set.prediction(i));
    });
    auto csv = open_csv(dir / "calibration.csv");
    csv << "method,alpha,beta_hat\n";
    nlohmann::json res = nlohmann::json::object();
    for (double a : cfg.experiment.alphas) {
        const auto l = calibrate_symmetric(scores, a);
        const auto s = scp_calibrate(residuals, a);
        csv << "compass_l," << num(a) << ',' << num(l.beta_hat) << '\n';
        csv << "scp," << num(a) << ',' << num(s.margin) << '\n';
        res["compass_l"][num(a)] = std::isfinite(l.beta_hat) ? nlohmann::json(l.beta_hat) : nlohmann::json("inf");
        res["scp"][num(a)] = std::isfinite(s.margin) ? nlohmann::json(s.margin) : nlohmann::json("inf");
    }
    m.outputs = {"calibration.csv"};
    m.results = {{"source", "import"}, {"n_cal", set.size()}, {"beta_hat", res}};
}

void cmd_calibrate(const RunConfig& cfg, const Options& o, Manifest& m, const fs::path& dir) {
    if (!o.logits.empty()) return cmd_calibrate_import(cfg, o, m, dir);
    const auto b = prepare(cfg);
    const auto [cal, test] = pool_division(b, 0);
    auto scores_csv = open_csv(dir / "scores.csv");
    scores_csv << "index,class,y,yhat,scp_residual,score_j,score_l,score_j_lo,score_j_hi,score_l_lo,score_l_hi\n";
    for (auto k : cal) {
        const auto& r = b.records[k];
        scores_csv << r.index << ',' << to_string(r.label) << ',' << r.y << ',' << r.yhat << ',' << std::abs(r.y - r.yhat)
                   << ',' << num(r.score_j) << ',' << num(r.score_l) << ',' << num(r.asym_j.lo) << ','
                   << num(r.asym_j.hi) << ',' << num(r.asym_l.lo) << ',' << num(r.asym_l.hi) << '\n';
    }
    std::vector<double> sj, sl, res;
    for (auto k : cal) {
        sj.push_back(b.records[k].score_j);
        sl.push_back(b.records[k].score_l);
        res.push_back(std::abs(b.records[k].y - b.records[k].yhat));
    }
    auto csv = open_csv(dir / "calibration.csv");
    csv << "method,alpha,beta_hat\n";
    nlohmann::json out = nlohmann::json::object();
    for (Method mth : b.config.methods) {
        for (double a : b.config.alphas) {
            double v = 0.0;
            switch (mth) {
                case Method::compass_j: v = calibrate_symmetric(sj, a).beta_hat; break;
                case Method::compass_l: v = calibrate_symmetric(sl, a).beta_hat; break;
                case Method::scp: v = scp_calibrate(res, a).margin; break;
            }
            csv << to_string(mth) << ',' << num(a) << ',' << num(v) << '\n';
            out[to_string(mth)][num(a)] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf");
        }
    }
    m.outputs = {"scores.csv", "calibration.csv"};
    m.results = {{"source", "toy"}, {"n_cal", cal.size()}, {"train_loss", b.training.final_loss()}, {"beta_hat", out}};
}

void cmd_export(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto b = prepare(cfg);
    const auto [cal, test] = pool_division(b, 0);
    std::vector<Tensor> logits;
    std::vector<double> y;
    for (auto k : cal) {
        logits.push_back(forward(b.training.params, b.dataset[b.pool[k]].image).logits);
        y.push_back(b.records[k].y);
    }
    write_container(dir / "logits.ctx", logits);
    write_metrics_csv(dir / "metrics.csv", y);
    m.outputs = {"logits.ctx", "metrics.csv"};
    m.results = {{"n_exported", logits.size()}};
}

void cmd_evaluate(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto b = prepare(cfg);
    const auto report = run_splits(b);
    {
        auto csv = open_csv(dir / "records.csv");
        write_records_csv(csv, report.records);
    }
    {
        auto csv = open_csv(dir / "summary.csv");
        write_summary_csv(csv, report.summaries);
    }

    // split 0 intervals, uniform weighting, for independent recomputation
    const auto [cal, test] = pool_division(b, 0);
    auto csv = open_csv(dir / "intervals_split0.csv");
    csv << "index,method,alpha,lo,hi,y\n";
    for (Method mth : b.config.methods) {
        std::vector<double> scores;
        for (auto k : cal) {
            const auto& r = b.records[k];
            scores.push_back(mth == Method::compass_j   ? r.score_j
                             : mth == Method::compass_l ? r.score_l
                                                        : std::abs(r.y - r.yhat));
        }
        for (double a : b.config.alphas) {
            const auto c = calibrate_symmetric(scores, a);
            for (auto k : test) {
                PerturbationInterval iv;
                if (mth == Method::scp) iv = scp_interval(b.records[k].yhat, c.beta_hat, b.range_max);
                else if (mth == Method::compass_j) iv = predict_interval(b.latent_lines[k], c, b.range_max).interval;
                else iv = predict_interval(b.logit_lines[k], c, b.range_max).interval;
                csv << b.records[k].index << ',' << to_string(mth) << ',' << num(a) << ',' << num(iv.lo) << ','
                    << num(iv.hi) << ',' << num(b.records[k].y) << '\n';
            }
        }
    }

    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : report.summaries) {
        summary.push_back({{"method", s.method},
                           {"weighting", s.weighting},
                           {"alpha", s.alpha},
                           {"coverage_mean", s.coverage_mean},
                           {"coverage_std", s.coverage_std},
                           {"width_mean", s.width_mean},
                           {"width_std", s.width_std},
                           {"degenerate_rate", s.degenerate_rate},
                           {"clip_rate", s.clip_rate}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : report.failures) failures.push_back({{"split", f.split}, {"message", f.message}});
    m.outputs = {"records.csv", "summary.csv", "intervals_split0.csv"};
    m.results = {{"train_loss", report.train_loss},
                 {"n_splits", report.n_splits},
                 {"summaries", summary},
                 {"failures", failures}};
}

void cmd_sweep(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto b = prepare(cfg);
    const auto& sw = cfg.sweep;
    const auto grid = [&] {
        std::vector<double> g(sw.points);
        const std::size_t half = sw.points / 2;
        for (std::size_t i = 0; i < sw.points; ++i)
            g[i] = i == half ? 0.0
                             : sw.beta_max * (static_cast<double>(i) - static_cast<double>(half)) /
                                   static_cast<double>(half);
        return g;
    }();
    auto traj = open_csv(dir / "trajectory.csv");
    traj << "index,method,beta,area,delta_pct\n";
    auto targets = open_csv(dir / "targets.csv");
    targets << "index,method,target_pct,beta,area\n";
    std::size_t monotone = 0, total = 0;
    const std::size_t n = std::min(sw.samples, b.pool.size());
    for (std::size_t k = 0; k < n; ++k) {
        const auto idx = b.records[k].index;
        auto emit = [&](const char* name, const auto& line) {
            const auto r = beta_sweep(line, grid);
            monotone += r.monotone ? 1 : 0;
            ++total;
            for (const auto& p : r.points)
                traj << idx << ',' << name << ',' << num(p.beta) << ',' << num(p.area) << ',' << num(p.delta_pct) << '\n';
            for (double t : sw.targets) {
                const double beta = beta_for_area_change(line, t, sw.beta_max);
                targets << idx << ',' << name << ',' << num(t) << ',' << num(beta) << ','
                        << num(std::isnan(beta) ? beta : line(beta)) << '\n';
            }
        };
        emit("compass_j", b.latent_lines[k]);
        emit("compass_l", b.logit_lines[k]);
    }
    m.outputs = {"trajectory.csv", "targets.csv"};
    m.results = {{"trajectories", total}, {"monotone", monotone}};
}

void cmd_analyze(const RunConfig& cfg, Manifest& m, const fs::path& dir) {
    const auto b = prepare(cfg);
    std::vector<double> scp, sj;
    auto csv = open_csv(dir / "powerlaw.csv");
    csv << "index,scp_score,compass_j_score\n";
    for (const auto& r : b.records) {
        scp.push_back(std::abs(r.y - r.yhat));
        sj.push_back(r.score_j);
        csv << r.index << ',' << num(scp.back()) << ',' << num(sj.back()) << '\n';
    }
    const auto fit = powerlaw_fit(scp, sj);
    m.outputs = {"powerlaw.csv"};
    m.results = {{"slope", fit.slope},
                 {"intercept", fit.intercept},
                 {"r2", fit.r2},
                 {"points", fit.points},
                 {"excluded", fit.excluded}};
}

void emit_error(const char* kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal area intervals from latent perturbations on a synthetic segmentation task"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config,-c", o.config, "JSON config file");
        sub->add_option("--set", o.sets, "override, key=value (dotted keys)");
        sub->add_option("--seed", o.seed, "seed override");
        sub->add_option("--alpha", o.alpha, "single miscoverage level override");
        sub->add_option("--splits", o.splits, "number of cal/test resplits");
        sub->add_option("--out,-o", o.out, "output directory (default $COMPASS_OUT_DIR or compass_out)");
    };
    const std::vector<std::pair<std::string, std::string>> commands{
        {"generate", "write the synthetic dataset and its split assignment"},
        {"train", "train the toy segmentation network"},
        {"calibrate", "compute calibration scores and thresholds for the first split"},
        {"evaluate", "repeated-split coverage and width experiment"},
        {"sweep", "beta versus area-change trajectories"},
        {"analyze", "log-log fit of latent scores against output residuals"},
        {"export", "export first-split calibration logits and metrics"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub);
        if (name == "calibrate") {
            sub->add_option("--logits", o.logits, "external logits container (skips the toy network)");
            sub->add_option("--metrics", o.metrics, "metrics CSV matching --logits");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("config", e.what());
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const RunConfig cfg = resolve(o);
        const fs::path dir = cfg.resolved_output_dir() / command;
        fs::create_directories(dir);
        Manifest m{command, cfg, {}, nlohmann::json::object()};
        if (command == "generate") cmd_generate(cfg, m, dir);
        else if (command == "train") cmd_train(cfg, m, dir);
        else if (command == "calibrate") cmd_calibrate(cfg, o, m, dir);
        else if (command == "evaluate") cmd_evaluate(cfg, m, dir);
        else if (command == "sweep") cmd_sweep(cfg, m, dir);
        else if (command == "analyze") cmd_analyze(cfg, m, dir);
        else cmd_export(cfg, m, dir);
        m.write(dir / "manifest.json");
        std::cout << (dir / "manifest.json").string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        emit_error("config", e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error("runtime", e.what());
        return 1;
    }
}

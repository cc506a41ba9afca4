#pragma once
// Run configuration: JSON documents addressed by flat dotted keys, a strict
// schema with unknown-key rejection, command-line overrides and the run
// manifest.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "compass/analysis.hpp"

namespace compass {

using json = nlohmann::json;

inline constexpr const char* version_string = "0.1.0";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SweepSettings {
    std::size_t samples = 5;        // first pool samples swept
    double beta_max = 5.0;
    std::size_t points = 21;        // odd, so the grid contains 0
    std::vector<double> targets{-20.0, -10.0, 0.0, 10.0, 20.0};  // percent area change
};

struct RunConfig {
    ExperimentConfig experiment{};
    SweepSettings sweep{};
    std::string output_dir;  // empty: COMPASS_OUT_DIR, then "compass_out"
    std::string params;      // optional saved parameters; skips training

    std::filesystem::path resolved_output_dir() const {
        if (!output_dir.empty()) return output_dir;
        if (const char* env = std::getenv("COMPASS_OUT_DIR"); env && *env) return env;
        return "compass_out";
    }
};

namespace detail {

struct Field {
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

[[noreturn]] inline void type_error(const std::string& key, const char* expected, const json& v) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got " + v.dump());
}

inline double as_double(const std::string& key, const json& v) {
    if (!v.is_number()) type_error(key, "a number", v);
    return v.get<double>();
}

inline std::size_t as_count(const std::string& key, const json& v) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) type_error(key, "a non-negative integer", v);
    return v.get<std::size_t>();
}

inline std::uint64_t as_seed(const std::string& key, const json& v) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        type_error(key, "a non-negative integer", v);
    return v.get<std::uint64_t>();
}

inline bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) type_error(key, "true or false", v);
    return v.get<bool>();
}

inline std::string as_string(const std::string& key, const json& v) {
    if (!v.is_string()) type_error(key, "a string", v);
    return v.get<std::string>();
}

template <typename T, typename Parse>
std::vector<T> as_list(const std::string& key, const json& v, Parse parse) {
    if (!v.is_array()) type_error(key, "a list", v);
    std::vector<T> out;
    for (const auto& e : v) out.push_back(parse(key, e));
    return out;
}

inline const char* weighting_name(WeightSource s) {
    switch (s) {
        case WeightSource::uniform: return "none";
        case WeightSource::class_oracle: return "class";
        case WeightSource::latent_classifier: return "latent";
        case WeightSource::jacobian_classifier: return "jacobian";
    }
    return "?";
}

template <typename Ref>
void add_double(std::map<std::string, Field>& m, const std::string& key, Ref ref) {
    m[key] = {[=](RunConfig& c, const json& v) { ref(c) = as_double(key, v); },
              [=](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
void add_count(std::map<std::string, Field>& m, const std::string& key, Ref ref) {
    m[key] = {[=](RunConfig& c, const json& v) { ref(c) = as_count(key, v); },
              [=](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

inline void add_search(std::map<std::string, Field>& m, const std::string& prefix,
                       SearchConfig ExperimentConfig::*member) {
    auto ref = [member](RunConfig& c) -> SearchConfig& { return c.experiment.*member; };
    m[prefix + ".method"] = {
        [=](RunConfig& c, const json& v) {
            const auto s = as_string(prefix + ".method", v);
            if (s == "binary") ref(c).method = SearchMethod::binary;
            else if (s == "linear") ref(c).method = SearchMethod::linear;
            else throw ConfigError("config key '" + prefix + ".method': expected binary or linear, got " + s);
        },
        [=](const RunConfig& c) { return json(to_string(ref(const_cast<RunConfig&>(c)).method)); }};
    add_double(m, prefix + ".beta_range", [=](RunConfig& c) -> double& { return ref(c).beta_range; });
    add_count(m, prefix + ".k_max", [=](RunConfig& c) -> std::size_t& { return ref(c).k_max; });
    add_double(m, prefix + ".beta_step", [=](RunConfig& c) -> double& { return ref(c).beta_step; });
}

inline void add_shift(std::map<std::string, Field>& m, ClassLabel label) {
    const std::string base = std::string("split.shift.") + to_string(label);
    for (bool cal : {true, false}) {
        const std::string key = base + (cal ? ".cal" : ".test");
        m[key] = {[=](RunConfig& c, const json& v) {
                      if (v.is_null()) {
                          c.experiment.split.shift.erase(label);
                          return;
                      }
                      auto& f = c.experiment.split.shift[label];
                      (cal ? f.cal : f.test) = as_double(key, v);
                  },
                  [=](const RunConfig& c) -> json {
                      const auto& shift = c.experiment.split.shift;
                      const auto it = shift.find(label);
                      if (it == shift.end()) return nullptr;
                      return cal ? it->second.cal : it->second.test;
                  }};
    }
}

inline const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> m;
        using C = RunConfig;
        add_count(m, "task.n_samples", [](C& c) -> std::size_t& { return c.experiment.n_samples; });
        add_count(m, "task.height", [](C& c) -> std::size_t& { return c.experiment.task.height; });
        add_count(m, "task.width", [](C& c) -> std::size_t& { return c.experiment.task.width; });
        add_double(m, "task.hard_fraction", [](C& c) -> double& { return c.experiment.task.hard_fraction; });
        add_double(m, "task.easy_radius_min", [](C& c) -> double& { return c.experiment.task.easy_radius.lo; });
        add_double(m, "task.easy_radius_max", [](C& c) -> double& { return c.experiment.task.easy_radius.hi; });
        add_double(m, "task.hard_axis_min", [](C& c) -> double& { return c.experiment.task.hard_semi_axis.lo; });
        add_double(m, "task.hard_axis_max", [](C& c) -> double& { return c.experiment.task.hard_semi_axis.hi; });
        add_double(m, "task.background", [](C& c) -> double& { return c.experiment.task.background; });
        add_double(m, "task.contrast", [](C& c) -> double& { return c.experiment.task.contrast; });
        add_double(m, "task.noise", [](C& c) -> double& { return c.experiment.task.noise; });
        add_double(m, "task.blur", [](C& c) -> double& { return c.experiment.task.blur; });

        add_double(m, "split.train", [](C& c) -> double& { return c.experiment.split.train; });
        add_double(m, "split.cal", [](C& c) -> double& { return c.experiment.split.cal; });
        add_double(m, "split.test", [](C& c) -> double& { return c.experiment.split.test; });
        add_shift(m, ClassLabel::easy);
        add_shift(m, ClassLabel::hard);

        add_count(m, "model.channels", [](C& c) -> std::size_t& { return c.experiment.channels; });
        add_double(m, "train.learning_rate", [](C& c) -> double& { return c.experiment.train.learning_rate; });
        add_count(m, "train.epochs", [](C& c) -> std::size_t& { return c.experiment.train.epochs; });
        add_double(m, "train.loss_threshold", [](C& c) -> double& { return c.experiment.train.loss_threshold; });
        add_count(m, "subspace.components", [](C& c) -> std::size_t& { return c.experiment.components; });

        m["methods"] = {[](C& c, const json& v) {
                            c.experiment.methods = as_list<Method>("methods", v, [](const std::string& k, const json& e) {
                                try {
                                    return method_from_string(as_string(k, e));
                                } catch (const std::invalid_argument& err) {
                                    throw ConfigError("config key 'methods': " + std::string(err.what()));
                                }
                            });
                        },
                        [](const C& c) {
                            json out = json::array();
                            for (auto mth : c.experiment.methods) out.push_back(to_string(mth));
                            return out;
                        }};
        m["alphas"] = {[](C& c, const json& v) { c.experiment.alphas = as_list<double>("alphas", v, as_double); },
                       [](const C& c) { return json(c.experiment.alphas); }};
        m["asymmetric"] = {[](C& c, const json& v) { c.experiment.asymmetric = as_bool("asymmetric", v); },
                           [](const C& c) { return json(c.experiment.asymmetric); }};
        add_double(m, "alpha_lo", [](C& c) -> double& { return c.experiment.alpha_lo; });
        add_double(m, "alpha_hi", [](C& c) -> double& { return c.experiment.alpha_hi; });
        add_count(m, "n_splits", [](C& c) -> std::size_t& { return c.experiment.n_splits; });
        m["seed"] = {[](C& c, const json& v) { c.experiment.seed = as_seed("seed", v); },
                     [](const C& c) { return json(c.experiment.seed); }};
        add_double(m, "max_failure_rate", [](C& c) -> double& { return c.experiment.max_failure_rate; });

        add_search(m, "search.latent", &ExperimentConfig::search_latent);
        add_search(m, "search.logits", &ExperimentConfig::search_logits);

        m["weighting.sources"] = {
            [](C& c, const json& v) {
                c.experiment.weightings =
                    as_list<WeightSource>("weighting.sources", v, [](const std::string& k, const json& e) {
                        try {
                            return weighting_from_string(as_string(k, e));
                        } catch (const std::invalid_argument& err) {
                            throw ConfigError("config key 'weighting.sources': " + std::string(err.what()));
                        }
                    });
            },
            [](const C& c) {
                json out = json::array();
                for (auto s : c.experiment.weightings) out.push_back(weighting_name(s));
                return out;
            }};
        add_double(m, "weighting.clip_min", [](C& c) -> double& { return c.experiment.ratio.clip_min; });
        add_double(m, "weighting.clip_max", [](C& c) -> double& { return c.experiment.ratio.clip_max; });
        add_double(m, "weighting.holdout_fraction", [](C& c) -> double& { return c.experiment.ratio.holdout_fraction; });
        add_double(m, "weighting.l2", [](C& c) -> double& { return c.experiment.ratio.logistic.l2; });
        add_double(m, "weighting.tolerance", [](C& c) -> double& { return c.experiment.ratio.logistic.tolerance; });
        add_count(m, "weighting.max_iterations",
                  [](C& c) -> std::size_t& { return c.experiment.ratio.logistic.max_iterations; });
        m["weighting.include_test_mass"] = {
            [](C& c, const json& v) {
                c.experiment.weighted_quantile.include_test_mass = as_bool("weighting.include_test_mass", v);
            },
            [](const C& c) { return json(c.experiment.weighted_quantile.include_test_mass); }};

        add_count(m, "sweep.samples", [](C& c) -> std::size_t& { return c.sweep.samples; });
        add_double(m, "sweep.beta_max", [](C& c) -> double& { return c.sweep.beta_max; });
        add_count(m, "sweep.points", [](C& c) -> std::size_t& { return c.sweep.points; });
        m["sweep.targets"] = {[](C& c, const json& v) { c.sweep.targets = as_list<double>("sweep.targets", v, as_double); },
                              [](const C& c) { return json(c.sweep.targets); }};

        m["output_dir"] = {[](C& c, const json& v) { c.output_dir = as_string("output_dir", v); },
                           [](const C& c) { return json(c.output_dir); }};
        m["params"] = {[](C& c, const json& v) { c.params = as_string("params", v); },
                       [](const C& c) { return json(c.params); }};
        return m;
    }();
    return fields;
}

inline void flatten_into(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
    if (node.is_object() && !node.empty()) {
        for (const auto& [k, v] : node.items()) flatten_into(v, prefix.empty() ? k : prefix + "." + k, out);
    } else {
        if (prefix.empty()) throw ConfigError("config must be a JSON object");
        out[prefix] = node;
    }
}

}  // namespace detail

/// Nested objects become dotted keys: {"task": {"noise": 0.1}} -> task.noise.
inline std::map<std::string, json> flatten(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    std::map<std::string, json> out;
    if (!doc.empty()) detail::flatten_into(doc, "", out);
    return out;
}

/// "key=value"; the value is parsed as JSON when possible, else taken as a string.
inline std::pair<std::string, json> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not of the form key=value");
    const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    return {key, value};
}

inline void validate(const RunConfig& c) {
    const auto& e = c.experiment;
    try {
        detail::validate_task(e.task);
        detail::validate_split(e.split);
    } catch (const std::invalid_argument& err) {
        throw ConfigError(err.what());
    }
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(e.n_samples >= 4, "task.n_samples must be at least 4");
    require(e.channels >= 1, "model.channels must be at least 1");
    require(e.components >= 1 && e.components <= e.channels, "subspace.components must lie in [1, model.channels]");
    require(e.train.learning_rate > 0, "train.learning_rate must be positive");
    require(!e.methods.empty(), "methods must not be empty");
    require(!e.alphas.empty(), "alphas must not be empty");
    for (double a : e.alphas) require(a > 0 && a < 1, "alphas must lie in (0, 1)");
    require(e.alpha_lo > 0 && e.alpha_hi > 0 && e.alpha_lo + e.alpha_hi < 1,
            "alpha_lo and alpha_hi must be positive with sum below 1");
    require(e.n_splits >= 1, "n_splits must be at least 1");
    require(e.max_failure_rate >= 0 && e.max_failure_rate <= 1, "max_failure_rate must lie in [0, 1]");
    for (const auto* s : {&e.search_latent, &e.search_logits}) {
        require(s->beta_range > 0, "search beta_range must be positive");
        require(s->k_max >= 1, "search k_max must be at least 1");
        require(s->beta_step >= 0, "search beta_step must be non-negative");
    }
    require(!e.weightings.empty(), "weighting.sources must not be empty");
    require(e.ratio.clip_min > 0 && e.ratio.clip_min < e.ratio.clip_max, "weighting clip bounds must satisfy 0 < min < max");
    require(e.ratio.holdout_fraction > 0 && e.ratio.holdout_fraction < 1, "weighting.holdout_fraction must lie in (0, 1)");
    require(e.ratio.logistic.l2 >= 0 && e.ratio.logistic.tolerance > 0, "weighting l2/tolerance out of range");
    require(c.sweep.points >= 3 && c.sweep.points % 2 == 1, "sweep.points must be odd and at least 3");
    require(c.sweep.beta_max > 0, "sweep.beta_max must be positive");
}

/// Applies flat entries over the defaults, rejecting unknown keys, then validates.
inline RunConfig config_from_entries(const std::map<std::string, json>& entries) {
    RunConfig c;
    const auto& fields = detail::schema();
    for (const auto& [key, value] : entries)
        if (fields.find(key) == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    // nulls last, so a null shift entry erases its class whatever the key order
    for (bool nulls : {false, true})
        for (const auto& [key, value] : entries)
            if (value.is_null() == nulls) fields.at(key).set(c, value);
    validate(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    std::map<std::string, json> entries;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
        entries = flatten(doc);
    }
    for (const auto& o : overrides) {
        auto [k, v] = parse_override(o);
        entries[k] = v;
    }
    return config_from_entries(entries);
}

/// Every schema key with its effective value, as a flat object.
inline json to_json(const RunConfig& c) {
    json out = json::object();
    for (const auto& [key, field] : detail::schema()) out[key] = field.get(c);
    return out;
}

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of the canonical config; the seed is part of it.
inline std::string config_hash(const RunConfig& c) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json(c).dump());
    return os.str();
}

struct Manifest {
    std::string command;
    RunConfig config;
    std::vector<std::string> outputs;
    json results = json::object();

    json to_json() const {
        const auto now = std::chrono::system_clock::now();
        return json{{"command", command},
                    {"version", version_string},
                    {"config_hash", config_hash(config)},
                    {"seed", config.experiment.seed},
                    {"config", compass::to_json(config)},
                    {"outputs", outputs},
                    {"results", results},
                    {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()}};
    }

    void write(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace compass

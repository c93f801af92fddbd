#pragma once

// Flat key=value configuration files. '#' starts a comment, blank lines are
// ignored, whitespace around keys and values is trimmed. Every key must be
// consumed by the reader; leftovers are reported as unknown.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "a2log/boundary.hpp"
#include "a2log/corpus.hpp"
#include "a2log/error.hpp"
#include "a2log/scorer.hpp"
#include "a2log/trainer.hpp"

namespace a2log {

class KeyValues {
public:
    static KeyValues parse(std::istream& in, const std::string& origin = "config")
    {
        KeyValues kv;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            const auto body = detail::trim(std::string_view(line).substr(0, hash));
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
            const std::string key(detail::trim(body.substr(0, eq)));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            kv.set(key, std::string(detail::trim(body.substr(eq + 1))), origin + ":" + std::to_string(lineno));
        }
        return kv;
    }

    static KeyValues load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config " + path);
        return parse(in, path);
    }

    /// Later assignments of the same key are rejected; use `override` to replace.
    void set(const std::string& key, std::string value, const std::string& where = "config")
    {
        if (!values_.emplace(key, std::move(value)).second)
            throw ConfigError(where + ": duplicate key '" + key + "'");
    }

    void override(const std::string& key, std::string value) { values_[key] = std::move(value); }

    /// Parses "key=value" as given on a command line.
    void override_assignment(std::string_view assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos || eq == 0)
            throw ConfigError("override must look like key=value: " + std::string(assignment));
        override(std::string(detail::trim(assignment.substr(0, eq))), std::string(detail::trim(assignment.substr(eq + 1))));
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback)
    {
        const auto* v = take(key);
        return v ? *v : fallback;
    }

    std::string require_string(const std::string& key)
    {
        const auto* v = take(key);
        if (!v) throw ConfigError("missing required key '" + key + "'");
        return *v;
    }

    template <class T>
    T get(const std::string& key, T fallback)
    {
        const auto* v = take(key);
        return v ? convert<T>(key, *v) : fallback;
    }

    /// Comma-separated list; empty items are skipped.
    std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback = {})
    {
        const auto* v = take(key);
        if (!v) return fallback;
        std::vector<std::string> out;
        std::size_t start = 0;
        const std::string& s = *v;
        for (std::size_t i = 0; i <= s.size(); ++i) {
            if (i == s.size() || s[i] == ',') {
                const auto item = detail::trim(std::string_view(s).substr(start, i - start));
                if (!item.empty()) out.emplace_back(item);
                start = i + 1;
            }
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback)
    {
        if (!has(key)) {
            take(key);
            return fallback;
        }
        std::vector<double> out;
        for (const auto& item : get_list(key)) out.push_back(convert<double>(key, item));
        return out;
    }

    void reject_unknown() const
    {
        std::string unknown;
        for (const auto& [k, v] : values_)
            if (!consumed_.contains(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
    }

private:
    const std::string* take(const std::string& key)
    {
        consumed_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }

    template <class T>
    static T convert(const std::string& key, const std::string& text)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes") return true;
            if (text == "false" || text == "0" || text == "no") return false;
            throw ConfigError("key '" + key + "': expected a boolean, got '" + text + "'");
        } else if constexpr (std::is_floating_point_v<T>) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(text, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != text.size())
                throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
            return static_cast<T>(v);
        } else {
            T v{};
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size())
                throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + text + "'");
            return v;
        }
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

/// Shortest decimal text that reads back to the same double.
inline std::string exact_number(double v)
{
    char buf[32];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

/// Everything needed to train and calibrate one model. `seed` is the master
/// seed; the per-stage seeds below are derived from it.
struct RunConfig {
    EncoderConfig encoder;
    TrainConfig train;
    AugmentationConfig augmentation;
    BoundaryConfig boundary;
    std::size_t stabilization_per_source = 60000;
    std::size_t threads = 1;
    std::uint64_t seed = 0;

    void validate() const
    {
        encoder.validate();
        train.validate();
        boundary.validate();
        if (augmentation.alpha == 0) throw ConfigError("alpha must be at least 1");
        if (augmentation.repetitions == 0) throw ConfigError("augmentation_repetitions must be at least 1");
        if (stabilization_per_source == 0) throw ConfigError("stab_per_source must be positive");
        if (threads == 0) throw ConfigError("threads must be positive");
    }
};

/// Seeds of every randomized stage of one run.
struct StageSeeds {
    std::uint64_t master = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
    std::uint64_t stabilization = 0;
    std::uint64_t augmentation = 0;
};

inline StageSeeds stage_seeds(std::uint64_t master)
{
    return {master, derive_seed(master, "init"), derive_seed(master, "train"), derive_seed(master, "stabilization"),
            derive_seed(master, "augmentation")};
}

/// Copies the derived stage seeds into the component configs.
inline void apply_seeds(RunConfig& cfg)
{
    const auto s = stage_seeds(cfg.seed);
    cfg.encoder.seed = s.init;
    cfg.train.seed = s.train;
    cfg.augmentation.seed = s.augmentation;
}

/// Reads the run keys from `kv`, starting from `base`. Unknown keys are not
/// checked here so callers can read further sections from the same file.
inline RunConfig read_run_config(KeyValues& kv, RunConfig base = {})
{
    RunConfig c = base;
    c.encoder.u = kv.get<std::size_t>("u", c.encoder.u);
    c.encoder.d = kv.get<std::size_t>("d", c.encoder.d);
    c.encoder.ff_hidden = kv.get<std::size_t>("ff_hidden", c.encoder.ff_hidden);
    c.encoder.n_layers = kv.get<std::size_t>("n_layers", c.encoder.n_layers);
    c.encoder.n_heads = kv.get<std::size_t>("n_heads", c.encoder.n_heads);
    c.encoder.dropout = kv.get<double>("dropout", c.encoder.dropout);

    c.train.batch_size = kv.get<std::size_t>("batch_size", c.train.batch_size);
    c.train.learning_rate = kv.get<double>("learning_rate", c.train.learning_rate);
    c.train.weight_decay = kv.get<double>("weight_decay", c.train.weight_decay);
    c.train.target_avg_loss = kv.get<double>("target_avg_loss", c.train.target_avg_loss);
    c.train.max_epochs = kv.get<std::size_t>("max_epochs", c.train.max_epochs);
    c.train.beta1 = kv.get<double>("adam_beta1", c.train.beta1);
    c.train.beta2 = kv.get<double>("adam_beta2", c.train.beta2);
    c.train.adam_eps = kv.get<double>("adam_eps", c.train.adam_eps);
    c.train.decoupled_weight_decay = kv.get<bool>("decoupled_weight_decay", c.train.decoupled_weight_decay);

    c.augmentation.alpha = kv.get<std::size_t>("alpha", c.augmentation.alpha);
    c.augmentation.repetitions = kv.get<std::size_t>("augmentation_repetitions", c.augmentation.repetitions);
    c.boundary.p = kv.get<double>("p", c.boundary.p);
    c.boundary.beta = kv.get<double>("beta", c.boundary.beta);

    c.stabilization_per_source = kv.get<std::size_t>("stab_per_source", c.stabilization_per_source);
    c.threads = kv.get<std::size_t>("threads", c.threads);
    c.seed = kv.get<std::uint64_t>("seed", c.seed);
    apply_seeds(c);
    c.validate();
    return c;
}

/// The key=value form of `c`, readable by read_run_config.
inline std::map<std::string, std::string> run_config_entries(const RunConfig& c)
{
    return {
        {"u", std::to_string(c.encoder.u)},
        {"d", std::to_string(c.encoder.d)},
        {"ff_hidden", std::to_string(c.encoder.ff_hidden)},
        {"n_layers", std::to_string(c.encoder.n_layers)},
        {"n_heads", std::to_string(c.encoder.n_heads)},
        {"dropout", exact_number(c.encoder.dropout)},
        {"batch_size", std::to_string(c.train.batch_size)},
        {"learning_rate", exact_number(c.train.learning_rate)},
        {"weight_decay", exact_number(c.train.weight_decay)},
        {"target_avg_loss", exact_number(c.train.target_avg_loss)},
        {"max_epochs", std::to_string(c.train.max_epochs)},
        {"adam_beta1", exact_number(c.train.beta1)},
        {"adam_beta2", exact_number(c.train.beta2)},
        {"adam_eps", exact_number(c.train.adam_eps)},
        {"decoupled_weight_decay", c.train.decoupled_weight_decay ? "true" : "false"},
        {"alpha", std::to_string(c.augmentation.alpha)},
        {"augmentation_repetitions", std::to_string(c.augmentation.repetitions)},
        {"p", exact_number(c.boundary.p)},
        {"beta", exact_number(c.boundary.beta)},
        {"stab_per_source", std::to_string(c.stabilization_per_source)},
        {"threads", std::to_string(c.threads)},
        {"seed", std::to_string(c.seed)},
    };
}

inline DatasetFormat parse_dataset_format(const std::string& s)
{
    if (s == "labeled-hpc" || s == "labeled") return DatasetFormat::labeled_hpc;
    if (s == "plain-normal" || s == "plain") return DatasetFormat::plain_normal;
    throw ConfigError("unknown dataset format: " + s);
}

} // namespace a2log

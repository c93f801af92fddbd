#pragma once

// Command-line front end. Every subcommand that writes artifacts also writes
// a manifest with the effective configuration, input and output hashes, the
// master seed and timestamps. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "a2log/boundary.hpp"
#include "a2log/checkpoint.hpp"
#include "a2log/config.hpp"
#include "a2log/corpus.hpp"
#include "a2log/evaluator.hpp"
#include "a2log/pipeline.hpp"

namespace a2log {

inline constexpr std::string_view tool_version = "0.1.0";

/// Invalid flags or flag combinations; mapped to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifests

inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

class Manifest {
public:
    explicit Manifest(std::string command) : started_(utc_timestamp())
    {
        doc_["command"] = std::move(command);
        doc_["tool"] = "a2log";
        doc_["tool_version"] = tool_version;
        doc_["inputs"] = nlohmann::json::array();
        doc_["outputs"] = nlohmann::json::array();
    }

    void config(const std::map<std::string, std::string>& entries) { doc_["config"] = entries; }
    void seed(std::uint64_t s) { doc_["master_seed"] = s; }
    void set(const std::string& key, nlohmann::json value) { doc_[key] = std::move(value); }

    void input(const std::string& path) { doc_["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
    void output(const std::string& path)
    {
        doc_["outputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}});
    }

    void write(const std::string& path)
    {
        doc_["started_at"] = started_;
        doc_["finished_at"] = utc_timestamp();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path);
        out << doc_.dump(2) << '\n';
    }

private:
    nlohmann::json doc_;
    std::string started_;
};

inline std::string manifest_path_for(const std::string& artifact) { return artifact + ".manifest.json"; }

inline void ensure_directory(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

inline LabeledDataset load_corpus(const std::string& path, DatasetFormat format, std::size_t max_lines,
                                  std::ostream& log)
{
    auto r = load_dataset(path, format, {max_lines});
    if (r.skipped > 0) log << path << ": skipped " << r.skipped << " malformed line(s)\n";
    return std::move(r.dataset);
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    SynthConfig synth;
    std::string out;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& log)
{
    Manifest m("synth");
    if (o.out.empty()) throw UsageError("--out is required");
    const auto ds = generate_synthetic_corpus(o.synth);
    if (const auto parent = fs::path(o.out).parent_path(); !parent.empty()) ensure_directory(parent.string());
    {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw IoError("cannot write " + o.out);
        write_labeled(out, ds);
    }
    m.config({{"templates", std::to_string(o.synth.n_templates)},
              {"anomaly_templates", std::to_string(o.synth.n_anomaly_templates)},
              {"lines", std::to_string(o.synth.n_lines)},
              {"rate", exact_number(o.synth.anomaly_rate)},
              {"name", o.synth.name}});
    m.seed(o.synth.seed);
    m.output(o.out);
    m.write(manifest_path_for(o.out));
    log << "wrote " << ds.records.size() << " lines (" << ds.count(Label::abnormal) << " abnormal) to " << o.out
        << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string data;
    std::string format = "labeled-hpc";
    std::vector<std::string> stab;
    std::string stab_format = "labeled-hpc";
    std::size_t max_lines = 0;
    double split = 0.0;
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
};

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                                 std::optional<std::uint64_t> seed, RunConfig base = {})
{
    KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
    for (const auto& o : overrides) kv.override_assignment(o);
    if (seed) kv.override("seed", std::to_string(*seed));
    auto cfg = read_run_config(kv, base);
    kv.reject_unknown();
    return cfg;
}

inline void check_split(double split)
{
    if (!(split > 0.0 && split < 1.0)) throw UsageError("--split must lie strictly between 0 and 1");
}

inline int cmd_train(const TrainOptions& o, std::ostream& log)
{
    Manifest m("train");
    check_split(o.split);
    if (o.stab.empty()) throw UsageError("at least one --stab corpus is required");
    const auto cfg = load_run_config(o.config, o.overrides, o.seed);

    const auto target = load_corpus(o.data, parse_dataset_format(o.format), o.max_lines, log);
    std::vector<LabeledDataset> externals;
    for (const auto& path : o.stab) externals.push_back(load_corpus(path, parse_dataset_format(o.stab_format), 0, log));
    const auto parts = chronological_split(target, {o.split, cfg.seed});
    log << "training on " << parts.train.records.size() << " normal records\n";

    const auto model = train_model(parts.train, externals, cfg, [&](std::size_t epoch, double loss) {
        log << "epoch " << epoch << " average loss " << loss << '\n';
    });

    ensure_directory(o.out);
    const auto dir = fs::path(o.out);
    const auto ckpt = (dir / "model.a2lg").string();
    const auto vocab_path = (dir / "vocab.txt").string();
    const auto report_path = (dir / "train_report.json").string();
    save_checkpoint(ckpt, model.params, model.vocab);
    {
        std::ofstream out(vocab_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + vocab_path);
        model.vocab.save(out);
    }
    auto report = to_json(model.report);
    report["n_train"] = parts.train.records.size();
    report["stabilization_sources"] = model.stabilization_sources;
    report["vocab_size"] = model.vocab.size();
    write_text(report_path, report.dump(2) + "\n");

    m.config(run_config_entries(cfg));
    m.seed(cfg.seed);
    m.set("split", o.split);
    m.set("seeds", to_json(stage_seeds(cfg.seed)));
    m.input(o.data);
    for (const auto& s : o.stab) m.input(s);
    if (!o.config.empty()) m.input(o.config);
    m.output(ckpt);
    m.output(vocab_path);
    m.output(report_path);
    m.write((dir / "manifest.json").string());
    log << "stopped after " << model.report.epochs_run << " epoch(s): " << to_string(model.report.stop_reason)
        << "; checkpoint " << ckpt << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
    std::string checkpoint;
    std::string data;
    std::string format = "labeled-hpc";
    std::size_t max_lines = 0;
    double split = 0.0;
    std::string method = "a2log";
    std::size_t alpha = 1;
    std::size_t repetitions = 1;
    double p = 0.95;
    double beta = 2.5;
    std::uint64_t seed = 0;
    std::string test;
    std::size_t threads = 1;
    std::string out;
};

inline int cmd_calibrate(const CalibrateOptions& o, std::ostream& log)
{
    Manifest m("calibrate");
    BoundaryMethod method;
    try {
        method = parse_boundary_method(o.method);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (!(o.p > 0.0 && o.p <= 1.0)) throw UsageError("--p must lie in (0, 1]");
    if (!(o.beta > 0.0)) throw UsageError("--beta must be positive");
    if (o.alpha == 0) throw UsageError("--alpha must be at least 1");
    if (method == BoundaryMethod::best_oracle && o.test.empty())
        throw UsageError("--method best-oracle needs labeled test data (--test)");
    if (method != BoundaryMethod::best_oracle) {
        if (o.data.empty()) throw UsageError("--data is required for " + o.method);
        check_split(o.split);
    }

    const auto ck = load_checkpoint(o.checkpoint);
    const auto fingerprint = sha256_file(o.checkpoint);
    const auto format = parse_dataset_format(o.format);
    DecisionBoundary b;
    if (method == BoundaryMethod::best_oracle) {
        const auto test = load_corpus(o.test, format, o.max_lines, log);
        const auto scores = score_dataset(test, ck.params, ck.vocab, o.threads);
        const auto best = best_oracle_boundary(scores, labels_of(test));
        b = best.boundary;
        log << "best-oracle F1 on " << o.test << ": " << best.f1 << '\n';
        m.input(o.test);
    } else {
        const auto target = load_corpus(o.data, format, o.max_lines, log);
        const auto parts = chronological_split(target, {o.split, o.seed});
        const auto train = encode_dataset(parts.train, ck.vocab, ck.params.config.u);
        if (method == BoundaryMethod::a2log) {
            AugmentationConfig aug{o.alpha, stage_seeds(o.seed).augmentation, o.repetitions};
            b = calibrate_a2log(ck.params, train, aug, {o.p, o.beta}, o.threads);
        } else {
            b = calibrate_three_sigma(ck.params, train, o.threads);
        }
        m.input(o.data);
    }
    b.checkpoint = fingerprint;

    if (const auto parent = fs::path(o.out).parent_path(); !parent.empty()) ensure_directory(parent.string());
    {
        std::ofstream out(o.out);
        if (!out) throw IoError("cannot write " + o.out);
        save_boundary(out, b);
    }
    m.config({{"method", to_string(method)},
              {"alpha", std::to_string(o.alpha)},
              {"augmentation_repetitions", std::to_string(o.repetitions)},
              {"p", exact_number(o.p)},
              {"beta", exact_number(o.beta)},
              {"split", exact_number(o.split)}});
    m.seed(o.seed);
    m.input(o.checkpoint);
    m.output(o.out);
    m.write(manifest_path_for(o.out));
    log << to_string(method) << " epsilon = " << exact_number(b.epsilon) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    std::string checkpoint;
    std::string boundary;
    std::string test;
    std::string data;
    double split = 0.0;
    std::string format = "labeled-hpc";
    std::size_t max_lines = 0;
    std::size_t threads = 1;
    std::string out;
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& log)
{
    Manifest m("evaluate");
    if (o.test.empty() == o.data.empty()) throw UsageError("give either --test or --data with --split");
    if (!o.data.empty()) check_split(o.split);

    const auto ck = load_checkpoint(o.checkpoint);
    const auto fingerprint = sha256_file(o.checkpoint);
    DecisionBoundary b;
    {
        std::ifstream in(o.boundary);
        if (!in) throw IoError("cannot read " + o.boundary);
        b = load_boundary(in);
    }
    if (b.checkpoint != fingerprint)
        throw Error("fingerprint mismatch: boundary " + o.boundary + " was calibrated for checkpoint " +
                    b.checkpoint + ", not " + fingerprint);

    const auto format = parse_dataset_format(o.format);
    LabeledDataset test;
    if (!o.test.empty()) {
        test = load_corpus(o.test, format, o.max_lines, log);
    } else {
        test = chronological_split(load_corpus(o.data, format, o.max_lines, log), {o.split, 0}).test;
    }
    const auto classified = classify_dataset(test, ck.params, ck.vocab, b, o.threads);
    const auto report = confusion_and_metrics(classified);

    nlohmann::json doc{{"checkpoint", fingerprint},
                       {"boundary", to_json(b)},
                       {"n", classified.size()},
                       {"counts", to_json(report.counts)},
                       {"metrics", to_json(report.metrics)}};
    if (!o.data.empty()) doc["split"] = o.split;
    if (const auto parent = fs::path(o.out).parent_path(); !parent.empty()) ensure_directory(parent.string());
    write_text(o.out, doc.dump(2) + "\n");

    m.config({{"split", exact_number(o.split)}});
    m.input(o.checkpoint);
    m.input(o.boundary);
    m.input(o.test.empty() ? o.data : o.test);
    m.output(o.out);
    m.write(manifest_path_for(o.out));
    log << "precision " << report.metrics.precision << " recall " << report.metrics.recall << " F1 "
        << report.metrics.f1 << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentOptions {
    std::string spec;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet = false;
};

struct ExperimentInputs {
    ExperimentSpec spec;
    std::string target_path;
    DatasetFormat target_format = DatasetFormat::labeled_hpc;
    std::size_t max_lines = 0;
    std::vector<std::string> stab_paths;
    DatasetFormat stab_format = DatasetFormat::labeled_hpc;
    std::map<std::string, std::string> snapshot;
};

/// Reads an experiment spec: the run keys plus target, stab, splits,
/// methods and repetitions. Relative paths are resolved against the spec
/// file's directory.
inline ExperimentInputs read_experiment_spec(const std::string& path, const std::vector<std::string>& overrides,
                                             std::optional<std::uint64_t> seed)
{
    KeyValues kv = KeyValues::load(path);
    for (const auto& o : overrides) kv.override_assignment(o);
    if (seed) kv.override("seed", std::to_string(*seed));
    const auto snapshot = kv.entries();
    const auto base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };

    ExperimentInputs in;
    in.target_path = resolve(kv.require_string("target"));
    in.target_format = parse_dataset_format(kv.get_string("target_format", "labeled-hpc"));
    in.max_lines = kv.get<std::size_t>("max_lines", 0);
    for (const auto& s : kv.get_list("stab")) in.stab_paths.push_back(resolve(s));
    if (in.stab_paths.empty()) throw ConfigError("experiment spec needs at least one 'stab' corpus");
    in.stab_format = parse_dataset_format(kv.get_string("stab_format", "labeled-hpc"));
    in.spec.splits = kv.get_double_list("splits", in.spec.splits);
    const auto methods = kv.get_list("methods");
    if (!methods.empty()) {
        in.spec.methods.clear();
        for (const auto& name : methods) in.spec.methods.push_back(parse_boundary_method(name));
    }
    in.spec.repetitions = kv.get<std::size_t>("repetitions", in.spec.repetitions);
    in.spec.run = read_run_config(kv);
    kv.reject_unknown();
    in.spec.target_name = in.target_path;
    in.spec.validate();
    in.snapshot = snapshot;
    return in;
}

inline int cmd_experiment(const ExperimentOptions& o, std::ostream& log)
{
    Manifest m("experiment");
    auto in = read_experiment_spec(o.spec, o.overrides, o.seed);
    const auto target = load_corpus(in.target_path, in.target_format, in.max_lines, log);
    std::vector<LabeledDataset> externals;
    for (const auto& p : in.stab_paths) externals.push_back(load_corpus(p, in.stab_format, 0, log));

    const auto result = run_experiment(in.spec, target, externals, [&](const std::string& msg) {
        if (!o.quiet) log << msg << '\n';
    });

    ensure_directory(o.out);
    const auto dir = fs::path(o.out);
    const auto json_path = (dir / "results.json").string();
    const auto csv_path = (dir / "results.csv").string();
    const auto summary_path = (dir / "summary.csv").string();
    write_text(json_path, experiment_json(in.spec, result).dump(2) + "\n");
    {
        std::ostringstream csv;
        write_results_csv(csv, result);
        write_text(csv_path, csv.str());
    }
    {
        std::ostringstream csv;
        write_summary_csv(csv, result.summary);
        write_text(summary_path, csv.str());
    }

    m.config(in.snapshot);
    m.seed(in.spec.run.seed);
    m.input(o.spec);
    m.input(in.target_path);
    for (const auto& p : in.stab_paths) m.input(p);
    m.output(json_path);
    m.output(csv_path);
    m.output(summary_path);
    m.write((dir / "manifest.json").string());

    std::size_t failed = 0;
    for (const auto& c : result.cells) failed += !c.ok;
    log << result.cells.size() << " cells, " << failed << " failed; results in " << o.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
    std::string results;
    std::string plot;
};

struct ReportRow {
    double split = 0.0;
    std::string method;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t repetition = 0;
    bool present = false;
};

/// Best-of-repetitions F1 per split and method from a results table.
inline std::vector<ReportRow> best_rows_from_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != results_csv_header) throw FormatError("not an a2log results table");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream s(line);
        std::string item;
        while (std::getline(s, item, ',')) f.push_back(item);
        if (f.size() < 12) throw FormatError("short results row: " + line);
        if (f[3] != "ok") continue;
        ReportRow r{std::stod(f[0]), f[2], std::stod(f[11]), std::stod(f[9]), std::stod(f[10]), std::stoul(f[1]), true};
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const ReportRow& x) { return x.split == r.split && x.method == r.method; });
        if (it == rows.end())
            rows.push_back(r);
        else if (r.f1 > it->f1)
            *it = r;
    }
    return rows;
}

inline int cmd_report(const ReportOptions& o, std::ostream& out)
{
    std::ifstream in(o.results);
    if (!in) throw IoError("cannot read " + o.results);
    const auto rows = best_rows_from_csv(in);
    std::vector<double> splits;
    std::vector<std::string> methods;
    for (const auto& r : rows) {
        if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    }
    auto cell = [&](double split, const std::string& method) -> const ReportRow* {
        for (const auto& r : rows)
            if (r.split == split && r.method == method) return &r;
        return nullptr;
    };

    out << "best F1 per split (precision / recall)\n";
    out << std::left << std::setw(8) << "split";
    for (const auto& m : methods) out << std::setw(26) << m;
    out << '\n';
    for (double s : splits) {
        out << std::setw(8) << exact_number(s);
        for (const auto& m : methods) {
            std::ostringstream c;
            c << std::fixed << std::setprecision(3);
            if (const auto* r = cell(s, m))
                c << r->f1 << " (" << r->precision << " / " << r->recall << ")";
            else
                c << "-";
            out << std::setw(26) << c.str();
        }
        out << '\n';
    }

    if (!o.plot.empty()) {
        // Whitespace-separated columns for gnuplot and similar tools.
        std::ostringstream dat;
        dat << "# split";
        for (const auto& m : methods) dat << ' ' << m;
        dat << '\n';
        for (double s : splits) {
            dat << exact_number(s);
            for (const auto& m : methods) {
                const auto* r = cell(s, m);
                dat << ' ' << (r ? exact_number(r->f1) : std::string("NaN"));
            }
            dat << '\n';
        }
        write_text(o.plot, dat.str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses `args` (without the program name) and runs the chosen command.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"A2Log: unsupervised log anomaly detection", "a2log"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));

    auto open_unit = CLI::Validator(
        [](std::string& s) {
            double v = 0.0;
            try {
                v = std::stod(s);
            } catch (const std::exception&) {
                return std::string("not a number: ") + s;
            }
            return v > 0.0 && v < 1.0 ? std::string() : std::string("must lie strictly between 0 and 1");
        },
        "(0,1)");

    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    c_synth->add_option("--templates", synth.synth.n_templates, "normal templates")->capture_default_str();
    c_synth->add_option("--anomaly-templates", synth.synth.n_anomaly_templates, "anomaly templates")
        ->capture_default_str();
    c_synth->add_option("--lines", synth.synth.n_lines, "number of lines")->required();
    c_synth->add_option("--rate", synth.synth.anomaly_rate, "anomaly rate")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    c_synth->add_option("--seed", synth.synth.seed, "generator seed")->capture_default_str();
    c_synth->add_option("--name", synth.synth.name, "corpus name")->capture_default_str();
    c_synth->add_option("--out", synth.out, "output file")->required();

    TrainOptions train;
    std::uint64_t train_seed = 0;
    auto* c_train = app.add_subcommand("train", "train a scorer");
    c_train->add_option("--data", train.data, "target corpus")->required()->check(CLI::ExistingFile);
    c_train->add_option("--format", train.format, "labeled-hpc or plain-normal")->capture_default_str();
    c_train->add_option("--stab", train.stab, "stabilization corpus (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    c_train->add_option("--stab-format", train.stab_format, "format of stabilization corpora")
        ->capture_default_str();
    c_train->add_option("--max-lines", train.max_lines, "read at most this many target lines (0 = all)");
    c_train->add_option("--split", train.split, "fraction of normal records used for training")
        ->required()
        ->check(open_unit);
    c_train->add_option("--config", train.config, "key=value config file")->check(CLI::ExistingFile);
    c_train->add_option("--set", train.overrides, "override a config key (key=value)");
    auto* train_seed_opt = c_train->add_option("--seed", train_seed, "master seed");
    c_train->add_option("--out", train.out, "output directory")->required();

    CalibrateOptions cal;
    auto* c_cal = app.add_subcommand("calibrate", "compute a decision boundary");
    c_cal->add_option("--checkpoint", cal.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
    c_cal->add_option("--data", cal.data, "target corpus the model was trained on")->check(CLI::ExistingFile);
    c_cal->add_option("--format", cal.format, "labeled-hpc or plain-normal")->capture_default_str();
    c_cal->add_option("--max-lines", cal.max_lines, "read at most this many lines (0 = all)");
    c_cal->add_option("--split", cal.split, "training fraction used for the model")->check(open_unit);
    c_cal->add_option("--method", cal.method, "a2log, three-sigma or best-oracle")->capture_default_str();
    c_cal->add_option("--alpha", cal.alpha, "tokens masked per sequence")->capture_default_str();
    c_cal->add_option("--augmentations", cal.repetitions, "augmented variants per sequence")
        ->capture_default_str();
    c_cal->add_option("--p", cal.p, "percentile in (0,1]")->capture_default_str();
    c_cal->add_option("--beta", cal.beta, "percentile multiplier")->capture_default_str();
    c_cal->add_option("--seed", cal.seed, "master seed")->capture_default_str();
    c_cal->add_option("--test", cal.test, "labeled test data (best-oracle only)")->check(CLI::ExistingFile);
    c_cal->add_option("--threads", cal.threads, "scoring threads")->capture_default_str();
    c_cal->add_option("--out", cal.out, "boundary record")->required();

    EvaluateOptions ev;
    auto* c_ev = app.add_subcommand("evaluate", "apply a boundary to labeled test data");
    c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--boundary", ev.boundary, "boundary record")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--test", ev.test, "labeled test corpus")->check(CLI::ExistingFile);
    c_ev->add_option("--data", ev.data, "target corpus; its test split is evaluated")->check(CLI::ExistingFile);
    c_ev->add_option("--split", ev.split, "training fraction defining the test split")->check(open_unit);
    c_ev->add_option("--format", ev.format, "labeled-hpc or plain-normal")->capture_default_str();
    c_ev->add_option("--max-lines", ev.max_lines, "read at most this many lines (0 = all)");
    c_ev->add_option("--threads", ev.threads, "scoring threads")->capture_default_str();
    c_ev->add_option("--out", ev.out, "metrics document (JSON)")->required();

    ExperimentOptions ex;
    std::uint64_t ex_seed = 0;
    auto* c_ex = app.add_subcommand("experiment", "run the split protocol for all boundary methods");
    c_ex->add_option("--spec", ex.spec, "experiment spec (key=value)")->required()->check(CLI::ExistingFile);
    c_ex->add_option("--set", ex.overrides, "override a spec key (key=value)");
    auto* ex_seed_opt = c_ex->add_option("--seed", ex_seed, "master seed");
    c_ex->add_option("--out", ex.out, "output directory")->required();
    c_ex->add_flag("--quiet", ex.quiet, "suppress progress output");

    ReportOptions rep;
    auto* c_rep = app.add_subcommand("report", "format a results table");
    c_rep->add_option("--results", rep.results, "results.csv from experiment")->required()->check(CLI::ExistingFile);
    c_rep->add_option("--plot", rep.plot, "write plot-ready columns to this file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << tool_version << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
            err << "run 'a2log " << sub->get_name() << " --help' for usage\n";
        return 2;
    }

    try {
        if (c_synth->parsed()) return cmd_synth(synth, err);
        if (c_train->parsed()) {
            if (train_seed_opt->count() > 0) train.seed = train_seed;
            return cmd_train(train, err);
        }
        if (c_cal->parsed()) return cmd_calibrate(cal, err);
        if (c_ev->parsed()) return cmd_evaluate(ev, err);
        if (c_ex->parsed()) {
            if (ex_seed_opt->count() > 0) ex.seed = ex_seed;
            return cmd_experiment(ex, err);
        }
        if (c_rep->parsed()) return cmd_report(rep, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace a2log

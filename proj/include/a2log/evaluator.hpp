#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2log/boundary.hpp"
#include "a2log/config.hpp"
#include "a2log/corpus.hpp"
#include "a2log/metrics.hpp"
#include "a2log/pipeline.hpp"
#include "a2log/scorer.hpp"
#include "a2log/tokenizer.hpp"

namespace a2log {

struct Classified {
    int label = 0;
    int prediction = 0;
    double score = 0.0;
};

/// Eval-mode scores of every record, in order. OOV tokens map to [MASK].
inline std::vector<double> score_dataset(const LabeledDataset& ds, const ModelParameters& params,
                                         const Vocabulary& vocab, std::size_t threads = 1)
{
    return score_sequences(params, id_lists(encode_dataset(ds, vocab, params.config.u)), threads);
}

inline std::vector<Classified> classify_scores(std::span<const double> scores, std::span<const int> labels,
                                               const DecisionBoundary& b)
{
    if (scores.size() != labels.size()) throw ConfigError("scores and labels differ in length");
    std::vector<Classified> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {labels[i], decide(scores[i], b), scores[i]};
    return out;
}

inline std::vector<int> labels_of(const LabeledDataset& ds)
{
    std::vector<int> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(r.label == Label::abnormal ? 1 : 0);
    return out;
}

inline std::vector<Classified> classify_dataset(const LabeledDataset& test, const ModelParameters& params,
                                                const Vocabulary& vocab, const DecisionBoundary& b,
                                                std::size_t threads = 1)
{
    const auto scores = score_dataset(test, params, vocab, threads);
    return classify_scores(scores, labels_of(test), b);
}

struct MetricsReport {
    ConfusionCounts counts;
    Metrics metrics;
};

inline MetricsReport confusion_and_metrics(std::span<const Classified> pairs)
{
    if (pairs.empty()) throw ConfigError("metrics of an empty test set are undefined");
    MetricsReport r;
    std::vector<int> labels, predictions;
    labels.reserve(pairs.size());
    predictions.reserve(pairs.size());
    for (const auto& p : pairs) {
        labels.push_back(p.label);
        predictions.push_back(p.prediction);
    }
    r.counts = count_confusion(labels, predictions);
    r.metrics = metrics_from_counts(r.counts);
    return r;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSpec {
    std::string target_name = "target";
    std::vector<double> splits = {0.1, 0.2, 0.4, 0.6};
    std::vector<BoundaryMethod> methods = {BoundaryMethod::a2log, BoundaryMethod::three_sigma,
                                           BoundaryMethod::best_oracle};
    std::size_t repetitions = 3;
    RunConfig run; // run.seed is the master seed

    void validate() const
    {
        run.validate();
        if (repetitions == 0) throw ConfigError("repetitions must be at least 1");
        if (splits.empty()) throw ConfigError("experiment needs at least one split");
        for (double f : splits)
            if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
        if (methods.empty()) throw ConfigError("experiment needs at least one boundary method");
    }
};

/// Master seed of repetition `rep`; shared by every split.
inline std::uint64_t repetition_seed(std::uint64_t master, std::size_t rep)
{
    return derive_seed(derive_seed(master, "repetition"), rep);
}

/// One trained model: a (split, repetition) pair.
struct RunRecord {
    double split = 0.0;
    std::size_t repetition = 0;
    StageSeeds seeds;
    bool ok = false;
    std::string error;
    TrainReport report;
    std::size_t n_train = 0;
    std::size_t n_stab = 0;
    std::size_t n_test = 0;
    std::size_t vocab_size = 0;
    double mean_train_score = 0.0;
    double mean_augmented_score = 0.0;
    double train_seconds = 0.0;
    double evaluate_seconds = 0.0;
};

struct CellResult {
    double split = 0.0;
    std::size_t repetition = 0;
    BoundaryMethod method = BoundaryMethod::a2log;
    bool ok = false;
    std::string error;
    DecisionBoundary boundary;
    ConfusionCounts counts;
    Metrics metrics;
    std::uint64_t seed = 0;
};

struct SummaryRow {
    double split = 0.0;
    BoundaryMethod method = BoundaryMethod::a2log;
    std::size_t n_ok = 0;
    std::size_t best_repetition = 0;
    double epsilon = 0.0;
    Metrics best;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;
};

struct ExperimentResult {
    std::vector<RunRecord> runs;
    std::vector<CellResult> cells;
    std::vector<SummaryRow> summary;

    const SummaryRow* find(double split, BoundaryMethod m) const
    {
        for (const auto& row : summary)
            if (row.split == split && row.method == m) return &row;
        return nullptr;
    }
};

/// Best repetition by F1 (first one wins ties) plus mean and population
/// standard deviation of F1 over the successful repetitions.
inline std::vector<SummaryRow> summarize(const ExperimentSpec& spec, std::span<const CellResult> cells)
{
    std::vector<SummaryRow> out;
    for (double split : spec.splits) {
        for (auto m : spec.methods) {
            SummaryRow row;
            row.split = split;
            row.method = m;
            std::vector<double> f1s;
            for (const auto& c : cells) {
                if (c.split != split || c.method != m || !c.ok) continue;
                if (f1s.empty() || c.metrics.f1 > row.best.f1) {
                    row.best = c.metrics;
                    row.best_repetition = c.repetition;
                    row.epsilon = c.boundary.epsilon;
                }
                f1s.push_back(c.metrics.f1);
            }
            row.n_ok = f1s.size();
            if (!f1s.empty()) {
                row.mean_f1 = mean_of(f1s);
                double ss = 0.0;
                for (double f : f1s) ss += (f - row.mean_f1) * (f - row.mean_f1);
                row.std_f1 = std::sqrt(ss / static_cast<double>(f1s.size()));
            }
            out.push_back(row);
        }
    }
    return out;
}

using ProgressCallback = std::function<void(const std::string&)>;

/// Trains one model per (split, repetition) and evaluates every requested
/// boundary method on the same test scores. A failing stage marks the cells
/// of that model as failed and the run continues.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const LabeledDataset& target,
                                       std::span<const LabeledDataset> externals,
                                       const ProgressCallback& progress = {})
{
    spec.validate();
    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t) { return std::chrono::duration<double>(clock::now() - t).count(); };
    auto say = [&](const std::string& msg) {
        if (progress) progress(msg);
    };

    ExperimentResult result;
    for (double split : spec.splits) {
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
            RunRecord run;
            run.split = split;
            run.repetition = rep;
            RunConfig cfg = spec.run;
            cfg.seed = repetition_seed(spec.run.seed, rep);
            apply_seeds(cfg);
            run.seeds = stage_seeds(cfg.seed);

            std::vector<CellResult> cells;
            for (auto m : spec.methods) {
                CellResult cell;
                cell.split = split;
                cell.repetition = rep;
                cell.method = m;
                cell.seed = cfg.seed;
                cells.push_back(std::move(cell));
            }
            const std::string tag = "split " + std::to_string(split).substr(0, 4) + " rep " + std::to_string(rep);
            try {
                const auto t_train = clock::now();
                const auto parts = chronological_split(target, {split, cfg.seed});
                TrainingData data;
                const auto model = train_model(parts.train, externals, cfg,
                                               [&](std::size_t epoch, double loss) {
                                                   say(tag + ": epoch " + std::to_string(epoch) + " loss " +
                                                       std::to_string(loss));
                                               },
                                               &data);
                run.report = model.report;
                run.n_train = data.normal.size();
                run.n_stab = data.stab.size();
                run.n_test = parts.test.records.size();
                run.vocab_size = model.vocab.size();
                run.train_seconds = seconds_since(t_train);

                const auto t_eval = clock::now();
                const auto test_scores = score_dataset(parts.test, model.params, model.vocab, cfg.threads);
                const auto test_labels = labels_of(parts.test);
                ScoreDistribution train_scores, augmented;
                const DecisionBoundary a2 = calibrate_a2log(model.params, data.normal, cfg.augmentation, cfg.boundary,
                                                      cfg.threads, &augmented);
                const DecisionBoundary s3 =
                    calibrate_three_sigma(model.params, data.normal, cfg.threads, &train_scores);
                run.mean_train_score = mean_of(train_scores.scores);
                run.mean_augmented_score = mean_of(augmented.scores);
                for (auto& cell : cells) {
                    try {
                        switch (cell.method) {
                        case BoundaryMethod::a2log: cell.boundary = a2; break;
                        case BoundaryMethod::three_sigma: cell.boundary = s3; break;
                        case BoundaryMethod::best_oracle:
                            cell.boundary = best_oracle_boundary(test_scores, test_labels).boundary;
                            break;
                        }
                        const auto report = confusion_and_metrics(classify_scores(test_scores, test_labels, cell.boundary));
                        cell.counts = report.counts;
                        cell.metrics = report.metrics;
                        cell.ok = true;
                    } catch (const Error& e) {
                        cell.error = e.what();
                    }
                }
                run.evaluate_seconds = seconds_since(t_eval);
                run.ok = true;
                say(tag + ": done in " + std::to_string(run.train_seconds + run.evaluate_seconds) + " s");
            } catch (const Error& e) {
                run.error = e.what();
                for (auto& cell : cells) cell.error = run.error;
                say(tag + ": failed: " + run.error);
            }
            result.runs.push_back(std::move(run));
            for (auto& c : cells) result.cells.push_back(std::move(c));
        }
    }
    result.summary = summarize(spec, result.cells);
    return result;
}

// ---------------------------------------------------------------------------
// Result documents

inline nlohmann::json to_json(const TrainReport& r)
{
    return {{"epochs_run", r.epochs_run},
            {"final_avg_loss", r.final_avg_loss},
            {"loss_curve", r.loss_curve},
            {"stop_reason", to_string(r.stop_reason)}};
}

inline nlohmann::json to_json(const StageSeeds& s)
{
    return {{"master", s.master},
            {"init", s.init},
            {"train", s.train},
            {"stabilization", s.stabilization},
            {"augmentation", s.augmentation}};
}

inline nlohmann::json to_json(const DecisionBoundary& b)
{
    return {{"method", to_string(b.method)}, {"epsilon", b.epsilon}, {"p", b.p},   {"beta", b.beta},
            {"alpha", b.alpha},              {"n", b.n},             {"seed", b.seed}, {"checkpoint", b.checkpoint}};
}

inline nlohmann::json to_json(const ConfusionCounts& c)
{
    return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline nlohmann::json to_json(const Metrics& m)
{
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

inline nlohmann::json experiment_json(const ExperimentSpec& spec, const ExperimentResult& r)
{
    nlohmann::json doc;
    doc["target"] = spec.target_name;
    doc["master_seed"] = spec.run.seed;
    doc["repetitions"] = spec.repetitions;
    doc["splits"] = spec.splits;
    auto& methods = doc["methods"] = nlohmann::json::array();
    for (auto m : spec.methods) methods.push_back(to_string(m));
    doc["config"] = run_config_entries(spec.run);

    auto& runs = doc["runs"] = nlohmann::json::array();
    for (const auto& run : r.runs) {
        nlohmann::json j{{"split", run.split},
                         {"repetition", run.repetition},
                         {"seeds", to_json(run.seeds)},
                         {"status", run.ok ? "ok" : "failed"},
                         {"runtime_seconds", {{"train", run.train_seconds}, {"evaluate", run.evaluate_seconds}}}};
        if (run.ok) {
            j["train_report"] = to_json(run.report);
            j["n_train"] = run.n_train;
            j["n_stabilization"] = run.n_stab;
            j["n_test"] = run.n_test;
            j["vocab_size"] = run.vocab_size;
            j["mean_train_score"] = run.mean_train_score;
            j["mean_augmented_score"] = run.mean_augmented_score;
        } else {
            j["error"] = run.error;
        }
        runs.push_back(std::move(j));
    }

    auto& cells = doc["cells"] = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j{{"split", c.split},
                         {"repetition", c.repetition},
                         {"method", to_string(c.method)},
                         {"seed", c.seed},
                         {"status", c.ok ? "ok" : "failed"}};
        if (c.ok) {
            j["boundary"] = to_json(c.boundary);
            j["counts"] = to_json(c.counts);
            j["metrics"] = to_json(c.metrics);
        } else {
            j["error"] = c.error;
        }
        cells.push_back(std::move(j));
    }

    auto& summary = doc["summary"] = nlohmann::json::array();
    for (const auto& s : r.summary)
        summary.push_back({{"split", s.split},
                           {"method", to_string(s.method)},
                           {"successful_repetitions", s.n_ok},
                           {"best_repetition", s.best_repetition},
                           {"epsilon", s.epsilon},
                           {"best", to_json(s.best)},
                           {"mean_f1", s.mean_f1},
                           {"std_f1", s.std_f1}});
    return doc;
}

inline constexpr std::string_view results_csv_header =
    "split,repetition,method,status,epsilon,tp,fp,tn,fn,precision,recall,f1,seed";

/// Flat per-cell table. It carries no timing data, so identical seeds give
/// byte-identical files.
inline void write_results_csv(std::ostream& out, const ExperimentResult& r)
{
    out << results_csv_header << '\n';
    for (const auto& c : r.cells) {
        out << exact_number(c.split) << ',' << c.repetition << ',' << to_string(c.method) << ','
            << (c.ok ? "ok" : "failed") << ',';
        if (c.ok)
            out << exact_number(c.boundary.epsilon) << ',' << c.counts.tp << ',' << c.counts.fp << ','
                << c.counts.tn << ',' << c.counts.fn << ',' << exact_number(c.metrics.precision) << ','
                << exact_number(c.metrics.recall) << ',' << exact_number(c.metrics.f1);
        else
            out << ",,,,,,,";
        out << ',' << c.seed << '\n';
    }
}

inline constexpr std::string_view summary_csv_header =
    "split,method,successful_repetitions,best_repetition,epsilon,precision,recall,f1,mean_f1,std_f1";

inline void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows)
{
    out << summary_csv_header << '\n';
    for (const auto& s : rows)
        out << exact_number(s.split) << ',' << to_string(s.method) << ',' << s.n_ok << ',' << s.best_repetition
            << ',' << exact_number(s.epsilon) << ',' << exact_number(s.best.precision) << ','
            << exact_number(s.best.recall) << ',' << exact_number(s.best.f1) << ',' << exact_number(s.mean_f1)
            << ',' << exact_number(s.std_f1) << '\n';
}

} // namespace a2log

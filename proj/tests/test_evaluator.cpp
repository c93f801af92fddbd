#include <gtest/gtest.h>

#include <sstream>

#include "a2log/evaluator.hpp"
#include "helpers.hpp"

using namespace a2log;
using a2log::test::tiny_config;

namespace {

LabeledDataset corpus(std::size_t lines, double rate, std::uint64_t seed, const std::string& name)
{
    SynthConfig cfg;
    cfg.n_templates = 12;
    cfg.n_anomaly_templates = 4;
    cfg.n_lines = lines;
    cfg.anomaly_rate = rate;
    cfg.seed = seed;
    auto ds = generate_synthetic_corpus(cfg);
    ds.name = name;
    return ds;
}

ExperimentSpec small_spec()
{
    ExperimentSpec spec;
    spec.splits = {0.3, 0.6};
    spec.repetitions = 2;
    spec.run.encoder = tiny_config(12, 8, 1, 2);
    spec.run.train.batch_size = 32;
    spec.run.train.learning_rate = 5e-3;
    spec.run.train.max_epochs = 15;
    spec.run.stabilization_per_source = 150;
    spec.run.seed = 4;
    return spec;
}

const std::vector<LabeledDataset>& externals()
{
    static const std::vector<LabeledDataset> ext{corpus(400, 0.0, 101, "e0"), corpus(400, 0.0, 202, "e1")};
    return ext;
}

} // namespace

TEST(Classify, EmptyTestSetGivesEmptyList)
{
    const auto p = init_parameters(tiny_config(6), 12);
    const Vocabulary v = Vocabulary::from_words({"[PAD]", "[CLS]", "[MASK]", "[HEX]", "[NUM]", "a", "b", "c", "d", "e",
                                                 "f", "g"});
    EXPECT_TRUE(classify_dataset(LabeledDataset{"empty", {}}, p, v, DecisionBoundary{}).empty());
}

TEST(Classify, PredictionFollowsTheBoundaryAndRepeats)
{
    const auto ds = corpus(300, 0.2, 3, "t");
    const auto seqs = prepare_dataset(ds, 6);
    const auto vocab = Vocabulary::build(seqs);
    const auto p = init_parameters(tiny_config(6), vocab.size());
    const auto scores = score_dataset(ds, p, vocab);
    DecisionBoundary b;
    b.epsilon = nearest_rank_percentile(scores, 0.5);
    const auto out = classify_dataset(ds, p, vocab, b);
    ASSERT_EQ(out.size(), ds.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].score, scores[i]);
        EXPECT_EQ(out[i].prediction, scores[i] > b.epsilon ? 1 : 0);
        EXPECT_EQ(out[i].label, ds.records[i].label == Label::abnormal ? 1 : 0);
    }
    const auto again = classify_dataset(ds, p, vocab, b);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again[i].score, out[i].score);
}

TEST(Classify, UnknownTokensBecomeMask)
{
    const Vocabulary v = Vocabulary::from_words({"[PAD]", "[CLS]", "[MASK]", "[HEX]", "[NUM]", "known"});
    const LabeledDataset ds{"t", {{0, "known unknown", Label::normal, "t", ""}}};
    const auto enc = encode_dataset(ds, v, 4);
    EXPECT_EQ(enc[0].ids, (std::vector<TokenId>{1, 5, 2, 0}));
}

TEST(Metrics, ConfusionFromPairs)
{
    std::vector<Classified> pairs;
    for (int i = 0; i < 8; ++i) pairs.push_back({1, 1, 0});
    for (int i = 0; i < 2; ++i) pairs.push_back({0, 1, 0});
    for (int i = 0; i < 2; ++i) pairs.push_back({1, 0, 0});
    for (int i = 0; i < 88; ++i) pairs.push_back({0, 0, 0});
    const auto r = confusion_and_metrics(pairs);
    EXPECT_EQ(r.counts, (ConfusionCounts{8, 2, 88, 2}));
    EXPECT_NEAR(r.metrics.f1, 0.8, 1e-15);
    EXPECT_THROW(confusion_and_metrics(std::vector<Classified>{}), ConfigError);
}

TEST(Summary, BestOfRepetitionsAndPopulationStd)
{
    ExperimentSpec spec;
    spec.splits = {0.5};
    spec.methods = {BoundaryMethod::a2log};
    std::vector<CellResult> cells(4);
    const double f1s[] = {0.6, 0.9, 0.9, 0.0};
    for (std::size_t i = 0; i < 4; ++i) {
        cells[i].split = 0.5;
        cells[i].repetition = i;
        cells[i].ok = i < 3;
        cells[i].metrics.f1 = f1s[i];
        cells[i].boundary.epsilon = static_cast<double>(i);
    }
    const auto rows = summarize(spec, cells);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n_ok, 3u);
    EXPECT_EQ(rows[0].best_repetition, 1u);
    EXPECT_EQ(rows[0].epsilon, 1.0);
    EXPECT_NEAR(rows[0].mean_f1, 0.8, 1e-12);
    EXPECT_NEAR(rows[0].std_f1, std::sqrt(0.02), 1e-12);
}

TEST(Experiment, CellsDominanceAndDeterminism)
{
    const auto target = corpus(1500, 0.08, 9, "target");
    const auto spec = small_spec();
    const auto a = run_experiment(spec, target, externals());
    ASSERT_EQ(a.cells.size(), 2u * 2u * 3u);
    ASSERT_EQ(a.runs.size(), 4u);
    ASSERT_EQ(a.summary.size(), 6u);
    for (const auto& c : a.cells) ASSERT_TRUE(c.ok) << c.error;
    for (std::size_t i = 0; i < a.cells.size(); i += 3) {
        // cells of one model are consecutive: a2log, three-sigma, best-oracle
        const auto& a2 = a.cells[i];
        const auto& s3 = a.cells[i + 1];
        const auto& best = a.cells[i + 2];
        EXPECT_GE(best.metrics.f1, a2.metrics.f1);
        EXPECT_GE(best.metrics.f1, s3.metrics.f1);
        // Same scores: every method sees the same number of positives.
        EXPECT_EQ(a2.counts.tp + a2.counts.fn, best.counts.tp + best.counts.fn);
        EXPECT_EQ(a2.counts.total(), s3.counts.total());
        EXPECT_EQ(a2.seed, best.seed);
    }
    // repetition seeds are shared across splits and differ between repetitions
    EXPECT_EQ(a.runs[0].seeds.master, a.runs[2].seeds.master);
    EXPECT_NE(a.runs[0].seeds.master, a.runs[1].seeds.master);

    const auto b = run_experiment(spec, target, externals());
    std::ostringstream ca, cb;
    write_results_csv(ca, a);
    write_results_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(ca.str().substr(0, results_csv_header.size()), results_csv_header);
}

TEST(Experiment, FailedStageIsRecordedAndRunContinues)
{
    const auto target = corpus(1500, 0.08, 9, "target");
    auto spec = small_spec();
    spec.repetitions = 1;
    spec.splits = {0.0005, 0.5}; // the first selects no training record
    spec.run.train.max_epochs = 2;
    const auto r = run_experiment(spec, target, externals());
    ASSERT_EQ(r.cells.size(), 6u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_FALSE(r.cells[i].ok);
        EXPECT_FALSE(r.cells[i].error.empty());
    }
    for (std::size_t i = 3; i < 6; ++i) EXPECT_TRUE(r.cells[i].ok) << r.cells[i].error;
    EXPECT_FALSE(r.runs[0].ok);
    EXPECT_EQ(r.summary[0].n_ok, 0u);

    const auto doc = experiment_json(spec, r);
    EXPECT_EQ(doc["cells"][0]["status"], "failed");
    EXPECT_EQ(doc["cells"][3]["status"], "ok");
    EXPECT_TRUE(doc["runs"][1].contains("runtime_seconds"));
    EXPECT_TRUE(doc["runs"][1]["seeds"].contains("augmentation"));
    std::ostringstream csv;
    write_results_csv(csv, r);
    EXPECT_NE(csv.str().find(",failed,"), std::string::npos);
}

TEST(Experiment, SpecValidation)
{
    auto spec = small_spec();
    spec.repetitions = 0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = small_spec();
    spec.splits = {1.0};
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = small_spec();
    spec.methods.clear();
    EXPECT_THROW(spec.validate(), ConfigError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "a2log/pipeline.hpp"
#include "a2log/trainer.hpp"
#include "helpers.hpp"

using namespace a2log;
using a2log::test::tiny_config;

namespace {

LabeledDataset normal_corpus(const std::string& name, std::size_t n, std::uint64_t seed)
{
    SynthConfig cfg;
    cfg.n_lines = n;
    cfg.anomaly_rate = 0.0;
    cfg.seed = seed;
    cfg.name = name;
    auto ds = generate_synthetic_corpus(cfg);
    ds.name = name;
    return ds;
}

} // namespace

TEST(Stabilization, SizeIsSourcesTimesPerSource)
{
    const std::vector<LabeledDataset> two{normal_corpus("a", 300, 1), normal_corpus("b", 300, 2)};
    const auto s = build_stabilization_set(two, 120, 5, 20);
    EXPECT_EQ(s.sequences.size(), 240u);
    EXPECT_EQ(s.sources, (std::vector<std::string>{"a", "b"}));
    const std::vector<LabeledDataset> three{normal_corpus("a", 300, 1), normal_corpus("b", 300, 2),
                                            normal_corpus("c", 300, 3)};
    EXPECT_EQ(build_stabilization_set(three, 100, 5, 20).sequences.size(), 300u);
}

TEST(Stabilization, SamplesWithoutReplacementAndDeterministically)
{
    LabeledDataset ds{"x", {}};
    for (std::size_t i = 0; i < 50; ++i) ds.records.push_back({i, "line " + std::to_string(i) + "x", Label::normal, "x", ""});
    const std::vector<LabeledDataset> one{ds};
    const auto a = build_stabilization_set(one, 50, 9, 4);
    std::set<std::string> seen;
    for (const auto& s : a.sequences) seen.insert(s.tokens[2]);
    EXPECT_EQ(seen.size(), 50u);
    const auto b = build_stabilization_set(one, 20, 9, 4);
    const auto c = build_stabilization_set(one, 20, 9, 4);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(b.sequences[i].tokens, c.sequences[i].tokens);
}

TEST(Stabilization, Errors)
{
    const std::vector<LabeledDataset> one{normal_corpus("a", 100, 1)};
    EXPECT_THROW(build_stabilization_set(one, 0, 1, 20), ConfigError);
    EXPECT_THROW(build_stabilization_set(one, 101, 1, 20), ConfigError);
    EXPECT_THROW(build_stabilization_set(one, 10, 1, 20, "a"), ConfigError);
    EXPECT_THROW(build_stabilization_set(std::vector<LabeledDataset>{}, 10, 1, 20), ConfigError);
}

TEST(Sampler, BatchCountAndDeterminism)
{
    EXPECT_EQ(batches_per_epoch(1024, 1024, 1024), 2u);
    EXPECT_EQ(batches_per_epoch(1000, 25, 1024), 2u);
    EXPECT_EQ(batches_per_epoch(10, 5, 1024), 1u);
    const auto a = weighted_epoch_stream(100, 10, 16, 3, 0);
    EXPECT_EQ(a, weighted_epoch_stream(100, 10, 16, 3, 0));
    EXPECT_NE(a, weighted_epoch_stream(100, 10, 16, 3, 1));
    EXPECT_THROW(weighted_epoch_stream(0, 10, 16, 3), ConfigError);
    EXPECT_THROW(weighted_epoch_stream(10, 0, 16, 3), ConfigError);
}

TEST(Sampler, ClassesAreBalancedDespiteImbalance)
{
    const std::size_t n_normal = 1'000'000, n_stab = 100'000;
    const auto batches = weighted_epoch_stream(n_normal, n_stab, 1024, 11);
    std::size_t stab = 0, total = 0;
    for (const auto& b : batches)
        for (const auto& s : b) {
            ASSERT_LT(s.index, s.stabilization ? n_stab : n_normal);
            stab += s.stabilization;
            ++total;
        }
    // Binomial(total, 0.5): allow five standard deviations.
    const double sd = std::sqrt(total * 0.25);
    EXPECT_NEAR(static_cast<double>(stab), total / 2.0, 5 * sd);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0;
    AdamOptimizer opt(3, cfg);
    std::vector<double> w{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 0.0};
    opt.step(w, g);
    // Bias-corrected moments equal g and g^2 after one step.
    EXPECT_NEAR(w[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
    EXPECT_NEAR(w[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_EQ(w[2], 0.5);
}

TEST(Adam, DecoupledDecayShrinksIndependentlyOfGradient)
{
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    AdamOptimizer opt(1, cfg);
    std::vector<double> w{2.0};
    opt.step(w, std::vector<double>{0.0});
    EXPECT_NEAR(w[0], 2.0 * (1.0 - 0.1 * 0.5), 1e-15);
    cfg.decoupled_weight_decay = false;
    AdamOptimizer coupled(1, cfg);
    std::vector<double> c{2.0};
    coupled.step(c, std::vector<double>{0.0});
    // Coupled decay goes through the adaptive step: g = wd * w = 1.
    EXPECT_NEAR(c[0], 2.0 - 0.1 * 1.0 / (1.0 + 1e-8), 1e-12);
}

TEST(TrainConfig, Validation)
{
    TrainConfig cfg;
    cfg.max_epochs = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

namespace {

RunConfig small_run()
{
    RunConfig run;
    run.encoder = tiny_config(12, 8, 1, 2);
    run.encoder.dropout = 0.05;
    run.train.batch_size = 32;
    run.train.learning_rate = 5e-3;
    run.train.max_epochs = 40;
    run.stabilization_per_source = 200;
    run.seed = 3;
    apply_seeds(run);
    return run;
}

} // namespace

TEST(Train, ReachesLossTargetAndIsDeterministic)
{
    SynthConfig sc;
    sc.n_templates = 10;
    sc.n_lines = 1500;
    sc.anomaly_rate = 0.0;
    const auto target = generate_synthetic_corpus(sc);
    const auto split = chronological_split(target, {0.3, 0});
    const std::vector<LabeledDataset> ext{normal_corpus("e1", 400, 21), normal_corpus("e2", 400, 22)};
    std::vector<double> curve;
    const auto a = train_model(split.train, ext, small_run(), [&](std::size_t, double l) { curve.push_back(l); });
    EXPECT_EQ(a.report.stop_reason, StopReason::loss_target);
    EXPECT_LE(a.report.final_avg_loss, 0.01);
    EXPECT_EQ(a.report.loss_curve, curve);
    EXPECT_EQ(a.report.epochs_run, curve.size());
    EXPECT_TRUE(a.params.all_finite());

    const auto b = train_model(split.train, ext, small_run());
    EXPECT_EQ(a.params.values, b.params.values);
    EXPECT_EQ(a.vocab, b.vocab);
}

TEST(Train, StopsAtMaxEpochs)
{
    SynthConfig sc;
    sc.n_templates = 10;
    sc.n_lines = 600;
    sc.anomaly_rate = 0.0;
    const auto split = chronological_split(generate_synthetic_corpus(sc), {0.5, 0});
    const std::vector<LabeledDataset> ext{normal_corpus("e1", 300, 21)};
    auto run = small_run();
    run.train.max_epochs = 1;
    run.train.target_avg_loss = 1e-9;
    const auto m = train_model(split.train, ext, run);
    EXPECT_EQ(m.report.stop_reason, StopReason::max_epochs);
    EXPECT_EQ(m.report.epochs_run, 1u);
}

TEST(Train, RejectsAbnormalTrainingRecords)
{
    LabeledDataset bad{"t", {{0, "a b c", Label::normal, "t", ""}, {1, "x y", Label::abnormal, "t", "X"}}};
    const std::vector<LabeledDataset> ext{normal_corpus("e1", 300, 21)};
    EXPECT_THROW(train_model(bad, ext, small_run()), ConfigError);
}

TEST(Train, VocabularyCoversTargetAndStabilization)
{
    LabeledDataset t{"t", {{0, "alpha beta", Label::normal, "t", ""}}};
    StabilizationSet stab;
    stab.sequences.push_back(prepare_sequence("gamma 12", 5));
    const auto data = prepare_training_data(t, stab, 5);
    EXPECT_TRUE(data.vocab.contains("alpha"));
    EXPECT_TRUE(data.vocab.contains("gamma"));
    ASSERT_EQ(data.normal.size(), 1u);
    ASSERT_EQ(data.stab.size(), 1u);
    EXPECT_EQ(data.normal[0].label, 0);
    EXPECT_EQ(data.stab[0].label, 1);
    EXPECT_EQ(data.stab[0].ids[2], special::num_id);
}

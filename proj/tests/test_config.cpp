#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "a2log/config.hpp"

using namespace a2log;

namespace {
KeyValues kv_of(const std::string& text)
{
    std::istringstream in(text);
    return KeyValues::parse(in, "test");
}
} // namespace

TEST(KeyValues, ParsesCommentsAndWhitespace)
{
    auto kv = kv_of("# header\n  d = 16  # inline\n\nname=abc\nlist = a, b ,,c\n");
    EXPECT_EQ(kv.get<std::size_t>("d", 0), 16u);
    EXPECT_EQ(kv.get_string("name", ""), "abc");
    EXPECT_EQ(kv.get_list("list"), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(kv.get_string("absent", "fallback"), "fallback");
    EXPECT_NO_THROW(kv.reject_unknown());
}

TEST(KeyValues, Errors)
{
    EXPECT_THROW(kv_of("novalue\n"), ConfigError);
    EXPECT_THROW(kv_of("=3\n"), ConfigError);
    EXPECT_THROW(kv_of("a=1\na=2\n"), ConfigError);
    auto kv = kv_of("n = -3\nx = 1.5e\nb = maybe\nextra = 1\n");
    EXPECT_THROW(kv.get<std::size_t>("n", 0), ConfigError);
    EXPECT_THROW(kv.get<double>("x", 0.0), ConfigError);
    EXPECT_THROW(kv.get<bool>("b", false), ConfigError);
    EXPECT_THROW(kv.reject_unknown(), ConfigError);
    EXPECT_THROW(kv.require_string("missing"), ConfigError);
}

TEST(KeyValues, OverridesReplaceValues)
{
    auto kv = kv_of("d = 16\n");
    kv.override_assignment("d=32");
    kv.override_assignment(" lr = 0.5 ");
    EXPECT_EQ(kv.get<std::size_t>("d", 0), 32u);
    EXPECT_EQ(kv.get<double>("lr", 0.0), 0.5);
    EXPECT_THROW(kv.override_assignment("nokey"), ConfigError);
}

TEST(RunConfig, DefaultsFollowTheReferenceSetup)
{
    const RunConfig c;
    EXPECT_EQ(c.encoder.u, 20u);
    EXPECT_EQ(c.encoder.d, 128u);
    EXPECT_EQ(c.encoder.n_layers, 2u);
    EXPECT_EQ(c.encoder.dropout, 0.05);
    EXPECT_EQ(c.train.batch_size, 1024u);
    EXPECT_EQ(c.train.learning_rate, 1e-4);
    EXPECT_EQ(c.train.weight_decay, 5e-5);
    EXPECT_EQ(c.train.target_avg_loss, 0.01);
    EXPECT_EQ(c.train.max_epochs, 50u);
    EXPECT_EQ(c.augmentation.alpha, 1u);
    EXPECT_EQ(c.boundary.p, 0.95);
    EXPECT_EQ(c.boundary.beta, 2.5);
    EXPECT_EQ(c.stabilization_per_source, 60000u);
}

TEST(RunConfig, ReadsAllKeysAndRoundTrips)
{
    auto kv = kv_of("u = 12\nd = 16\nff_hidden = 24\nn_layers = 3\nn_heads = 4\ndropout = 0.1\nbatch_size = 8\n"
                    "learning_rate = 0.002\nweight_decay = 0\ntarget_avg_loss = 0.05\nmax_epochs = 7\n"
                    "adam_beta1 = 0.8\nadam_beta2 = 0.99\nadam_eps = 1e-7\ndecoupled_weight_decay = false\n"
                    "alpha = 2\naugmentation_repetitions = 3\np = 0.9\nbeta = 1.5\nstab_per_source = 40\n"
                    "threads = 2\nseed = 99\n");
    const auto c = read_run_config(kv);
    EXPECT_NO_THROW(kv.reject_unknown());
    EXPECT_EQ(c.encoder.u, 12u);
    EXPECT_EQ(c.encoder.n_heads, 4u);
    EXPECT_EQ(c.train.learning_rate, 0.002);
    EXPECT_FALSE(c.train.decoupled_weight_decay);
    EXPECT_EQ(c.augmentation.repetitions, 3u);
    EXPECT_EQ(c.boundary.beta, 1.5);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.encoder.seed, stage_seeds(99).init);
    EXPECT_EQ(c.train.seed, stage_seeds(99).train);
    EXPECT_EQ(c.augmentation.seed, stage_seeds(99).augmentation);

    KeyValues again;
    for (const auto& [k, v] : run_config_entries(c)) again.set(k, v);
    const auto d = read_run_config(again);
    EXPECT_EQ(run_config_entries(d), run_config_entries(c));
    EXPECT_EQ(d.train.adam_eps, c.train.adam_eps);
}

TEST(RunConfig, InvalidValuesAreRejected)
{
    for (const char* bad : {"d = 7\n", "n_heads = 3\n", "max_epochs = 0\n", "p = 0\n", "p = 1.5\n", "beta = 0\n",
                            "alpha = 0\n", "dropout = 1\n", "stab_per_source = 0\n"}) {
        auto kv = kv_of(bad);
        EXPECT_THROW(read_run_config(kv), ConfigError) << bad;
    }
}

TEST(StageSeeds, DistinctAndStable)
{
    const auto s = stage_seeds(5);
    EXPECT_EQ(s.master, 5u);
    std::set<std::uint64_t> all{s.init, s.train, s.stabilization, s.augmentation};
    EXPECT_EQ(all.size(), 4u);
    EXPECT_EQ(stage_seeds(5).init, s.init);
    EXPECT_NE(stage_seeds(6).init, s.init);
}

TEST(ExactNumber, ShortestRoundTrip)
{
    EXPECT_EQ(exact_number(0.95), "0.95");
    EXPECT_EQ(exact_number(1e-4), "0.0001");
    EXPECT_EQ(exact_number(0.1 + 0.2), "0.30000000000000004");
    EXPECT_EQ(std::stod(exact_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(DatasetFormat, Names)
{
    EXPECT_EQ(parse_dataset_format("labeled-hpc"), DatasetFormat::labeled_hpc);
    EXPECT_EQ(parse_dataset_format("plain"), DatasetFormat::plain_normal);
    EXPECT_THROW(parse_dataset_format("csv"), ConfigError);
}

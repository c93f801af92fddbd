#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "a2log/boundary.hpp"
#include "a2log/metrics.hpp"
#include "helpers.hpp"

using namespace a2log;
using a2log::test::random_sequences;
using a2log::test::tiny_config;

namespace {

std::vector<double> one_to(int n)
{
    std::vector<double> v;
    for (int i = 1; i <= n; ++i) v.push_back(i);
    return v;
}

// F1 of the rule "score > eps" by a direct pass.
double f1_at(const std::vector<double>& s, const std::vector<int>& y, double eps)
{
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool pred = s[i] > eps;
        tp += pred && y[i];
        fp += pred && !y[i];
        fn += !pred && y[i];
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

} // namespace

TEST(Augment, ExampleSequenceMasksExactlyOneContentToken)
{
    const auto seq = prepare_sequence("time.c: Detected 3591.142 MHz.", 10);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const auto r = augment_sequence(seq, 1, rng);
        EXPECT_EQ(r.masked, 1u);
        EXPECT_FALSE(r.nothing_to_mask);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (r.sequence.tokens[i] != seq.tokens[i]) {
                ++changed;
                EXPECT_EQ(r.sequence.tokens[i], "[MASK]");
                EXPECT_GE(i, 1u);
                EXPECT_LE(i, 6u);
            }
        }
        EXPECT_EQ(changed, 1u);
    }
}

TEST(Augment, AlphaClampsToContentLength)
{
    const auto seq = frame_sequence(std::vector<std::string>{"a", "b"}, 5);
    Rng rng(1);
    const auto r = augment_sequence(seq, 2, rng);
    EXPECT_EQ(r.sequence.tokens, (std::vector<std::string>{"[CLS]", "[MASK]", "[MASK]", "[PAD]", "[PAD]"}));
    Rng rng2(1);
    EXPECT_EQ(augment_sequence(seq, 7, rng2).masked, 2u);
}

TEST(Augment, NothingToMaskIsFlagged)
{
    const auto seq = frame_sequence(std::vector<std::string>{}, 4);
    Rng rng(1);
    const auto r = augment_sequence(seq, 1, rng);
    EXPECT_TRUE(r.nothing_to_mask);
    EXPECT_EQ(r.masked, 0u);
    EXPECT_EQ(r.sequence.tokens, seq.tokens);
    EXPECT_THROW(augment_sequence(seq, 0, rng), ConfigError);
}

TEST(Augment, IdLevelMatchesTokenLevel)
{
    const auto seq = prepare_sequence("node3 kernel: cache parity error at 0xfe00", 12);
    const auto vocab = Vocabulary::build(std::vector<TokenSequence>{seq});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed), b(seed);
        auto ids = vocab.encode(seq);
        augment_ids(ids, 2, a);
        EXPECT_EQ(ids, vocab.encode(augment_sequence(seq, 2, b).sequence));
    }
}

TEST(ScoreDistribution, OneScorePerSequenceAndRepetition)
{
    const auto cfg = tiny_config(6, 8, 1, 2);
    const auto p = init_parameters(cfg, 15);
    std::vector<EncodedSequence> train;
    for (auto& ids : random_sequences(30, cfg.u, 15, 4)) train.push_back({ids, 0});
    EXPECT_EQ(score_distribution(train, p, {1, 5, 1}).size(), 30u);
    const auto twice = score_distribution(train, p, {1, 5, 2});
    EXPECT_EQ(twice.size(), 60u);
    EXPECT_EQ(score_distribution(train, p, {1, 5, 2}).scores, twice.scores);
    EXPECT_EQ(score_distribution(train, p, {1, 5, 2}, 3).scores, twice.scores);

    train[3].label = 1;
    EXPECT_THROW(score_distribution(train, p, {1, 5, 1}), ConfigError);
    EXPECT_THROW(score_distribution(std::vector<EncodedSequence>{}, p, {1, 5, 1}), ConfigError);
}

TEST(NearestRank, Examples)
{
    const auto d = one_to(20);
    EXPECT_EQ(nearest_rank_percentile(d, 0.95), 19.0);
    const auto b = a2log_boundary({d}, {0.95, 2.5});
    EXPECT_EQ(b.epsilon, 47.5);
    EXPECT_EQ(b.n, 20u);
    EXPECT_EQ(a2log_boundary({std::vector<double>(9, 0.4)}, {0.95, 2.5}).epsilon, 0.4 * 2.5);
    EXPECT_EQ(a2log_boundary({one_to(33)}, {1.0, 1.0}).epsilon, 33.0);
    EXPECT_EQ(nearest_rank(0.7, 10), 7u);
    EXPECT_EQ(nearest_rank(0.01, 10), 1u);
    EXPECT_THROW(nearest_rank_percentile(d, 0.0), ConfigError);
    EXPECT_THROW(nearest_rank_percentile(d, 1.01), ConfigError);
    EXPECT_THROW(nearest_rank_percentile(std::vector<double>{}, 0.5), ConfigError);
}

TEST(NearestRank, MatchesSortedIndexOnRandomInputs)
{
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<double> s(n);
        for (auto& v : s) v = std::floor(rng.uniform() * 50) / 10;
        const double p = std::max(1e-3, rng.uniform());
        auto sorted = s;
        std::sort(sorted.begin(), sorted.end());
        // smallest k with k/n >= p
        std::size_t k = 1;
        while (static_cast<double>(k) < p * static_cast<double>(n) - 1e-9) ++k;
        EXPECT_EQ(nearest_rank_percentile(s, p), sorted[k - 1]);
    }
}

TEST(ThreeSigma, Examples)
{
    EXPECT_NEAR(three_sigma_boundary({one_to(5)}).epsilon, 3.0 + 3.0 * std::sqrt(2.0), 1e-12);
    EXPECT_EQ(three_sigma_boundary({std::vector<double>(7, 0.5)}).epsilon, 0.5);
    EXPECT_EQ(three_sigma_boundary({{0.0}}).epsilon, 0.0);
    EXPECT_EQ(three_sigma_boundary({{2.5}}).epsilon, 2.5);
    EXPECT_THROW(three_sigma_boundary({}), ConfigError);
}

TEST(BestOracle, SeparableExample)
{
    const std::vector<double> s{0.1, 0.2, 0.3, 0.5, 0.6};
    const std::vector<int> y{0, 0, 0, 1, 1};
    const auto r = best_oracle_boundary(s, y);
    EXPECT_EQ(r.f1, 1.0);
    EXPECT_NEAR(r.boundary.epsilon, 0.4, 1e-15);
}

TEST(BestOracle, InterleavedScoresAreNotSeparable)
{
    const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const std::vector<int> y{1, 0, 1, 0, 1, 0};
    EXPECT_LT(best_oracle_boundary(s, y).f1, 1.0);
    EXPECT_THROW(best_oracle_boundary(s, std::vector<int>(6, 0)), ConfigError);
    EXPECT_THROW(best_oracle_boundary(s, std::vector<int>(5, 1)), ConfigError);
}

TEST(BestOracle, MatchesExhaustiveScanWithTies)
{
    Rng rng(8);
    for (int t = 0; t < 150; ++t) {
        const std::size_t n = 2 + rng.below(80);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.3);
            s[i] = std::floor((rng.uniform() + 0.4 * y[i]) * 20) / 20; // coarse grid forces ties
        }
        if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
        auto sorted = s;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        double best = f1_at(s, y, sorted.front() - 1.0);
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            const double eps = i + 1 < sorted.size() ? (sorted[i] + sorted[i + 1]) / 2 : sorted[i];
            best = std::max(best, f1_at(s, y, eps));
        }
        const auto r = best_oracle_boundary(s, y);
        EXPECT_NEAR(r.f1, best, 1e-12);
        EXPECT_NEAR(f1_at(s, y, r.boundary.epsilon), r.f1, 1e-12);
    }
}

TEST(Decide, StrictlyGreaterIsAbnormal)
{
    DecisionBoundary b;
    b.epsilon = 1.0;
    EXPECT_EQ(decide(1.5, b), 1);
    EXPECT_EQ(decide(1.0, b), 0);
    EXPECT_EQ(decide(0.0, b), 0);
    b.epsilon = 0.0;
    EXPECT_EQ(decide(0.0, b), 0);
}

TEST(Decide, RecallFallsMonotonicallyWithEpsilon)
{
    Rng rng(2);
    std::vector<double> s(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = rng.uniform();
        y[i] = rng.bernoulli(0.2);
    }
    double last = 1.0;
    for (double eps = -0.1; eps <= 1.1; eps += 0.01) {
        DecisionBoundary b;
        b.epsilon = eps;
        std::vector<int> pred;
        for (double v : s) pred.push_back(decide(v, b));
        const double r = metrics_from_counts(count_confusion(y, pred)).recall;
        EXPECT_LE(r, last);
        last = r;
    }
    EXPECT_EQ(last, 0.0);
}

TEST(BoundaryRecord, RoundTripIsExact)
{
    DecisionBoundary b;
    b.epsilon = 0.1 + 0.2; // not exactly representable in short decimal
    b.method = BoundaryMethod::three_sigma;
    b.p = 0.95;
    b.beta = 2.5;
    b.alpha = 2;
    b.n = 1234;
    b.seed = 18446744073709551557ull;
    b.checkpoint = "abc123";
    std::stringstream io;
    save_boundary(io, b);
    const auto r = load_boundary(io);
    EXPECT_EQ(r.epsilon, b.epsilon);
    EXPECT_EQ(r.method, b.method);
    EXPECT_EQ(r.p, b.p);
    EXPECT_EQ(r.beta, b.beta);
    EXPECT_EQ(r.alpha, b.alpha);
    EXPECT_EQ(r.n, b.n);
    EXPECT_EQ(r.seed, b.seed);
    EXPECT_EQ(r.checkpoint, b.checkpoint);
}

TEST(BoundaryRecord, RejectsMalformedInput)
{
    std::istringstream bad_header("boundary\nmethod=a2log\n");
    EXPECT_THROW(load_boundary(bad_header), FormatError);
    std::istringstream missing("a2log-boundary v1\nmethod=a2log\n");
    EXPECT_THROW(load_boundary(missing), FormatError);
    EXPECT_THROW(parse_boundary_method("median"), ConfigError);
    EXPECT_EQ(parse_boundary_method("3-sigma"), BoundaryMethod::three_sigma);
    EXPECT_EQ(parse_boundary_method("best"), BoundaryMethod::best_oracle);
}

TEST(Metrics, Examples)
{
    const auto m = metrics_from_counts({8, 2, 88, 2});
    EXPECT_NEAR(m.precision, 0.8, 1e-15);
    EXPECT_NEAR(m.recall, 0.8, 1e-15);
    EXPECT_NEAR(m.f1, 0.8, 1e-15);
    const auto none = metrics_from_counts({0, 0, 90, 10});
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.f1, 0.0);
    const auto perfect = metrics_from_counts({10, 0, 90, 0});
    EXPECT_EQ(perfect.precision, 1.0);
    EXPECT_EQ(perfect.recall, 1.0);
    EXPECT_EQ(perfect.f1, 1.0);
}

TEST(Metrics, CountsArePermutationInvariant)
{
    std::vector<int> y{1, 0, 0, 1, 1, 0, 0, 0}, p{1, 1, 0, 0, 1, 0, 0, 1};
    const auto c = count_confusion(y, p);
    EXPECT_EQ(c.tp, 2u);
    EXPECT_EQ(c.fp, 2u);
    EXPECT_EQ(c.fn, 1u);
    EXPECT_EQ(c.tn, 3u);
    std::reverse(y.begin(), y.end());
    std::reverse(p.begin(), p.end());
    const auto r = count_confusion(y, p);
    EXPECT_EQ(r.tp, c.tp);
    EXPECT_EQ(r.fp, c.fp);
    EXPECT_EQ(r.fn, c.fn);
    EXPECT_EQ(r.tn, c.tn);
}

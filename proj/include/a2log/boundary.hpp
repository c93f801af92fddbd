#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "a2log/error.hpp"
#include "a2log/metrics.hpp"
#include "a2log/random.hpp"
#include "a2log/scorer.hpp"
#include "a2log/tokenizer.hpp"

namespace a2log {

struct AugmentationConfig {
    std::size_t alpha = 1;        // tokens replaced by [MASK] per sequence
    std::uint64_t seed = 0;
    std::size_t repetitions = 1;  // augmented variants per training sequence
};

struct BoundaryConfig {
    double p = 0.95;
    double beta = 2.5;

    void validate() const
    {
        if (!(p > 0.0 && p <= 1.0)) throw ConfigError("percentile p must lie in (0, 1]");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    }
};

struct ScoreDistribution {
    std::vector<double> scores;

    std::size_t size() const noexcept { return scores.size(); }
};

enum class BoundaryMethod { a2log, three_sigma, best_oracle };

inline const char* to_string(BoundaryMethod m) noexcept
{
    switch (m) {
    case BoundaryMethod::a2log: return "a2log";
    case BoundaryMethod::three_sigma: return "three-sigma";
    case BoundaryMethod::best_oracle: return "best-oracle";
    }
    return "?";
}

inline BoundaryMethod parse_boundary_method(const std::string& s)
{
    if (s == "a2log") return BoundaryMethod::a2log;
    if (s == "three-sigma" || s == "3-sigma") return BoundaryMethod::three_sigma;
    if (s == "best-oracle" || s == "best") return BoundaryMethod::best_oracle;
    throw ConfigError("unknown boundary method: " + s);
}

struct DecisionBoundary {
    double epsilon = 0.0;
    BoundaryMethod method = BoundaryMethod::a2log;
    // Provenance.
    double p = 0.0;
    double beta = 0.0;
    std::size_t alpha = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string checkpoint;
};

/// Anomaly decision: 1 iff the score strictly exceeds epsilon.
inline int decide(double score, const DecisionBoundary& b) noexcept { return score > b.epsilon ? 1 : 0; }

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentResult {
    TokenSequence sequence;
    std::size_t masked = 0;
    bool nothing_to_mask = false;
};

namespace detail {

/// Chooses min(alpha, positions.size()) distinct entries uniformly.
inline std::vector<std::size_t> choose_positions(std::vector<std::size_t> positions, std::size_t alpha, Rng& rng)
{
    const std::size_t k = std::min(alpha, positions.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(positions[i], positions[i + rng.below(positions.size() - i)]);
    positions.resize(k);
    return positions;
}

} // namespace detail

/// Replaces `alpha` content tokens at random positions with [MASK].
/// [CLS] and [PAD] are never masked; alpha is clamped to the number of
/// maskable positions.
inline AugmentResult augment_sequence(const TokenSequence& seq, std::size_t alpha, Rng& rng)
{
    if (alpha == 0) throw ConfigError("augmentation alpha must be at least 1");
    std::vector<std::size_t> maskable;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i)
        if (seq.tokens[i] != special::cls && seq.tokens[i] != special::pad) maskable.push_back(i);
    AugmentResult out{seq, 0, maskable.empty()};
    for (auto pos : detail::choose_positions(std::move(maskable), alpha, rng)) {
        out.sequence.tokens[pos] = special::mask;
        ++out.masked;
    }
    return out;
}

/// Id-level counterpart of augment_sequence; returns the number of masked positions.
inline std::size_t augment_ids(std::vector<TokenId>& ids, std::size_t alpha, Rng& rng)
{
    if (alpha == 0) throw ConfigError("augmentation alpha must be at least 1");
    std::vector<std::size_t> maskable;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] != special::cls_id && ids[i] != special::pad_id) maskable.push_back(i);
    const auto chosen = detail::choose_positions(std::move(maskable), alpha, rng);
    for (auto pos : chosen) ids[pos] = special::mask_id;
    return chosen.size();
}

/// Seed for the augmentation of sequence `index` in round `repetition`; a
/// function of the global seed only, so any sharding yields the same result.
inline std::uint64_t augmentation_seed(std::uint64_t seed, std::size_t index, std::size_t repetition = 0)
{
    return derive_seed(derive_seed(derive_seed(seed, "augment"), repetition), index);
}

/// Scores of augmented training sequences in eval mode. Stabilization
/// sequences (label 1) are rejected.
inline ScoreDistribution score_distribution(std::span<const EncodedSequence> train, const ModelParameters& params,
                                            const AugmentationConfig& aug, std::size_t threads = 1)
{
    if (train.empty()) throw ConfigError("score distribution needs at least one training sequence");
    if (aug.repetitions == 0) throw ConfigError("augmentation repetitions must be at least 1");
    std::vector<std::vector<TokenId>> augmented;
    augmented.reserve(train.size() * aug.repetitions);
    for (std::size_t r = 0; r < aug.repetitions; ++r) {
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (train[i].label != 0)
                throw ConfigError("score distribution must exclude the stabilization class");
            auto ids = train[i].ids;
            Rng rng(augmentation_seed(aug.seed, i, r));
            augment_ids(ids, aug.alpha, rng);
            augmented.push_back(std::move(ids));
        }
    }
    return {score_sequences(params, augmented, threads)};
}

// ---------------------------------------------------------------------------
// Boundaries

/// Rank k = ceil(p * n), clamped to [1, n]. Products within 1e-9 of an
/// integer count as that integer so 0.7 * 10 selects rank 7.
inline std::size_t nearest_rank(double p, std::size_t n)
{
    const double r = p * static_cast<double>(n);
    const double nearest = std::round(r);
    double k = std::abs(r - nearest) <= 1e-9 * std::max(1.0, r) ? nearest : std::ceil(r);
    k = std::clamp(k, 1.0, static_cast<double>(n));
    return static_cast<std::size_t>(k);
}

/// k-th smallest score with k = nearest_rank(p, n).
inline double nearest_rank_percentile(std::span<const double> scores, double p)
{
    if (scores.empty()) throw ConfigError("percentile of an empty distribution");
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("percentile p must lie in (0, 1]");
    std::vector<double> work(scores.begin(), scores.end());
    const std::size_t k = nearest_rank(p, work.size());
    std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k - 1), work.end());
    return work[k - 1];
}

/// epsilon = D_p * beta.
inline DecisionBoundary a2log_boundary(const ScoreDistribution& dist, const BoundaryConfig& cfg)
{
    cfg.validate();
    if (dist.scores.empty()) throw ConfigError("a2log boundary needs a non-empty score distribution");
    DecisionBoundary b;
    b.method = BoundaryMethod::a2log;
    b.epsilon = nearest_rank_percentile(dist.scores, cfg.p) * cfg.beta;
    b.p = cfg.p;
    b.beta = cfg.beta;
    b.n = dist.size();
    return b;
}

/// Mean plus three population standard deviations of un-augmented
/// training scores.
inline DecisionBoundary three_sigma_boundary(const ScoreDistribution& train_scores)
{
    const auto& s = train_scores.scores;
    if (s.empty()) throw ConfigError("three-sigma boundary needs at least one score");
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    DecisionBoundary b;
    b.method = BoundaryMethod::three_sigma;
    b.epsilon = mean + 3.0 * std::sqrt(ss / n);
    b.n = s.size();
    return b;
}

struct BestOracleResult {
    DecisionBoundary boundary;
    double f1 = 0.0;
};

/// Threshold strictly between two adjacent distinct scores a < b.
inline double threshold_between(double a, double b) noexcept
{
    const double m = a + (b - a) / 2.0;
    return m < b ? m : a;
}

/// Label-aware F1-optimal threshold. Candidates are the midpoints between
/// adjacent distinct scores plus one threshold below the minimum and the
/// maximum itself; ties go to the larger epsilon.
inline BestOracleResult best_oracle_boundary(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) throw ConfigError("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::size_t positives = 0;
    for (int l : labels) positives += l != 0;
    if (positives == 0) throw ConfigError("best-oracle boundary needs at least one abnormal sample");

    // Start with everything predicted abnormal, then move groups of equal
    // scores to the normal side in ascending order.
    ConfusionCounts c{positives, scores.size() - positives, 0, 0};
    BestOracleResult best;
    best.boundary.method = BoundaryMethod::best_oracle;
    best.boundary.n = scores.size();
    best.boundary.epsilon = std::nextafter(scores[order.front()], -std::numeric_limits<double>::infinity());
    best.f1 = metrics_from_counts(c).f1;

    std::size_t i = 0;
    while (i < order.size()) {
        const double value = scores[order[i]];
        while (i < order.size() && scores[order[i]] == value) {
            if (labels[order[i]] != 0) {
                --c.tp;
                ++c.fn;
            } else {
                --c.fp;
                ++c.tn;
            }
            ++i;
        }
        const double eps = i < order.size() ? threshold_between(value, scores[order[i]]) : value;
        const double f1 = metrics_from_counts(c).f1;
        if (f1 >= best.f1) {
            best.f1 = f1;
            best.boundary.epsilon = eps;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Boundary record

inline constexpr std::string_view boundary_header = "a2log-boundary v1";

inline void save_boundary(std::ostream& out, const DecisionBoundary& b)
{
    std::ostringstream eps;
    eps.precision(17);
    eps << b.epsilon;
    out << boundary_header << '\n'
        << "method=" << to_string(b.method) << '\n'
        << "epsilon=" << eps.str() << '\n'
        << "epsilon_hex=" << std::hexfloat << b.epsilon << std::defaultfloat << '\n';
    out.precision(17);
    out << "p=" << b.p << '\n'
        << "beta=" << b.beta << '\n'
        << "alpha=" << b.alpha << '\n'
        << "n=" << b.n << '\n'
        << "seed=" << b.seed << '\n'
        << "checkpoint=" << b.checkpoint << '\n';
}

inline DecisionBoundary load_boundary(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != boundary_header)
        throw FormatError("not a boundary record (expected header '" + std::string(boundary_header) + "')");
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("boundary line without '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("boundary record lacks key '" + key + "'");
        return it->second;
    };
    DecisionBoundary b;
    try {
        b.method = parse_boundary_method(need("method"));
        b.epsilon = std::strtod(need("epsilon_hex").c_str(), nullptr);
        b.p = std::stod(need("p"));
        b.beta = std::stod(need("beta"));
        b.alpha = std::stoull(need("alpha"));
        b.n = std::stoull(need("n"));
        b.seed = std::stoull(need("seed"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("malformed boundary record: ") + e.what());
    }
    b.checkpoint = need("checkpoint");
    if (!std::isfinite(b.epsilon)) throw FormatError("boundary epsilon is not finite");
    return b;
}

} // namespace a2log

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "a2log/corpus.hpp"
#include "a2log/error.hpp"
#include "a2log/random.hpp"
#include "a2log/scorer.hpp"
#include "a2log/tokenizer.hpp"

namespace a2log {

/// Normal messages of foreign services; label 1 during training.
struct StabilizationSet {
    std::vector<TokenSequence> sequences;
    std::vector<std::string> sources;
    std::size_t per_source_count = 0;
};

/// Samples `per_source` normal records uniformly without replacement from
/// every external corpus and frames them to length `u`. Corpora named like
/// `target_name` are rejected.
inline StabilizationSet build_stabilization_set(std::span<const LabeledDataset> corpora, std::size_t per_source,
                                                std::uint64_t seed, std::size_t u,
                                                const std::string& target_name = {})
{
    if (per_source == 0) throw ConfigError("stabilization class needs at least one message per source");
    if (corpora.empty()) throw ConfigError("stabilization class needs at least one external corpus");
    StabilizationSet set;
    set.per_source_count = per_source;
    for (std::size_t c = 0; c < corpora.size(); ++c) {
        const auto& corpus = corpora[c];
        if (!target_name.empty() && corpus.name == target_name)
            throw ConfigError("stabilization corpus '" + corpus.name + "' is the target corpus");
        std::vector<std::size_t> normal;
        for (std::size_t i = 0; i < corpus.records.size(); ++i)
            if (corpus.records[i].label == Label::normal) normal.push_back(i);
        if (normal.size() < per_source)
            throw ConfigError("stabilization corpus '" + corpus.name + "' has " + std::to_string(normal.size()) +
                              " normal records, " + std::to_string(per_source) + " required");
        // Partial Fisher-Yates: the first per_source entries are the sample.
        Rng rng(derive_seed(derive_seed(seed, "stabilization"), c));
        for (std::size_t i = 0; i < per_source; ++i) {
            const std::size_t j = i + rng.below(normal.size() - i);
            std::swap(normal[i], normal[j]);
            set.sequences.push_back(prepare_sequence(corpus.records[normal[i]].content, u));
        }
        set.sources.push_back(corpus.name);
    }
    return set;
}

struct TrainConfig {
    std::size_t batch_size = 1024;
    double learning_rate = 1e-4;
    double weight_decay = 5e-5;
    double target_avg_loss = 0.01;
    std::size_t max_epochs = 50;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool decoupled_weight_decay = true;

    void validate() const
    {
        if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
        if (!(target_avg_loss > 0.0)) throw ConfigError("train: target_avg_loss must be positive");
        if (max_epochs == 0) throw ConfigError("train: max_epochs must be at least 1");
    }
};

enum class StopReason { loss_target, max_epochs };

inline const char* to_string(StopReason r) noexcept
{
    return r == StopReason::loss_target ? "loss-target" : "max-epochs";
}

struct TrainReport {
    std::size_t epochs_run = 0;
    double final_avg_loss = 0.0;
    std::vector<double> loss_curve;
    StopReason stop_reason = StopReason::max_epochs;
};

// ---------------------------------------------------------------------------
// Class-balanced sampling

struct SampleRef {
    bool stabilization = false;
    std::size_t index = 0;

    friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

using Batch = std::vector<SampleRef>;

inline std::size_t batches_per_epoch(std::size_t n_normal, std::size_t n_stab, std::size_t batch_size)
{
    return (n_normal + n_stab + batch_size - 1) / batch_size;
}

/// Batches of one epoch. Every slot picks a class with probability 1/2 and
/// then an element of that class uniformly, with replacement.
inline std::vector<Batch> weighted_epoch_stream(std::size_t n_normal, std::size_t n_stab, std::size_t batch_size,
                                                std::uint64_t seed, std::size_t epoch = 0)
{
    if (n_normal == 0 || n_stab == 0) throw ConfigError("weighted sampler needs both classes to be non-empty");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    Rng rng(derive_seed(derive_seed(seed, "sampler"), epoch));
    std::vector<Batch> out(batches_per_epoch(n_normal, n_stab, batch_size));
    for (auto& batch : out) {
        batch.resize(batch_size);
        for (auto& slot : batch) {
            slot.stabilization = rng.bernoulli(0.5);
            slot.index = rng.below(slot.stabilization ? n_stab : n_normal);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adam with decoupled weight decay over a flat parameter vector.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t n, const TrainConfig& cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, std::span<const double> grads)
    {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const double lr = cfg_.learning_rate;
        const double wd = cfg_.weight_decay;
        for (std::size_t i = 0; i < params.size(); ++i) {
            double g = grads[i];
            if (!cfg_.decoupled_weight_decay) g += wd * params[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
            if (cfg_.decoupled_weight_decay) params[i] -= lr * wd * params[i];
            params[i] -= lr * update;
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    TrainConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

struct TrainResult {
    ModelParameters params;
    TrainReport report;
};

using EpochCallback = std::function<void(std::size_t epoch, double avg_loss)>;

/// Trains the scorer on normal target sequences (label 0) against the
/// stabilization class (label 1). Both inputs are encoded, framed id
/// sequences over a vocabulary of `vocab_size` tokens.
inline TrainResult train(std::span<const EncodedSequence> normal, std::span<const EncodedSequence> stab,
                         std::size_t vocab_size, const EncoderConfig& enc_cfg, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {})
{
    cfg.validate();
    enc_cfg.validate();
    for (const auto& s : normal)
        if (s.label != 0) throw ConfigError("target training sequences must carry label 0");
    for (const auto& s : stab)
        if (s.label != 1) throw ConfigError("stabilization sequences must carry label 1");
    TrainResult out{init_parameters(enc_cfg, vocab_size), {}};
    AdamOptimizer adam(out.params.values.size(), cfg);
    std::vector<std::vector<TokenId>> batch_ids;
    std::vector<int> batch_labels;
    const std::uint64_t dropout_root = derive_seed(cfg.seed, "dropout");
    Workspace ws;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto batches = weighted_epoch_stream(normal.size(), stab.size(), cfg.batch_size, cfg.seed, epoch);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            batch_ids.clear();
            batch_labels.clear();
            for (const auto& slot : batches[b]) {
                const auto& seq = slot.stabilization ? stab[slot.index] : normal[slot.index];
                batch_ids.push_back(seq.ids);
                batch_labels.push_back(seq.label);
            }
            const std::uint64_t step_seed = derive_seed(derive_seed(dropout_root, epoch), b);
            const std::string where = "epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(b + 1);
            LossAndGradient lg;
            try {
                lg = loss_and_gradient(out.params, batch_ids, batch_labels, Mode::train, step_seed, ws);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at " + where + ": " + e.what());
            }
            if (!std::isfinite(lg.loss)) throw NumericError("training diverged at " + where);
            adam.step(out.params.values, lg.gradient.values);
            epoch_loss += lg.loss;
        }
        const double avg = epoch_loss / static_cast<double>(batches.size());
        out.report.loss_curve.push_back(avg);
        out.report.epochs_run = epoch + 1;
        out.report.final_avg_loss = avg;
        if (on_epoch) on_epoch(epoch + 1, avg);
        if (avg <= cfg.target_avg_loss) {
            out.report.stop_reason = StopReason::loss_target;
            return out;
        }
    }
    out.report.stop_reason = StopReason::max_epochs;
    return out;
}

} // namespace a2log

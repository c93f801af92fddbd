#pragma once

// Glue between the corpus, tokenizer, trainer and boundary modules: turning
// datasets into encoded training material, training a model and
// calibrating its boundaries.

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "a2log/boundary.hpp"
#include "a2log/config.hpp"
#include "a2log/corpus.hpp"
#include "a2log/scorer.hpp"
#include "a2log/tokenizer.hpp"
#include "a2log/trainer.hpp"

namespace a2log {

/// Frames the content of every record to length u.
inline std::vector<TokenSequence> prepare_dataset(const LabeledDataset& ds, std::size_t u)
{
    std::vector<TokenSequence> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(prepare_sequence(r.content, u));
    return out;
}

/// Encodes every record; the sequence label is the record label.
inline std::vector<EncodedSequence> encode_dataset(const LabeledDataset& ds, const Vocabulary& vocab, std::size_t u)
{
    std::vector<EncodedSequence> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records)
        out.push_back({vocab.encode(prepare_sequence(r.content, u)), r.label == Label::abnormal ? 1 : 0});
    return out;
}

struct TrainingData {
    Vocabulary vocab;
    std::vector<EncodedSequence> normal; // label 0
    std::vector<EncodedSequence> stab;   // label 1
};

/// Builds the vocabulary over the normal training records and the
/// stabilization class, then encodes both.
inline TrainingData prepare_training_data(const LabeledDataset& train_split, const StabilizationSet& stab,
                                          std::size_t u)
{
    if (train_split.count(Label::abnormal) != 0)
        throw ConfigError("training split contains abnormal records");
    auto sequences = prepare_dataset(train_split, u);
    const std::size_t n_normal = sequences.size();
    sequences.insert(sequences.end(), stab.sequences.begin(), stab.sequences.end());
    TrainingData data{Vocabulary::build(sequences), {}, {}};
    data.normal.reserve(n_normal);
    data.stab.reserve(stab.sequences.size());
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (i < n_normal)
            data.normal.push_back({data.vocab.encode(sequences[i]), 0});
        else
            data.stab.push_back({data.vocab.encode(sequences[i]), 1});
    }
    return data;
}

struct TrainedModel {
    ModelParameters params;
    Vocabulary vocab;
    TrainReport report;
    std::vector<std::string> stabilization_sources;
};

/// Samples the stabilization class from `externals`, builds the vocabulary
/// and trains a scorer on `train_split`. Seeds come from `cfg`.
inline TrainedModel train_model(const LabeledDataset& train_split, std::span<const LabeledDataset> externals,
                                const RunConfig& cfg, const EpochCallback& on_epoch = {},
                                TrainingData* data_out = nullptr)
{
    cfg.validate();
    const auto seeds = stage_seeds(cfg.seed);
    const auto stab = build_stabilization_set(externals, cfg.stabilization_per_source, seeds.stabilization,
                                              cfg.encoder.u, train_split.name);
    auto data = prepare_training_data(train_split, stab, cfg.encoder.u);
    auto result = train(data.normal, data.stab, data.vocab.size(), cfg.encoder, cfg.train, on_epoch);
    TrainedModel model{std::move(result.params), data.vocab, std::move(result.report), stab.sources};
    if (data_out) *data_out = std::move(data);
    return model;
}

inline std::vector<std::vector<TokenId>> id_lists(std::span<const EncodedSequence> seqs)
{
    std::vector<std::vector<TokenId>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(s.ids);
    return out;
}

inline double mean_of(std::span<const double> v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// A2Log boundary from the augmented training distribution.
inline DecisionBoundary calibrate_a2log(const ModelParameters& params, std::span<const EncodedSequence> train_normal,
                                        const AugmentationConfig& aug, const BoundaryConfig& bcfg,
                                        std::size_t threads = 1, ScoreDistribution* dist_out = nullptr)
{
    auto dist = score_distribution(train_normal, params, aug, threads);
    auto b = a2log_boundary(dist, bcfg);
    b.alpha = aug.alpha;
    b.seed = aug.seed;
    if (dist_out) *dist_out = std::move(dist);
    return b;
}

/// 3-sigma boundary from un-augmented training scores.
inline DecisionBoundary calibrate_three_sigma(const ModelParameters& params,
                                              std::span<const EncodedSequence> train_normal, std::size_t threads = 1,
                                              ScoreDistribution* scores_out = nullptr)
{
    if (train_normal.empty()) throw ConfigError("three-sigma boundary needs training sequences");
    ScoreDistribution scores{score_sequences(params, id_lists(train_normal), threads)};
    auto b = three_sigma_boundary(scores);
    if (scores_out) *scores_out = std::move(scores);
    return b;
}

} // namespace a2log

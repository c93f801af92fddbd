#pragma once

#include <cstddef>
#include <span>

namespace a2log {

/// Confusion counts with the anomaly as the positive class.
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Zero-denominator ratios are defined as 0.
inline Metrics metrics_from_counts(const ConfusionCounts& c)
{
    Metrics m;
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

inline ConfusionCounts count_confusion(std::span<const int> labels, std::span<const int> predictions)
{
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool actual = labels[i] != 0;
        const bool predicted = predictions[i] != 0;
        if (actual && predicted) ++c.tp;
        else if (!actual && predicted) ++c.fp;
        else if (!actual) ++c.tn;
        else ++c.fn;
    }
    return c;
}

} // namespace a2log

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "a2log/error.hpp"
#include "a2log/random.hpp"

namespace a2log {

enum class Label : std::uint8_t { normal = 0, abnormal = 1 };

struct LogRecord {
    std::size_t index = 0;   // line position in the source file, 0-based
    std::string content;
    Label label = Label::normal;
    std::string source;
    std::string alert;       // label field for abnormal lines, empty otherwise
};

struct LabeledDataset {
    std::string name;
    std::vector<LogRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    std::size_t count(Label l) const noexcept
    {
        return static_cast<std::size_t>(std::count_if(
            records.begin(), records.end(), [l](const LogRecord& r) { return r.label == l; }));
    }
};

struct SplitSpec {
    double train_fraction = 0.1;
    std::uint64_t seed = 0;
};

enum class DatasetFormat { labeled_hpc, plain_normal };

namespace detail {

inline bool is_space(char c) noexcept
{
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

inline std::string_view trim(std::string_view s) noexcept
{
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

} // namespace detail

struct ParsedLine {
    Label label = Label::normal;
    std::string content;
    std::string alert;
};

/// Parses one line of the labeled HPC format: `<label> <content...>` where
/// the label field is "-" for normal messages and an alert tag otherwise.
inline ParsedLine parse_labeled_log_line(std::string_view line)
{
    std::string_view rest = detail::trim(line);
    if (rest.empty()) throw MalformedLineError("empty log line");

    std::size_t end = 0;
    while (end < rest.size() && !detail::is_space(rest[end])) ++end;
    const std::string_view field = rest.substr(0, end);
    const std::string_view content = detail::trim(rest.substr(end));
    if (content.empty())
        throw MalformedLineError("log line has no content after label field '" + std::string(field) + "'");

    ParsedLine out;
    out.label = field == "-" ? Label::normal : Label::abnormal;
    out.content = std::string(content);
    if (out.label == Label::abnormal) out.alert = std::string(field);
    return out;
}

struct LoadOptions {
    std::size_t max_lines = 0; // 0 = read the whole file
};

struct LoadResult {
    LabeledDataset dataset;
    std::size_t lines_read = 0;
    std::size_t skipped = 0;
};

inline LoadResult load_dataset(std::istream& in, std::string name, DatasetFormat format,
                               const LoadOptions& options = {})
{
    LoadResult result;
    result.dataset.name = std::move(name);
    std::string line;
    std::size_t lineno = 0;
    while ((options.max_lines == 0 || lineno < options.max_lines) && std::getline(in, line)) {
        const std::size_t index = lineno++;
        if (format == DatasetFormat::plain_normal) {
            const auto content = detail::trim(line);
            if (content.empty()) {
                ++result.skipped;
                continue;
            }
            result.dataset.records.push_back(
                {index, std::string(content), Label::normal, result.dataset.name, {}});
            continue;
        }
        try {
            auto parsed = parse_labeled_log_line(line);
            result.dataset.records.push_back({index, std::move(parsed.content), parsed.label,
                                              result.dataset.name, std::move(parsed.alert)});
        } catch (const MalformedLineError&) {
            ++result.skipped;
        }
    }
    if (in.bad()) throw IoError("read failure in dataset '" + result.dataset.name + "'");
    result.lines_read = lineno;
    return result;
}

inline LoadResult load_dataset(const std::string& path, DatasetFormat format,
                               const LoadOptions& options = {})
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    return load_dataset(in, path, format, options);
}

/// Writes records in the labeled HPC format. Abnormal records without an
/// alert tag are written with the tag "ALERT".
inline void write_labeled(std::ostream& out, const LabeledDataset& ds)
{
    for (const auto& r : ds.records) {
        if (r.label == Label::normal)
            out << "- ";
        else
            out << (r.alert.empty() ? std::string("ALERT") : r.alert) << ' ';
        out << r.content << '\n';
    }
}

struct Split {
    LabeledDataset train;
    LabeledDataset test;
};

/// Number of training records for a fraction of `normal_count`, rounded down.
inline std::size_t train_count(double fraction, std::size_t normal_count)
{
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    const double exact = fraction * static_cast<double>(normal_count);
    return static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
}

/// Train = the first floor(f * #normal) normal records in file order. Every
/// other record, including anomalies that occur before the cutoff, goes to
/// test in file order.
inline Split chronological_split(const LabeledDataset& ds, const SplitSpec& spec)
{
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train fraction must lie in (0, 1)");
    const std::size_t normals = ds.count(Label::normal);
    if (normals == 0) throw ConfigError("dataset '" + ds.name + "' has no normal records");
    const std::size_t n_train = train_count(spec.train_fraction, normals);
    if (n_train == 0) throw ConfigError("train fraction selects zero training records");

    Split out;
    out.train.name = ds.name + "#train";
    out.test.name = ds.name + "#test";
    out.train.records.reserve(n_train);
    out.test.records.reserve(ds.size() - n_train);
    std::size_t taken = 0;
    for (const auto& r : ds.records) {
        if (taken < n_train && r.label == Label::normal) {
            out.train.records.push_back(r);
            ++taken;
        } else {
            out.test.records.push_back(r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SynthConfig {
    std::size_t n_templates = 50;
    std::size_t n_anomaly_templates = 10;
    std::size_t n_lines = 20000;
    double anomaly_rate = 0.08;
    std::uint64_t seed = 1;
    std::string name = "synthetic";
};

namespace detail {

enum class SlotKind { word, number, hex, digit };

struct Slot {
    SlotKind kind = SlotKind::word;
    std::string text;
    std::string separator = " ";
};

struct Template {
    std::vector<Slot> slots;
    std::string alert;

    std::string skeleton() const
    {
        std::string s;
        for (const auto& slot : slots) {
            switch (slot.kind) {
            case SlotKind::word: s += slot.text; break;
            case SlotKind::number: s += "<num>"; break;
            case SlotKind::hex: s += "<hex>"; break;
            case SlotKind::digit: s += "<digit>"; break;
            }
            s += slot.separator;
        }
        return s;
    }
};

/// Pronounceable pseudo-words; each seed yields its own lexicon.
class WordFactory {
public:
    explicit WordFactory(Rng& rng) : rng_(rng) {}

    std::string fresh()
    {
        static constexpr std::string_view consonants = "bcdfghjklmnprstvwz";
        static constexpr std::string_view vowels = "aeiou";
        for (;;) {
            std::string w;
            const auto syllables = rng_.between(2, 4);
            for (std::int64_t i = 0; i < syllables; ++i) {
                w += consonants[rng_.below(consonants.size())];
                w += vowels[rng_.below(vowels.size())];
            }
            if (used_.insert(w).second) return w;
        }
    }

    /// Keeps `w` from ever being produced by `fresh`.
    void reserve(std::string w) { used_.insert(std::move(w)); }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

/// Vocabulary shared by every synthetic service. Each corpus uses a seeded
/// subset in its normal templates; its anomaly templates draw on the rest,
/// which other services may log as routine messages.
inline constexpr std::string_view system_lexicon[] = {
    "error", "failed", "kernel", "interrupt", "timeout", "machine", "check", "node", "link", "socket",
    "memory", "cache", "parity", "disk", "block", "device", "driver", "retry", "reset", "signal",
    "process", "thread", "lock", "queue", "buffer", "packet", "route", "session", "user", "auth",
    "denied", "granted", "mount", "fault", "panic", "trap", "power", "fan", "temperature", "voltage",
    "clock", "sync", "job", "task", "scheduler", "daemon", "service", "config", "update", "network",
    "channel", "port", "address", "register", "bus", "controller", "storage", "volume", "file", "write",
};

inline constexpr std::size_t lexicon_share = 30;

struct WordSource {
    std::vector<std::string> shared; // drawn from the system lexicon
    std::vector<std::string> pool;   // private pseudo-words, grown on demand
    std::size_t pool_target = 0;
    double shared_rate = 0.5;
};

inline std::string draw_word(Rng& rng, WordFactory& words, WordSource& src)
{
    if (!src.shared.empty() && rng.bernoulli(src.shared_rate)) return src.shared[rng.below(src.shared.size())];
    if (src.pool.size() < src.pool_target && (src.pool.empty() || rng.bernoulli(0.6)))
        src.pool.push_back(words.fresh());
    return src.pool[rng.below(src.pool.size())];
}

inline Template make_template(Rng& rng, WordFactory& words, WordSource& src)
{
    static constexpr std::string_view separators[] = {" ", " ", " ", ": ", ".", "/", ", "};
    Template t;
    const auto length = rng.between(3, 8);
    bool has_variable = false;
    for (std::int64_t i = 0; i < length; ++i) {
        Slot slot;
        const double u = rng.uniform();
        if (i > 0 && u < 0.15) {
            slot.kind = SlotKind::number;
            has_variable = true;
        } else if (i > 0 && u < 0.22) {
            slot.kind = SlotKind::hex;
            has_variable = true;
        } else if (i > 0 && u < 0.27) {
            slot.kind = SlotKind::digit;
            has_variable = true;
        } else {
            slot.kind = SlotKind::word;
            slot.text = draw_word(rng, words, src);
        }
        slot.separator = std::string(separators[rng.below(std::size(separators))]);
        t.slots.push_back(std::move(slot));
    }
    if (!has_variable) t.slots.push_back({SlotKind::number, {}, " "});
    t.slots.back().separator.clear();
    return t;
}

inline std::string render(const Template& t, Rng& rng)
{
    static constexpr std::string_view hex_digits = "0123456789abcdef";
    std::string out;
    for (const auto& slot : t.slots) {
        switch (slot.kind) {
        case SlotKind::word: out += slot.text; break;
        case SlotKind::number: out += std::to_string(rng.between(10, 99999)); break;
        case SlotKind::hex:
            out += "0x";
            for (int k = 0; k < 8; ++k) out += hex_digits[rng.below(16)];
            break;
        case SlotKind::digit: out += std::to_string(rng.between(0, 9)); break;
        }
        out += slot.separator;
    }
    return out;
}

} // namespace detail

/// Generates a labeled corpus from fixed message templates. Normal and
/// anomalous templates use disjoint vocabularies: each takes part of its
/// words from a disjoint share of a common system lexicon and the rest from
/// private pseudo-words. Variable slots receive random numbers, hex literals
/// or single digits. The output is a pure function of the config.
inline LabeledDataset generate_synthetic_corpus(const SynthConfig& cfg)
{
    if (cfg.n_templates < 2) throw ConfigError("synthetic corpus needs at least 2 normal templates");
    if (!(cfg.anomaly_rate >= 0.0 && cfg.anomaly_rate < 1.0))
        throw ConfigError("anomaly rate must lie in [0, 1)");
    if (cfg.anomaly_rate > 0.0 && cfg.n_anomaly_templates == 0)
        throw ConfigError("positive anomaly rate requires anomaly templates");

    Rng rng(derive_seed(cfg.seed, "synth/templates"));
    detail::WordFactory words(rng);
    for (auto w : detail::system_lexicon) words.reserve(std::string(w));

    std::vector<std::string> hosts;
    const std::string host_stem = words.fresh();
    for (int i = 0; i < 8; ++i) hosts.push_back(host_stem + std::to_string(i));

    // Partition the system lexicon into this service's routine words and
    // the words that only show up when something goes wrong.
    std::vector<std::string> lexicon(std::begin(detail::system_lexicon), std::end(detail::system_lexicon));
    for (std::size_t i = 0; i < detail::lexicon_share; ++i)
        std::swap(lexicon[i], lexicon[i + rng.below(lexicon.size() - i)]);
    detail::WordSource normal_words{{lexicon.begin(), lexicon.begin() + detail::lexicon_share},
                                    {}, 3 * cfg.n_templates, 0.4};
    detail::WordSource anomaly_words{{lexicon.begin() + detail::lexicon_share, lexicon.end()},
                                     {}, 0, 1.0};

    std::vector<detail::Template> normal;
    std::vector<detail::Template> anomalous;
    for (std::size_t i = 0; i < cfg.n_templates; ++i) normal.push_back(detail::make_template(rng, words, normal_words));
    for (std::size_t i = 0; i < cfg.n_anomaly_templates; ++i) {
        auto t = detail::make_template(rng, words, anomaly_words);
        std::string tag = words.fresh();
        std::transform(tag.begin(), tag.end(), tag.begin(),
                       [](unsigned char c) { return static_cast<char>(c - 'a' + 'A'); });
        t.alert = std::move(tag);
        anomalous.push_back(std::move(t));
    }

    std::set<std::string> skeletons;
    for (const auto& t : normal) skeletons.insert(t.skeleton());
    for (const auto& t : anomalous)
        if (skeletons.count(t.skeleton()))
            throw ConfigError("normal and anomaly templates overlap: " + t.skeleton());

    // Mildly skewed template frequencies, every template remains common.
    std::vector<double> cumulative;
    double total = 0.0;
    for (std::size_t i = 0; i < normal.size(); ++i) {
        total += 1.0 / std::sqrt(static_cast<double>(i + 1));
        cumulative.push_back(total);
    }

    Rng lines(derive_seed(cfg.seed, "synth/lines"));
    LabeledDataset ds;
    ds.name = cfg.name;
    ds.records.reserve(cfg.n_lines);
    std::uint64_t timestamp = 1117838570 + (cfg.seed % 100000) * 1000;
    for (std::size_t i = 0; i < cfg.n_lines; ++i) {
        timestamp += lines.below(3);
        LogRecord r;
        r.index = i;
        r.source = cfg.name;
        const detail::Template* t;
        if (lines.bernoulli(cfg.anomaly_rate)) {
            t = &anomalous[lines.below(anomalous.size())];
            r.label = Label::abnormal;
            r.alert = t->alert;
        } else {
            const double x = lines.uniform() * total;
            const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
            t = &normal[std::min<std::size_t>(it - cumulative.begin(), normal.size() - 1)];
        }
        r.content = std::to_string(timestamp) + ' ' + hosts[lines.below(hosts.size())] + ' ' +
                    detail::render(*t, lines);
        ds.records.push_back(std::move(r));
    }
    return ds;
}

} // namespace a2log

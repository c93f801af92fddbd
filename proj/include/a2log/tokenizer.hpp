#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "a2log/error.hpp"

namespace a2log {

using TokenId = std::int32_t;

namespace special {
inline constexpr std::string_view pad = "[PAD]";
inline constexpr std::string_view cls = "[CLS]";
inline constexpr std::string_view mask = "[MASK]";
inline constexpr std::string_view hex = "[HEX]";
inline constexpr std::string_view num = "[NUM]";

inline constexpr TokenId pad_id = 0;
inline constexpr TokenId cls_id = 1;
inline constexpr TokenId mask_id = 2;
inline constexpr TokenId hex_id = 3;
inline constexpr TokenId num_id = 4;

/// Reserved tokens in id order.
inline constexpr std::array<std::string_view, 5> all = {pad, cls, mask, hex, num};

inline bool is_special(std::string_view token) noexcept
{
    for (auto s : all)
        if (s == token) return true;
    return false;
}
} // namespace special

/// Tokens of one message after framing: `[CLS]` first, `[PAD]` suffix,
/// exactly `u` entries.
struct TokenSequence {
    std::vector<std::string> tokens;
    std::size_t origin_length = 0; // [CLS] plus content tokens kept, before padding

    std::size_t size() const noexcept { return tokens.size(); }
};

inline bool is_separator(char c) noexcept
{
    switch (c) {
    case '.': case ',': case ':': case '/':
    case ' ': case '\t': case '\r': case '\n': case '\v': case '\f':
        return true;
    default:
        return false;
    }
}

/// Splits on '.', ',', ':', '/' and whitespace, dropping empty fragments.
inline std::vector<std::string> tokenize_content(std::string_view content)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= content.size(); ++i) {
        if (i == content.size() || is_separator(content[i])) {
            if (i > start) out.emplace_back(content.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline bool is_hex_digit(char c) noexcept
{
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

/// `0x`/`0X` followed by hex digits, or at least 8 hex digits containing a letter.
inline bool is_hex_literal(std::string_view t) noexcept
{
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
        for (char c : t.substr(2))
            if (!is_hex_digit(c)) return false;
        return true;
    }
    if (t.size() < 8) return false;
    bool letter = false;
    for (char c : t) {
        if (!is_hex_digit(c)) return false;
        letter = letter || (c > '9');
    }
    return letter;
}

/// All-digit token whose value is at least 10.
inline bool is_large_number(std::string_view t) noexcept
{
    if (t.empty()) return false;
    for (char c : t)
        if (c < '0' || c > '9') return false;
    const auto first = t.find_first_not_of('0');
    if (first == std::string_view::npos) return false;
    return t.size() - first >= 2;
}

inline std::vector<std::string> normalize_tokens(std::vector<std::string> tokens)
{
    for (auto& t : tokens) {
        if (is_hex_literal(t))
            t = special::hex;
        else if (is_large_number(t))
            t = special::num;
    }
    return tokens;
}

inline TokenSequence frame_sequence(std::span<const std::string> tokens, std::size_t u)
{
    if (u < 2) throw ConfigError("sequence length must be at least 2");
    TokenSequence seq;
    seq.tokens.reserve(u);
    seq.tokens.emplace_back(special::cls);
    for (std::size_t i = 0; i < tokens.size() && seq.tokens.size() < u; ++i)
        seq.tokens.push_back(tokens[i]);
    seq.origin_length = seq.tokens.size();
    seq.tokens.resize(u, std::string(special::pad));
    return seq;
}

/// tokenize, normalize and frame in one step.
inline TokenSequence prepare_sequence(std::string_view content, std::size_t u)
{
    return frame_sequence(normalize_tokens(tokenize_content(content)), u);
}

class Vocabulary {
public:
    Vocabulary()
    {
        for (auto s : special::all) add(std::string(s));
    }

    /// Specials plus every non-special token in first-occurrence order.
    static Vocabulary build(std::span<const TokenSequence> sequences)
    {
        if (sequences.empty()) throw ConfigError("vocabulary needs at least one sequence");
        Vocabulary v;
        for (const auto& seq : sequences)
            for (const auto& t : seq.tokens)
                if (!v.index_.contains(t)) v.add(t);
        return v;
    }

    std::size_t size() const noexcept { return words_.size(); }

    bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

    /// Id of `token`, or the [MASK] id when out of vocabulary.
    TokenId id(const std::string& token) const
    {
        const auto it = index_.find(token);
        return it == index_.end() ? special::mask_id : it->second;
    }

    const std::string& word(TokenId id) const
    {
        if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
            throw ConfigError("token id out of range: " + std::to_string(id));
        return words_[static_cast<std::size_t>(id)];
    }

    std::vector<TokenId> encode(const TokenSequence& seq) const
    {
        std::vector<TokenId> ids;
        ids.reserve(seq.size());
        for (const auto& t : seq.tokens) ids.push_back(id(t));
        return ids;
    }

    std::vector<std::string> decode(std::span<const TokenId> ids) const
    {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (auto i : ids) out.push_back(word(i));
        return out;
    }

    const std::vector<std::string>& words() const noexcept { return words_; }

    static constexpr std::string_view header = "a2log-vocab v1";

    void save(std::ostream& out) const
    {
        out << header << '\n';
        for (std::size_t i = 0; i < words_.size(); ++i) out << i << '\t' << words_[i] << '\n';
    }

    static Vocabulary load(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line) || line != header)
            throw FormatError("not a vocabulary file (expected header '" + std::string(header) + "')");
        std::vector<std::string> words;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw FormatError("vocabulary line without tab: " + line);
            std::size_t id = 0;
            try {
                id = std::stoul(line.substr(0, tab));
            } catch (const std::exception&) {
                throw FormatError("bad vocabulary id: " + line);
            }
            if (id != words.size()) throw FormatError("vocabulary ids must be dense and ordered");
            words.push_back(line.substr(tab + 1));
        }
        return from_words(std::move(words));
    }

    static Vocabulary from_words(std::vector<std::string> words)
    {
        if (words.size() < special::all.size()) throw FormatError("vocabulary lacks the reserved tokens");
        for (std::size_t i = 0; i < special::all.size(); ++i)
            if (words[i] != special::all[i]) throw FormatError("reserved token mismatch at id " + std::to_string(i));
        Vocabulary v;
        for (std::size_t i = special::all.size(); i < words.size(); ++i) {
            if (v.index_.contains(words[i])) throw FormatError("duplicate vocabulary token: " + words[i]);
            v.add(std::move(words[i]));
        }
        return v;
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

private:
    void add(std::string token)
    {
        index_.emplace(token, static_cast<TokenId>(words_.size()));
        words_.push_back(std::move(token));
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

} // namespace a2log

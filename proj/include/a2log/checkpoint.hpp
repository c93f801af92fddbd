#pragma once

// Binary model container. All integers and floats are little-endian:
//
//   "A2LG"  u16 version
//   config:     u32 u, d, ff_hidden, n_layers, n_heads; f64 dropout; u64 seed
//   vocabulary: u32 count, then count x (u32 length, bytes)
//   directory:  u32 count, then count x (u16 length, name bytes, u32 rows, u32 cols)
//   data:       f64 values of every tensor, in directory order

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "a2log/error.hpp"
#include "a2log/scorer.hpp"
#include "a2log/tokenizer.hpp"

namespace a2log {

inline constexpr std::array<char, 4> checkpoint_magic = {'A', '2', 'L', 'G'};
inline constexpr std::uint16_t checkpoint_version = 1;

struct Checkpoint {
    ModelParameters params;
    Vocabulary vocab;
};

namespace detail {

class LeWriter {
public:
    explicit LeWriter(std::ostream& out) : out_(out) {}

    template <class T>
    void uint(T v)
    {
        char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out_.write(buf, sizeof(T));
    }

    void f64(double v)
    {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        uint(bits);
    }

    void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
    std::ostream& out_;
};

class LeReader {
public:
    explicit LeReader(std::istream& in) : in_(in) {}

    template <class T>
    T uint(const char* what)
    {
        unsigned char buf[sizeof(T)];
        read(reinterpret_cast<char*>(buf), sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    double f64(const char* what)
    {
        const auto bits = uint<std::uint64_t>(what);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string bytes(std::size_t n, const char* what)
    {
        std::string s(n, '\0');
        read(s.data(), n, what);
        return s;
    }

private:
    void read(char* dst, std::size_t n, const char* what)
    {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }

    std::istream& in_;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what)
{
    if (v > 0xffffffffu) throw ConfigError(std::string(what) + " does not fit the checkpoint format");
    return static_cast<std::uint32_t>(v);
}

} // namespace detail

inline void save_checkpoint(std::ostream& out, const ModelParameters& params, const Vocabulary& vocab)
{
    if (params.vocab_size != vocab.size())
        throw ConfigError("parameters cover " + std::to_string(params.vocab_size) + " tokens, vocabulary has " +
                          std::to_string(vocab.size()));
    detail::LeWriter w(out);
    w.bytes(std::string_view(checkpoint_magic.data(), checkpoint_magic.size()));
    w.uint(checkpoint_version);

    const auto& c = params.config;
    w.uint(detail::checked_u32(c.u, "u"));
    w.uint(detail::checked_u32(c.d, "d"));
    w.uint(detail::checked_u32(c.ff_hidden, "ff_hidden"));
    w.uint(detail::checked_u32(c.n_layers, "n_layers"));
    w.uint(detail::checked_u32(c.n_heads, "n_heads"));
    w.f64(c.dropout);
    w.uint(c.seed);

    w.uint(detail::checked_u32(vocab.size(), "vocabulary size"));
    for (const auto& word : vocab.words()) {
        w.uint(detail::checked_u32(word.size(), "token length"));
        w.bytes(word);
    }

    w.uint(detail::checked_u32(params.layout.size(), "tensor count"));
    for (const auto& t : params.layout) {
        if (t.name.size() > 0xffff) throw ConfigError("tensor name too long");
        w.uint(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name);
        w.uint(detail::checked_u32(t.rows, "tensor rows"));
        w.uint(detail::checked_u32(t.cols, "tensor cols"));
    }
    for (double v : params.values) w.f64(v);
    if (!out) throw IoError("failed to write checkpoint");
}

inline Checkpoint load_checkpoint(std::istream& in)
{
    detail::LeReader r(in);
    const auto magic = r.bytes(checkpoint_magic.size(), "magic");
    if (magic != std::string_view(checkpoint_magic.data(), checkpoint_magic.size()))
        throw FormatError("not an a2log checkpoint (bad magic)");
    const auto version = r.uint<std::uint16_t>("version");
    if (version != checkpoint_version)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(checkpoint_version) + ")");

    EncoderConfig cfg;
    cfg.u = r.uint<std::uint32_t>("config");
    cfg.d = r.uint<std::uint32_t>("config");
    cfg.ff_hidden = r.uint<std::uint32_t>("config");
    cfg.n_layers = r.uint<std::uint32_t>("config");
    cfg.n_heads = r.uint<std::uint32_t>("config");
    cfg.dropout = r.f64("config");
    cfg.seed = r.uint<std::uint64_t>("config");
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint holds an invalid encoder config: ") + e.what());
    }

    const auto n_words = r.uint<std::uint32_t>("vocabulary");
    std::vector<std::string> words;
    words.reserve(n_words);
    for (std::uint32_t i = 0; i < n_words; ++i) words.push_back(r.bytes(r.uint<std::uint32_t>("vocabulary"), "vocabulary"));
    Checkpoint ck{{}, Vocabulary::from_words(std::move(words))};

    ck.params = ModelParameters::zeros(cfg, ck.vocab.size());
    const auto n_tensors = r.uint<std::uint32_t>("directory");
    if (n_tensors != ck.params.layout.size())
        throw FormatError("shape mismatch: checkpoint lists " + std::to_string(n_tensors) + " tensors, config implies " +
                          std::to_string(ck.params.layout.size()));
    for (const auto& expected : ck.params.layout) {
        const auto name = r.bytes(r.uint<std::uint16_t>("directory"), "directory");
        const std::size_t rows = r.uint<std::uint32_t>("directory");
        const std::size_t cols = r.uint<std::uint32_t>("directory");
        if (name != expected.name || rows != expected.rows || cols != expected.cols)
            throw FormatError("shape mismatch: tensor '" + name + "' is " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", expected '" + expected.name + "' " +
                              std::to_string(expected.rows) + "x" + std::to_string(expected.cols));
    }
    for (auto& v : ck.params.values) v = r.f64("tensor data");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint data");
    if (!ck.params.all_finite()) throw FormatError("checkpoint contains non-finite parameters");
    return ck;
}

inline void save_checkpoint(const std::string& path, const ModelParameters& params, const Vocabulary& vocab)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    save_checkpoint(out, params, vocab);
}

inline Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return load_checkpoint(in);
}

/// Throws unless `params` was trained over exactly `vocab`.
inline void require_matching_vocabulary(const ModelParameters& params, const Vocabulary& vocab)
{
    if (params.vocab_size != vocab.size() || params.layout.empty() || params.layout[0].rows != vocab.size())
        throw FormatError("shape mismatch: embedding has " + std::to_string(params.vocab_size) +
                          " rows, vocabulary has " + std::to_string(vocab.size()) + " tokens");
}

// ---------------------------------------------------------------------------
// Content fingerprints

inline std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
    return hex.str();
}

inline std::string read_file_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file_bytes(path)); }

/// Fingerprint of a model: the hash of its serialized checkpoint.
inline std::string checkpoint_fingerprint(const ModelParameters& params, const Vocabulary& vocab)
{
    std::ostringstream out(std::ios::binary);
    save_checkpoint(out, params, vocab);
    return sha256_hex(out.str());
}

} // namespace a2log

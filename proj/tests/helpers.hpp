#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "a2log/random.hpp"
#include "a2log/scorer.hpp"

namespace a2log::test {

inline EncoderConfig tiny_config(std::size_t u = 4, std::size_t d = 8, std::size_t layers = 1, std::size_t heads = 2)
{
    EncoderConfig c;
    c.u = u;
    c.d = d;
    c.ff_hidden = 2 * d;
    c.n_layers = layers;
    c.n_heads = heads;
    c.dropout = 0.1;
    c.seed = 11;
    return c;
}

/// Random framed id sequences: [CLS], 1..u-1 content ids, then [PAD].
inline std::vector<std::vector<TokenId>> random_sequences(std::size_t n, std::size_t u, std::size_t vocab,
                                                          std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<std::vector<TokenId>> out(n, std::vector<TokenId>(u, special::pad_id));
    for (auto& s : out) {
        s[0] = special::cls_id;
        const auto len = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(u) - 1));
        for (std::size_t i = 1; i <= len; ++i)
            s[i] = static_cast<TokenId>(rng.between(special::mask_id, static_cast<std::int64_t>(vocab) - 1));
    }
    return out;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        path_ = std::filesystem::temp_directory_path() /
                ("a2log-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter()
    {
        static int n = 0;
        return n;
    }

    std::filesystem::path path_;
};

} // namespace a2log::test

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace a2log {

/// 64-bit mixing function (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives an independent stream seed from a parent seed and a label.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept
{
    return mix64(parent ^ mix64(hash_tag(tag)));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept
{
    return mix64(parent ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Engine plus platform-independent sampling helpers. The standard
/// distributions are implementation-defined, so outputs that must be
/// reproducible byte-for-byte go through these instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n)
    {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi)
    {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

} // namespace a2log

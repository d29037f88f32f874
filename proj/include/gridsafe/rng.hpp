#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace gridsafe {

namespace detail {

// FNV-1a; std::hash is not stable across standard libraries.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Independent named random streams derived from one scenario seed.
///
/// Each stream is a separate mt19937_64 keyed on (seed, stream name), so
/// draws made by one subsystem never shift the sequence seen by another.
/// Integer draws use rejection sampling on the raw engine output rather
/// than std::uniform_int_distribution, whose algorithm is unspecified and
/// differs between standard libraries.
class RngStreams {
public:
    explicit RngStreams(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Uniform integer in [0, n). n must be at least 1.
    std::uint64_t draw(std::string_view stream, std::uint64_t n) {
        auto& eng = engine(stream);
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    (std::numeric_limits<std::uint64_t>::max() % n);
        std::uint64_t x = eng();
        while (x >= limit) x = eng();
        return x % n;
    }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double unit(std::string_view stream) {
        return static_cast<double>(engine(stream)() >> 11) * 0x1.0p-53;
    }

    /// True with probability p. p <= 0 and p >= 1 consume no draw.
    bool bernoulli(std::string_view stream, double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return unit(stream) < p;
    }

private:
    std::mt19937_64& engine(std::string_view stream) {
        auto it = streams_.find(stream);
        if (it == streams_.end()) {
            const auto key = detail::splitmix64(seed_ ^ detail::fnv1a64(stream));
            it = streams_.emplace(std::string(stream), std::mt19937_64(key)).first;
        }
        return it->second;
    }

    std::uint64_t seed_;
    std::map<std::string, std::mt19937_64, std::less<>> streams_;
};

}  // namespace gridsafe

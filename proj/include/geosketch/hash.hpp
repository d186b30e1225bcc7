#pragma once

#include <cstdint>
#include <string_view>

namespace geosketch {

// Finalizer from splitmix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Compile-time tag for seed derivation.
constexpr std::uint64_t tag(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return mix64(h);
}

// Keyed hash of a sequence of 64-bit words. Treated as a random oracle.
constexpr std::uint64_t hash_words(std::uint64_t key) noexcept { return mix64(key); }

template <class... Rest>
constexpr std::uint64_t hash_words(std::uint64_t key, std::uint64_t first, Rest... rest) noexcept {
    std::uint64_t h = mix64(key ^ mix64(first ^ 0x5851F42D4C957F2DULL));
    if constexpr (sizeof...(rest) == 0) {
        return h;
    } else {
        return hash_words(h, static_cast<std::uint64_t>(rest)...);
    }
}

template <class... Words>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Words... words) noexcept {
    return hash_words(seed, static_cast<std::uint64_t>(words)...);
}

// Uniform in the open interval (0,1).
constexpr double unit_open(std::uint64_t h) noexcept {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

// Uniform integer in [0, m) via multiply-shift.
inline std::uint64_t fast_range(std::uint64_t h, std::uint64_t m) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(h) * m) >> 64);
}

// Bernoulli(rate) decision from a hash, rate in [0,1].
inline bool hash_below(std::uint64_t h, double rate) noexcept {
    if (rate >= 1.0) return true;
    if (rate <= 0.0) return false;
    return unit_open(h) < rate;
}

struct Fingerprint {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    friend constexpr bool operator==(const Fingerprint&, const Fingerprint&) = default;
    friend constexpr auto operator<=>(const Fingerprint&, const Fingerprint&) = default;
};

// Streaming 128-bit keyed hash over words; two independently keyed lanes.
class WordHasher {
public:
    constexpr explicit WordHasher(std::uint64_t key) noexcept
        : a_(mix64(key ^ 0xA0761D6478BD642FULL)), b_(mix64(key ^ 0xE7037ED1A0B428DBULL)) {}

    constexpr void add(std::uint64_t w) noexcept {
        a_ = mix64(a_ ^ mix64(w + 0x8EBC6AF09C88C6E3ULL));
        b_ = mix64(b_ + mix64(w ^ 0x589965CC75374CC3ULL) * 3ULL);
        ++count_;
    }

    constexpr Fingerprint finish() const noexcept {
        return {mix64(a_ ^ (count_ * 0x1D8E4E27C47D124FULL)), mix64(b_ + count_)};
    }

private:
    std::uint64_t a_;
    std::uint64_t b_;
    std::uint64_t count_ = 0;
};

inline std::uint64_t fold(const Fingerprint& f) noexcept { return mix64(f.hi ^ mix64(f.lo)); }

}  // namespace geosketch

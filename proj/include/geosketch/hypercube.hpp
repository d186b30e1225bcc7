#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hash.hpp"
#include "stable.hpp"

namespace geosketch {

constexpr std::uint32_t kMaxDimension = 1u << 16;

inline bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Packed bit vector in {0,1}^d. Coordinate k lives in word k/64, bit k%64.
class HypercubePoint {
public:
    HypercubePoint() = default;
    explicit HypercubePoint(std::uint32_t d) : d_(d), words_((d + 63) / 64, 0) {
        if (!is_power_of_two(d) || d > kMaxDimension)
            throw std::invalid_argument("dimension must be a power of two up to 2^16");
    }

    static HypercubePoint from_bits(std::string_view bits) {
        HypercubePoint x(static_cast<std::uint32_t>(bits.size()));
        for (std::size_t k = 0; k < bits.size(); ++k) {
            if (bits[k] == '1')
                x.set(static_cast<std::uint32_t>(k), true);
            else if (bits[k] != '0')
                throw std::invalid_argument("bit string must contain only 0 and 1");
        }
        return x;
    }

    static HypercubePoint from_word(std::uint32_t d, std::uint64_t w) {
        HypercubePoint x(d);
        if (d < 64) w &= (std::uint64_t{1} << d) - 1;
        x.words_[0] = w;
        return x;
    }

    std::uint32_t dim() const { return d_; }
    const std::vector<std::uint64_t>& words() const { return words_; }
    std::vector<std::uint64_t>& words() { return words_; }

    bool bit(std::uint32_t k) const { return (words_[k >> 6] >> (k & 63)) & 1u; }
    void set(std::uint32_t k, bool v) {
        std::uint64_t m = std::uint64_t{1} << (k & 63);
        if (v)
            words_[k >> 6] |= m;
        else
            words_[k >> 6] &= ~m;
    }
    void flip(std::uint32_t k) { words_[k >> 6] ^= std::uint64_t{1} << (k & 63); }

    HypercubePoint operator^(const HypercubePoint& o) const {
        check_same(o);
        HypercubePoint r = *this;
        for (std::size_t w = 0; w < words_.size(); ++w) r.words_[w] ^= o.words_[w];
        return r;
    }

    std::uint32_t popcount() const {
        std::uint32_t c = 0;
        for (auto w : words_) c += static_cast<std::uint32_t>(std::popcount(w));
        return c;
    }

    void check_same(const HypercubePoint& o) const {
        if (d_ != o.d_) throw std::invalid_argument("dimension mismatch");
    }

    // Lowercase hex, most significant word first.
    std::string to_hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        std::uint32_t per_word = d_ >= 64 ? 16 : std::max<std::uint32_t>(1, d_ / 4);
        for (std::size_t w = words_.size(); w-- > 0;) {
            for (std::uint32_t k = per_word; k-- > 0;) out.push_back(digits[(words_[w] >> (4 * k)) & 15]);
        }
        return out;
    }

    static std::uint32_t dim_for_hex_length(std::size_t len) {
        if (len == 0) throw std::invalid_argument("empty point");
        if (len == 1) return 4;
        return static_cast<std::uint32_t>(std::bit_ceil(4 * len));
    }

    static HypercubePoint from_hex(std::string_view hex, std::uint32_t d) {
        HypercubePoint x(d);
        std::uint32_t per_word = d >= 64 ? 16 : std::max<std::uint32_t>(1, d / 4);
        if (hex.size() != per_word * x.words_.size())
            throw std::invalid_argument("hex length does not match dimension " + std::to_string(d));
        std::size_t pos = 0;
        for (std::size_t w = x.words_.size(); w-- > 0;) {
            std::uint64_t v = 0;
            for (std::uint32_t k = 0; k < per_word; ++k, ++pos) {
                char c = hex[pos];
                int nib;
                if (c >= '0' && c <= '9')
                    nib = c - '0';
                else if (c >= 'a' && c <= 'f')
                    nib = c - 'a' + 10;
                else if (c >= 'A' && c <= 'F')
                    nib = c - 'A' + 10;
                else
                    throw std::invalid_argument("invalid hex digit");
                v = (v << 4) | static_cast<std::uint64_t>(nib);
            }
            if (d < 64 && (v >> d) != 0) throw std::invalid_argument("hex value exceeds dimension");
            x.words_[w] = v;
        }
        return x;
    }

    friend bool operator==(const HypercubePoint&, const HypercubePoint&) = default;
    friend auto operator<=>(const HypercubePoint& a, const HypercubePoint& b) {
        if (auto c = a.d_ <=> b.d_; c != 0) return c;
        return a.words_ <=> b.words_;
    }

private:
    std::uint32_t d_ = 0;
    std::vector<std::uint64_t> words_;
};

inline std::uint32_t hamming_distance(const HypercubePoint& x, const HypercubePoint& y) {
    x.check_same(y);
    std::uint32_t c = 0;
    for (std::size_t w = 0; w < x.words().size(); ++w)
        c += static_cast<std::uint32_t>(std::popcount(x.words()[w] ^ y.words()[w]));
    return c;
}

inline std::uint64_t point_hash(std::uint64_t key, const HypercubePoint& x) {
    std::uint64_t h = hash_words(key, x.dim());
    for (auto w : x.words()) h = hash_words(h, w);
    return h;
}

using PointList = std::vector<HypercubePoint>;

// Multiset over the hypercube with nonnegative multiplicities.
class PointMultiset {
public:
    void add(const HypercubePoint& x, std::int64_t count = 1) {
        auto& c = counts_[x];
        c += count;
        if (c == 0) counts_.erase(x);
    }
    std::int64_t multiplicity(const HypercubePoint& x) const {
        auto it = counts_.find(x);
        return it == counts_.end() ? 0 : it->second;
    }
    std::int64_t total() const {
        std::int64_t t = 0;
        for (const auto& [x, c] : counts_) t += c;
        return t;
    }
    std::size_t distinct() const { return counts_.size(); }
    bool nonnegative() const {
        for (const auto& [x, c] : counts_)
            if (c < 0) return false;
        return true;
    }
    const std::map<HypercubePoint, std::int64_t>& entries() const { return counts_; }

    // Every point repeated by its multiplicity, in ascending point order.
    PointList expand() const {
        PointList out;
        for (const auto& [x, c] : counts_)
            for (std::int64_t k = 0; k < c; ++k) out.push_back(x);
        return out;
    }

    static PointMultiset of(const PointList& xs) {
        PointMultiset m;
        for (const auto& x : xs) m.add(x);
        return m;
    }

private:
    std::map<HypercubePoint, std::int64_t> counts_;
};

// Random map from R^d_in to {0,1}^d_out: bit b is g_b(floor((<x, z_b> - h_b) / R)).
class EmbeddingFamily {
public:
    EmbeddingFamily(std::uint32_t d_in, std::uint32_t d_out, double p, double R, std::uint64_t seed)
        : d_in_(d_in), d_out_(d_out), p_(p), R_(R), seed_(seed), z_(static_cast<std::size_t>(d_in) * d_out),
          shift_(d_out) {
        if (d_in == 0) throw std::invalid_argument("input dimension must be positive");
        if (!is_power_of_two(d_out) || d_out > kMaxDimension)
            throw std::invalid_argument("output dimension must be a power of two up to 2^16");
        if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("p must lie in [1,2]");
        if (!(R > 0.0)) throw std::invalid_argument("scale must be positive");
        for (std::uint32_t b = 0; b < d_out; ++b) {
            for (std::uint32_t i = 0; i < d_in; ++i) {
                std::uint64_t h1 = hash_words(seed, tag("embed-z"), b, i);
                double z;
                if (p == 1.0) {
                    z = unit_open(h1) < 1.0 / d_in ? 1.0 : 0.0;
                } else {
                    double r = unit_open(h1);
                    double theta = (unit_open(hash_words(seed, tag("embed-theta"), b, i)) - 0.5) * std::numbers::pi;
                    z = stable_cms(p, r, theta);
                }
                z_[static_cast<std::size_t>(b) * d_in + i] = z;
            }
            shift_[b] = unit_open(hash_words(seed, tag("embed-shift"), b)) * R;
        }
    }

    std::uint32_t d_in() const { return d_in_; }
    std::uint32_t d_out() const { return d_out_; }
    double p() const { return p_; }
    double scale() const { return R_; }
    std::uint64_t seed() const { return seed_; }
    double z(std::uint32_t b, std::uint32_t i) const { return z_[static_cast<std::size_t>(b) * d_in_ + i]; }
    double shift(std::uint32_t b) const { return shift_[b]; }

    HypercubePoint embed(const std::vector<double>& x) const {
        if (x.size() != d_in_) throw std::invalid_argument("input dimension mismatch");
        HypercubePoint out(d_out_);
        for (std::uint32_t b = 0; b < d_out_; ++b) {
            double s = 0;
            for (std::uint32_t i = 0; i < d_in_; ++i) s += x[i] * z(b, i);
            auto bucket = static_cast<std::int64_t>(std::floor((s - shift_[b]) / R_));
            std::uint64_t g = hash_words(seed_, tag("embed-sign"), b, static_cast<std::uint64_t>(bucket));
            out.set(b, g >> 63);
        }
        return out;
    }

private:
    std::uint32_t d_in_, d_out_;
    double p_, R_;
    std::uint64_t seed_;
    std::vector<double> z_;
    std::vector<double> shift_;
};

inline HypercubePoint embed_point(const EmbeddingFamily& fam, const std::vector<double>& x) { return fam.embed(x); }

inline double lp_distance(const std::vector<double>& x, const std::vector<double>& y, double p) {
    if (x.size() != y.size()) throw std::invalid_argument("dimension mismatch");
    double s = 0;
    if (std::isinf(p)) {
        for (std::size_t i = 0; i < x.size(); ++i) s = std::max(s, std::fabs(x[i] - y[i]));
        return s;
    }
    for (std::size_t i = 0; i < x.size(); ++i) s += std::pow(std::fabs(x[i] - y[i]), p);
    return std::pow(s, 1.0 / p);
}

// Scale R for a point set: 2 * max l_inf distance for p = 1, t_p * max l_p distance otherwise.
inline double embedding_scale(const std::vector<std::vector<double>>& pts, double p, double t_p = 8.0) {
    double far = 0;
    double q = p == 1.0 ? std::numeric_limits<double>::infinity() : p;
    for (std::size_t a = 0; a < pts.size(); ++a)
        for (std::size_t b = a + 1; b < pts.size(); ++b) far = std::max(far, lp_distance(pts[a], pts[b], q));
    if (far == 0) far = 1;
    return (p == 1.0 ? 2.0 : t_p) * far;
}

}  // namespace geosketch

template <>
struct std::hash<geosketch::HypercubePoint> {
    std::size_t operator()(const geosketch::HypercubePoint& x) const noexcept {
        return geosketch::point_hash(0x51ED2701A3C5B9E7ULL, x);
    }
};

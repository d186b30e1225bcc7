#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bytes.hpp"
#include "count_sketch.hpp"
#include "exact.hpp"
#include "hash.hpp"
#include "stable.hpp"

namespace geosketch {

// Two-sided standard normal quantile z with Pr[|N| > z] = delta.
inline double normal_two_sided_quantile(double delta) {
    double lo = 0, hi = 40;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (std::erfc(mid / std::sqrt(2.0)) > delta)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

class CauchyL1Sketch {
public:
    CauchyL1Sketch() = default;
    CauchyL1Sketch(std::uint32_t size, std::uint64_t seed) : seed_(seed), acc_(size) {
        if (size == 0) throw std::invalid_argument("Cauchy sketch needs at least one accumulator");
    }

    static std::uint32_t size_for(double eps, double delta) {
        return static_cast<std::uint32_t>(std::ceil(8.0 * std::log(2.0 / delta) / (eps * eps)));
    }

    double coefficient(std::uint32_t j, std::uint64_t key) const {
        return cauchy_from_unit(unit_open(hash_words(seed_, j, key)));
    }

    void update(std::uint64_t key, double delta) {
        if (delta == 0) return;
        for (std::uint32_t j = 0; j < acc_.size(); ++j) acc_[j].add(coefficient(j, key) * delta);
    }

    // median |acc| / median |Cauchy|, and median |Cauchy| = tan(pi/4) = 1.
    double estimate() const {
        std::vector<double> v(acc_.size());
        for (std::size_t j = 0; j < acc_.size(); ++j) v[j] = std::fabs(acc_[j].value());
        return median_inplace(v);
    }

    void merge(const CauchyL1Sketch& o) {
        if (seed_ != o.seed_ || acc_.size() != o.acc_.size()) throw std::invalid_argument("incompatible sketches");
        for (std::size_t j = 0; j < acc_.size(); ++j) acc_[j].merge(o.acc_[j]);
    }
    friend bool operator==(const CauchyL1Sketch&, const CauchyL1Sketch&) = default;

    std::uint32_t size() const { return static_cast<std::uint32_t>(acc_.size()); }

    void write(ByteWriter& w) const {
        w.put_magic("GSC1");
        w.put<std::uint16_t>(1);
        w.put(size());
        w.put(seed_);
        for (const auto& a : acc_) a.write(w);
    }
    static CauchyL1Sketch read(ByteReader& r) {
        r.expect_magic("GSC1");
        if (r.get<std::uint16_t>() != 1) throw std::runtime_error("unsupported Cauchy sketch version");
        auto s = r.get<std::uint32_t>();
        auto seed = r.get<std::uint64_t>();
        CauchyL1Sketch sk(s, seed);
        for (auto& a : sk.acc_) a = FixedSum::read(r);
        return sk;
    }

private:
    std::uint64_t seed_ = 0;
    std::vector<FixedSum> acc_;
};

inline double l1_estimate(const CauchyL1Sketch& sk) { return sk.estimate(); }

// Indyk median sketch for small p; accumulators are exact wide sums so values far
// outside double range are kept.
class SmallPStableSketch {
public:
    SmallPStableSketch() = default;
    SmallPStableSketch(std::uint32_t t, double p, std::uint64_t seed) : p_(p), seed_(seed), acc_(t) {
        if (t == 0) throw std::invalid_argument("stable sketch needs at least one accumulator");
        if (!(p > 0 && p < 1)) throw std::invalid_argument("p must lie in (0,1)");
    }

    // Accumulators needed so that the sample median lands within a factor 1 +- eps
    // with probability 1 - delta, from the exact law of |D_p|.
    static std::uint32_t size_for(double p, double eps, double delta) {
        double lm = log_median_abs_stable(p);
        double up = detail::abs_stable_cdf_log(p, lm + std::log1p(eps)) - 0.5;
        double down = 0.5 - detail::abs_stable_cdf_log(p, lm + std::log1p(-eps));
        double gap = std::min(up, down);
        double z = normal_two_sided_quantile(delta);
        return static_cast<std::uint32_t>(std::ceil(std::pow(z / (2 * gap), 2)));
    }

    double p() const { return p_; }
    std::uint32_t size() const { return static_cast<std::uint32_t>(acc_.size()); }

    // Adds delta * 2^log2_scale times the coefficient of key.
    void update_scaled(std::uint64_t key, double delta, double log2_scale) {
        if (delta == 0) return;
        int dsign = delta > 0 ? 1 : -1;
        double base = std::log2(std::fabs(delta)) + log2_scale;
        for (std::uint32_t j = 0; j < acc_.size(); ++j) {
            auto c = stable_coefficient(p_, hash_words(seed_, j), key);
            acc_[j].add(WideTerm::from_log2(c.sign * dsign, c.log_abs / std::numbers::ln2 + base));
        }
    }
    void update(std::uint64_t key, double delta) { update_scaled(key, delta, 0.0); }

    // Natural log of the estimate of the p-norm.
    double log_estimate() const {
        std::vector<double> v(acc_.size());
        for (std::size_t j = 0; j < acc_.size(); ++j) v[j] = acc_[j].log2_abs();
        if (std::all_of(v.begin(), v.end(), [](double x) { return std::isinf(x); }))
            return -std::numeric_limits<double>::infinity();
        return median_inplace(v) * std::numbers::ln2 - log_median_abs_stable(p_);
    }
    double estimate() const { return std::exp(log_estimate()); }

    void merge(const SmallPStableSketch& o) {
        if (seed_ != o.seed_ || p_ != o.p_ || acc_.size() != o.acc_.size())
            throw std::invalid_argument("incompatible sketches");
        for (std::size_t j = 0; j < acc_.size(); ++j) acc_[j].merge(o.acc_[j]);
    }
    friend bool operator==(const SmallPStableSketch&, const SmallPStableSketch&) = default;

    void write(ByteWriter& w) const {
        w.put_magic("GSPS");
        w.put<std::uint16_t>(1);
        w.put(size());
        w.put(p_);
        w.put(seed_);
        for (const auto& a : acc_) a.write(w);
    }
    static SmallPStableSketch read(ByteReader& r) {
        r.expect_magic("GSPS");
        if (r.get<std::uint16_t>() != 1) throw std::runtime_error("unsupported stable sketch version");
        auto t = r.get<std::uint32_t>();
        auto p = r.get<double>();
        auto seed = r.get<std::uint64_t>();
        SmallPStableSketch sk(t, p, seed);
        for (auto& a : sk.acc_) a = WideSum::read(r);
        return sk;
    }

private:
    double p_ = 0.5;
    std::uint64_t seed_ = 0;
    std::vector<WideSum> acc_;
};

inline double small_p_median_estimate(const SmallPStableSketch& sk) { return sk.estimate(); }

class ExpScaler {
public:
    explicit ExpScaler(std::uint64_t seed = 0) : seed_(seed) {}
    double variate(std::uint64_t index) const { return -std::log(unit_open(hash_words(seed_, index))); }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

inline double exp_variate(const ExpScaler& s, std::uint64_t index) { return s.variate(index); }

// l2 and l1 norms after zeroing the beta largest magnitudes (ties: smaller index first).
inline std::pair<double, double> tail_truncated_norms(const std::vector<double>& z, std::size_t beta) {
    std::vector<std::size_t> idx(z.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return std::fabs(z[a]) > std::fabs(z[b]); });
    double l2 = 0, l1 = 0;
    for (std::size_t k = beta; k < idx.size(); ++k) {
        double v = z[idx[k]];
        l2 += v * v;
        l1 += std::fabs(v);
    }
    return {std::sqrt(l2), l1};
}

struct L1SamplerShape {
    std::uint32_t rows = 7;
    std::uint32_t buckets = 64;
    std::uint32_t norm_size = 256;
    double gamma = 0.05;
};

// Precision sampler: z = x / t with t ~ Exp(1) per index, recovered by a Count-Sketch.
class L1Sampler {
public:
    L1Sampler() = default;
    L1Sampler(std::uint32_t universe_bits, std::uint64_t seed, L1SamplerShape shape = {})
        : bits_(universe_bits), gamma_(shape.gamma), scaler_(derive_seed(seed, tag("l1-exp"))),
          cs_(shape.rows, shape.buckets, derive_seed(seed, tag("l1-cs")), universe_bits),
          norm_(shape.norm_size, derive_seed(seed, tag("l1-norm"))) {}

    void update(std::uint64_t key, double delta) {
        if (delta == 0) return;
        cs_.update(key, delta / scaler_.variate(key));
        norm_.update(key, delta);
    }

    std::optional<std::uint64_t> sample() const {
        std::uint64_t universe = bits_ >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits_);
        auto cand = cs_.candidates(universe);
        if (cand.empty()) return std::nullopt;
        std::uint64_t best = 0;
        double z1 = -1, z2 = 0;
        for (auto key : cand) {
            double z = std::fabs(cs_.estimate(key));
            if (z > z1) {
                z2 = std::max(z2, z1);
                z1 = z;
                best = key;
            } else {
                z2 = std::max(z2, z);
            }
        }
        double norm = norm_.estimate();
        if (!(z1 > 0) || z1 < gamma_ * norm || z1 < (1 + gamma_) * z2) return std::nullopt;
        return best;
    }

    void merge(const L1Sampler& o) {
        cs_.merge(o.cs_);
        norm_.merge(o.norm_);
    }
    friend bool operator==(const L1Sampler& a, const L1Sampler& b) { return a.cs_ == b.cs_ && a.norm_ == b.norm_; }

    void write(ByteWriter& w) const {
        w.put_magic("GSL1");
        w.put<std::uint16_t>(1);
        w.put(bits_);
        w.put(gamma_);
        w.put(scaler_.seed());
        cs_.write(w);
        norm_.write(w);
    }
    static L1Sampler read(ByteReader& r) {
        r.expect_magic("GSL1");
        if (r.get<std::uint16_t>() != 1) throw std::runtime_error("unsupported sampler version");
        L1Sampler s;
        s.bits_ = r.get<std::uint32_t>();
        s.gamma_ = r.get<double>();
        s.scaler_ = ExpScaler(r.get<std::uint64_t>());
        s.cs_ = CountSketch::read(r);
        s.norm_ = CauchyL1Sketch::read(r);
        return s;
    }

private:
    std::uint32_t bits_ = 0;
    double gamma_ = 0.05;
    ExpScaler scaler_;
    CountSketch cs_;
    CauchyL1Sketch norm_;
};

inline std::optional<std::uint64_t> l1_sample(const L1Sampler& sk) { return sk.sample(); }

// Distinct-support estimator: nested subsampling levels, each a table of
// buckets with count, key-sum and fingerprint-sum, so single-key buckets are detectable.
class L0Sketch {
public:
    static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

    L0Sketch() = default;
    L0Sketch(std::uint32_t levels, std::uint32_t buckets, std::uint64_t seed, std::uint32_t cap = 512)
        : levels_(levels), buckets_(buckets), cap_(cap), seed_(seed),
          cells_(static_cast<std::size_t>(levels) * buckets) {
        if (levels == 0 || buckets == 0) throw std::invalid_argument("l0 sketch needs levels and buckets");
    }

    static L0Sketch for_universe(std::uint64_t max_support, std::uint64_t seed) {
        auto levels = static_cast<std::uint32_t>(std::ceil(std::log2(std::max<double>(2.0, max_support)))) + 2;
        return L0Sketch(levels, 4096, seed);
    }

    void update(std::uint64_t key, std::int64_t delta) {
        if (delta == 0) return;
        std::uint64_t h = hash_words(seed_, tag("l0-level"), key);
        std::uint32_t depth = std::min<std::uint32_t>(static_cast<std::uint32_t>(std::countl_zero(h)), levels_ - 1);
        std::uint64_t fp = fingerprint(key);
        std::uint64_t dm = mod_signed(delta);
        std::uint64_t term = mulmod(dm, fp);
        for (std::uint32_t eta = 0; eta <= depth; ++eta) {
            auto& c = cells_[static_cast<std::size_t>(eta) * buckets_ +
                             fast_range(hash_words(seed_, tag("l0-bucket"), eta, key), buckets_)];
            c.count += delta;
            c.key_sum += static_cast<__int128>(delta) * static_cast<__int128>(key);
            c.fp_sum = addmod(c.fp_sum, term);
        }
    }

    // Occupied-bucket count at a level: one per verified single-key bucket, two otherwise.
    std::uint64_t level_count(std::uint32_t eta) const {
        std::uint64_t count = 0;
        for (std::uint32_t b = 0; b < buckets_; ++b) {
            const auto& c = cells_[static_cast<std::size_t>(eta) * buckets_ + b];
            if (c.count == 0 && c.key_sum == 0 && c.fp_sum == 0) continue;
            count += pure(c) ? 1 : 2;
        }
        return count;
    }

    double estimate() const {
        for (std::uint32_t eta = 0; eta < levels_; ++eta) {
            std::uint64_t c = level_count(eta);
            if (c < cap_) return c == 0 ? 0.0 : 1.25 * std::ldexp(static_cast<double>(c), static_cast<int>(eta));
        }
        return 1.25 * std::ldexp(static_cast<double>(level_count(levels_ - 1)), static_cast<int>(levels_ - 1));
    }

    void merge(const L0Sketch& o) {
        if (seed_ != o.seed_ || cells_.size() != o.cells_.size()) throw std::invalid_argument("incompatible sketches");
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            cells_[k].count += o.cells_[k].count;
            cells_[k].key_sum += o.cells_[k].key_sum;
            cells_[k].fp_sum = addmod(cells_[k].fp_sum, o.cells_[k].fp_sum);
        }
    }
    friend bool operator==(const L0Sketch& a, const L0Sketch& b) {
        return a.seed_ == b.seed_ && a.levels_ == b.levels_ && a.buckets_ == b.buckets_ && a.cells_ == b.cells_;
    }

    void write(ByteWriter& w) const {
        w.put_magic("GSL0");
        w.put<std::uint16_t>(1);
        w.put(levels_);
        w.put(buckets_);
        w.put(cap_);
        w.put(seed_);
        for (const auto& c : cells_) {
            w.put(c.count);
            auto u = static_cast<unsigned __int128>(c.key_sum);
            w.put(static_cast<std::uint64_t>(u));
            w.put(static_cast<std::uint64_t>(u >> 64));
            w.put(c.fp_sum);
        }
    }
    static L0Sketch read(ByteReader& r) {
        r.expect_magic("GSL0");
        if (r.get<std::uint16_t>() != 1) throw std::runtime_error("unsupported l0 sketch version");
        auto levels = r.get<std::uint32_t>();
        auto buckets = r.get<std::uint32_t>();
        auto cap = r.get<std::uint32_t>();
        auto seed = r.get<std::uint64_t>();
        L0Sketch s(levels, buckets, seed, cap);
        for (auto& c : s.cells_) {
            c.count = r.get<std::int64_t>();
            auto lo = r.get<std::uint64_t>();
            auto hi = r.get<std::uint64_t>();
            c.key_sum = static_cast<__int128>((static_cast<unsigned __int128>(hi) << 64) | lo);
            c.fp_sum = r.get<std::uint64_t>();
        }
        return s;
    }

private:
    struct Cell {
        std::int64_t count = 0;
        __int128 key_sum = 0;
        std::uint64_t fp_sum = 0;
        friend bool operator==(const Cell&, const Cell&) = default;
    };

    static std::uint64_t addmod(std::uint64_t a, std::uint64_t b) {
        std::uint64_t s = a + b;
        return s >= kPrime ? s - kPrime : s;
    }
    static std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % kPrime);
    }
    static std::uint64_t mod_signed(std::int64_t v) {
        __int128 m = static_cast<__int128>(v) % static_cast<__int128>(kPrime);
        if (m < 0) m += kPrime;
        return static_cast<std::uint64_t>(m);
    }
    std::uint64_t fingerprint(std::uint64_t key) const { return hash_words(seed_, tag("l0-fp"), key) % kPrime; }

    bool pure(const Cell& c) const {
        if (c.count <= 0) return false;
        if (c.key_sum % c.count != 0) return false;
        __int128 k = c.key_sum / c.count;
        if (k < 0 || k > static_cast<__int128>(~std::uint64_t{0})) return false;
        return mulmod(mod_signed(c.count), fingerprint(static_cast<std::uint64_t>(k))) == c.fp_sum;
    }

    std::uint32_t levels_ = 0, buckets_ = 0, cap_ = 512;
    std::uint64_t seed_ = 0;
    std::vector<Cell> cells_;
};

inline double l0_estimate(const L0Sketch& sk) { return sk.estimate(); }

}  // namespace geosketch

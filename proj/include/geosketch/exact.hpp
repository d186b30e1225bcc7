#pragma once

// Order independent accumulators. Every term is rounded to a fixed grid before
// it is added, and integer addition is associative, so any permutation or
// split of an update stream gives the same bits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "bytes.hpp"

namespace geosketch {

// Signed fixed point with 64 fractional bits in a 128-bit integer.
// Terms are clamped to |v| <= 2^40.
class FixedSum {
public:
    static constexpr double kMaxTerm = 0x1.0p40;

    static __int128 quantize(double v) noexcept {
        if (!(v == v)) return 0;
        v = std::clamp(v, -kMaxTerm, kMaxTerm);
        return static_cast<__int128>(std::nearbyint(std::ldexp(v, 64)));
    }

    void add(double v) noexcept { raw_ = wrap_add(raw_, quantize(v)); }
    void add_raw(__int128 r) noexcept { raw_ = wrap_add(raw_, r); }
    void merge(const FixedSum& o) noexcept { raw_ = wrap_add(raw_, o.raw_); }

    double value() const noexcept { return std::ldexp(static_cast<double>(raw_), -64); }
    __int128 raw() const noexcept { return raw_; }
    bool zero() const noexcept { return raw_ == 0; }

    friend bool operator==(const FixedSum&, const FixedSum&) = default;

    void write(ByteWriter& w) const {
        auto u = static_cast<unsigned __int128>(raw_);
        w.put(static_cast<std::uint64_t>(u));
        w.put(static_cast<std::uint64_t>(u >> 64));
    }
    static FixedSum read(ByteReader& r) {
        auto lo = r.get<std::uint64_t>();
        auto hi = r.get<std::uint64_t>();
        FixedSum s;
        s.raw_ = static_cast<__int128>((static_cast<unsigned __int128>(hi) << 64) | lo);
        return s;
    }

private:
    static __int128 wrap_add(__int128 a, __int128 b) noexcept {
        return static_cast<__int128>(static_cast<unsigned __int128>(a) + static_cast<unsigned __int128>(b));
    }
    __int128 raw_ = 0;
};

// A term sign * mantissa * 2^exponent with a 53-bit mantissa and unbounded exponent.
struct WideTerm {
    int sign = 0;
    std::uint64_t mantissa = 0;
    std::int64_t exponent = 0;

    // Build from sign and log2 of the magnitude.
    static WideTerm from_log2(int sign, double log2_abs) noexcept {
        WideTerm t;
        if (sign == 0 || !std::isfinite(log2_abs)) return t;
        double e = std::floor(log2_abs);
        double frac = log2_abs - e;
        auto m = static_cast<std::uint64_t>(std::llround(std::exp2(frac) * 0x1.0p52));
        t.sign = sign > 0 ? 1 : -1;
        t.mantissa = m;
        t.exponent = static_cast<std::int64_t>(e) - 52;
        return t;
    }
};

// Exact sparse sum of WideTerms in balanced base 2^32: digits lie in [-2^31, 2^31),
// zero digits are not stored, which makes the representation unique.
class WideSum {
public:
    void add(const WideTerm& t) {
        if (t.sign == 0 || t.mantissa == 0) return;
        std::int64_t block = floor_div(t.exponent, 32);
        int shift = static_cast<int>(t.exponent - block * 32);
        unsigned __int128 v = static_cast<unsigned __int128>(t.mantissa) << shift;
        std::int64_t carry = 0;
        for (int k = 0; k < 3 || carry != 0; ++k) {
            std::int64_t chunk = k < 3 ? static_cast<std::int64_t>(static_cast<std::uint32_t>(v >> (32 * k))) : 0;
            std::int64_t inc = t.sign * chunk + carry;
            carry = 0;
            if (inc != 0) carry = add_digit(block + k, inc);
        }
    }

    void merge(const WideSum& o) {
        for (const auto& [b, dg] : o.digits_) {
            std::int64_t carry = add_digit(b, dg);
            for (std::int64_t k = b + 1; carry != 0; ++k) carry = add_digit(k, carry);
        }
    }

    bool zero() const noexcept { return digits_.empty(); }
    int sign() const noexcept {
        if (digits_.empty()) return 0;
        return digits_.back().second > 0 ? 1 : -1;
    }

    // log2 of the absolute value; -inf for zero.
    double log2_abs() const noexcept {
        if (digits_.empty()) return -std::numeric_limits<double>::infinity();
        std::int64_t top = digits_.back().first;
        long double acc = 0;
        for (std::size_t k = digits_.size(); k-- > 0;) {
            std::int64_t b = digits_[k].first;
            if (top - b > 3) break;
            acc += std::ldexp(static_cast<long double>(digits_[k].second), static_cast<int>(32 * (b - top)));
        }
        return static_cast<double>(std::log2(std::fabs(acc))) + 32.0 * static_cast<double>(top);
    }

    friend bool operator==(const WideSum&, const WideSum&) = default;

    void write(ByteWriter& w) const {
        w.put(static_cast<std::uint32_t>(digits_.size()));
        for (const auto& [b, dg] : digits_) {
            w.put(b);
            w.put(dg);
        }
    }
    static WideSum read(ByteReader& r) {
        WideSum s;
        auto n = r.get<std::uint32_t>();
        s.digits_.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) {
            auto b = r.get<std::int64_t>();
            auto dg = r.get<std::int32_t>();
            s.digits_.emplace_back(b, dg);
        }
        return s;
    }

private:
    static std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
        std::int64_t q = a / b;
        if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
        return q;
    }

    // Adds inc (|inc| < 2^34) to the digit at block b, normalizes, returns the carry.
    std::int64_t add_digit(std::int64_t b, std::int64_t inc) {
        auto it = std::lower_bound(digits_.begin(), digits_.end(), b,
                                   [](const auto& e, std::int64_t key) { return e.first < key; });
        std::int64_t cur = (it != digits_.end() && it->first == b) ? it->second : 0;
        std::int64_t v = cur + inc;
        std::int64_t carry = floor_div(v + (std::int64_t{1} << 31), std::int64_t{1} << 32);
        v -= carry * (std::int64_t{1} << 32);
        if (it != digits_.end() && it->first == b) {
            if (v == 0)
                digits_.erase(it);
            else
                it->second = static_cast<std::int32_t>(v);
        } else if (v != 0) {
            digits_.insert(it, {b, static_cast<std::int32_t>(v)});
        }
        return carry;
    }

    std::vector<std::pair<std::int64_t, std::int32_t>> digits_;
};

}  // namespace geosketch

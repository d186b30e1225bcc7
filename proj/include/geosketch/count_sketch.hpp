#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bytes.hpp"
#include "exact.hpp"
#include "hash.hpp"

namespace geosketch {

inline double median_inplace(std::vector<double>& v) {
    if (v.empty()) return 0.0;
    std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + m);
    return 0.5 * (lo + hi);
}

// Count-Sketch with optional identifier planes. With id_bits = W each cell keeps W
// extra accumulators holding sign * value * bit_b(key), so a cell dominated by one
// key reveals that key.
class CountSketch {
public:
    CountSketch() = default;
    CountSketch(std::uint32_t rows, std::uint32_t buckets, std::uint64_t seed, std::uint32_t id_bits = 0)
        : rows_(rows), buckets_(buckets), id_bits_(id_bits), seed_(seed),
          cells_(static_cast<std::size_t>(rows) * buckets * (1 + id_bits)) {
        if (rows == 0 || buckets == 0) throw std::invalid_argument("count-sketch needs rows and buckets");
        if (id_bits > 64) throw std::invalid_argument("at most 64 identifier bits");
    }

    // Shape meeting |x_hat - x|_inf <= eps |x_tail|_2 for vectors of length n.
    static CountSketch for_guarantee(double eps, std::uint64_t n, std::uint64_t seed, std::uint32_t id_bits = 0) {
        auto buckets = static_cast<std::uint32_t>(std::ceil(12.0 / (eps * eps)));
        auto rows = static_cast<std::uint32_t>(std::ceil(std::log2(std::max<double>(2.0, n)))) + 7;
        return CountSketch(rows, buckets, seed, id_bits);
    }

    std::uint32_t rows() const { return rows_; }
    std::uint32_t buckets() const { return buckets_; }
    std::uint32_t id_bits() const { return id_bits_; }
    std::uint64_t seed() const { return seed_; }

    std::uint32_t bucket(std::uint32_t r, std::uint64_t key) const {
        return static_cast<std::uint32_t>(fast_range(hash_words(seed_, r, key), buckets_));
    }
    bool negative(std::uint32_t r, std::uint64_t key) const { return hash_words(seed_ ^ 0x6A09E667F3BCC909ULL, r, key) >> 63; }

    void update(std::uint64_t key, double delta) {
        __int128 q = FixedSum::quantize(delta);
        if (q == 0) return;
        for (std::uint32_t r = 0; r < rows_; ++r) {
            __int128 s = negative(r, key) ? -q : q;
            FixedSum* cell = &cells_[index(r, bucket(r, key))];
            cell[0].add_raw(s);
            for (std::uint32_t b = 0; b < id_bits_; ++b)
                if ((key >> b) & 1u) cell[1 + b].add_raw(s);
        }
    }

    double row_estimate(std::uint32_t r, std::uint64_t key) const {
        double v = cells_[index(r, bucket(r, key))].value();
        return negative(r, key) ? -v : v;
    }

    double estimate(std::uint64_t key) const {
        std::vector<double> v(rows_);
        for (std::uint32_t r = 0; r < rows_; ++r) v[r] = row_estimate(r, key);
        return median_inplace(v);
    }

    // Keys read from identifier planes that hash back to the cell they were read from.
    std::vector<std::uint64_t> candidates(std::uint64_t universe) const {
        std::vector<std::uint64_t> out;
        if (id_bits_ == 0) return out;
        for (std::uint32_t r = 0; r < rows_; ++r) {
            for (std::uint32_t c = 0; c < buckets_; ++c) {
                const FixedSum* cell = &cells_[index(r, c)];
                __int128 total = cell[0].raw();
                if (total == 0) continue;
                unsigned __int128 mag = total < 0 ? -static_cast<unsigned __int128>(total) : total;
                std::uint64_t key = 0;
                for (std::uint32_t b = 0; b < id_bits_; ++b) {
                    __int128 pb = cell[1 + b].raw();
                    unsigned __int128 pm = pb < 0 ? -static_cast<unsigned __int128>(pb) : pb;
                    bool same_sign = (pb < 0) == (total < 0);
                    if (same_sign && pm > mag / 2) key |= std::uint64_t{1} << b;
                }
                if (key < universe && bucket(r, key) == c) out.push_back(key);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    void merge(const CountSketch& o) {
        check_compatible(o);
        for (std::size_t k = 0; k < cells_.size(); ++k) cells_[k].merge(o.cells_[k]);
    }

    bool same_shape(const CountSketch& o) const {
        return rows_ == o.rows_ && buckets_ == o.buckets_ && id_bits_ == o.id_bits_ && seed_ == o.seed_;
    }
    friend bool operator==(const CountSketch& a, const CountSketch& b) {
        return a.same_shape(b) && a.cells_ == b.cells_;
    }

    void write(ByteWriter& w) const {
        w.put_magic("GSCS");
        w.put<std::uint16_t>(1);
        w.put(rows_);
        w.put(buckets_);
        w.put(id_bits_);
        w.put(seed_);
        for (const auto& c : cells_) c.write(w);
    }
    static CountSketch read(ByteReader& r) {
        r.expect_magic("GSCS");
        if (r.get<std::uint16_t>() != 1) throw std::runtime_error("unsupported count-sketch version");
        auto rows = r.get<std::uint32_t>();
        auto buckets = r.get<std::uint32_t>();
        auto bits = r.get<std::uint32_t>();
        auto seed = r.get<std::uint64_t>();
        CountSketch s(rows, buckets, seed, bits);
        for (auto& c : s.cells_) c = FixedSum::read(r);
        return s;
    }

private:
    std::size_t index(std::uint32_t r, std::uint32_t c) const {
        return (static_cast<std::size_t>(r) * buckets_ + c) * (1 + id_bits_);
    }
    void check_compatible(const CountSketch& o) const {
        if (!same_shape(o)) throw std::invalid_argument("merging count-sketches of different shape or seed");
    }

    std::uint32_t rows_ = 0, buckets_ = 0, id_bits_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<FixedSum> cells_;
};

inline void cs_update(CountSketch& sk, std::uint64_t index, double delta) { sk.update(index, delta); }
inline double cs_estimate(const CountSketch& sk, std::uint64_t index) { return sk.estimate(index); }

}  // namespace geosketch

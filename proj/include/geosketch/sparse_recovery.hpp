#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hash.hpp"

namespace geosketch {

// Invertible lookup table over (key, payload, flag) entries with integer counts.
// Decoding peels pure cells and returns every entry when the support is small.
class SparseRecovery {
public:
    static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

    struct Entry {
        std::uint64_t key = 0;
        std::uint64_t payload = 0;
        std::int64_t count = 0;
        bool flag = false;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    SparseRecovery() = default;
    SparseRecovery(std::uint32_t rows, std::uint32_t cells, std::uint64_t seed)
        : rows_(rows), cells_(cells), seed_(seed), table_(static_cast<std::size_t>(rows) * cells) {
        if (rows == 0 || cells == 0) throw std::invalid_argument("lookup table needs rows and cells");
    }

    // flag must be the same for every update of a key.
    void update(std::uint64_t key, std::uint64_t payload, bool flag, std::int64_t delta) {
        if (delta == 0) return;
        std::uint64_t term = mulmod(mod_signed(delta), fingerprint(key));
        for (std::uint32_t r = 0; r < rows_; ++r) {
            auto& c = table_[index(r, key)];
            c.count += delta;
            c.key_sum += static_cast<__int128>(delta) * key;
            c.payload_sum += static_cast<__int128>(delta) * payload;
            c.flag_sum += flag ? delta : 0;
            c.fp_sum = addmod(c.fp_sum, term);
        }
    }

    bool empty() const {
        return std::all_of(table_.begin(), table_.end(), [](const Cell& c) { return c == Cell{}; });
    }

    // All entries with nonzero count sorted by key, or nullopt if peeling stalls.
    std::optional<std::vector<Entry>> decode() const {
        auto t = table_;
        std::vector<Entry> out;
        std::vector<std::size_t> queue;
        for (std::size_t k = 0; k < t.size(); ++k)
            if (pure(t[k], k)) queue.push_back(k);
        while (!queue.empty()) {
            std::size_t k = queue.back();
            queue.pop_back();
            if (!pure(t[k], k)) continue;
            const Cell c = t[k];
            Entry e{static_cast<std::uint64_t>(c.key_sum / c.count), static_cast<std::uint64_t>(c.payload_sum / c.count),
                    c.count, c.flag_sum != 0};
            out.push_back(e);
            std::uint64_t term = mulmod(mod_signed(e.count), fingerprint(e.key));
            for (std::uint32_t r = 0; r < rows_; ++r) {
                std::size_t j = index(r, e.key);
                auto& d = t[j];
                d.count -= e.count;
                d.key_sum -= static_cast<__int128>(e.count) * e.key;
                d.payload_sum -= static_cast<__int128>(e.count) * e.payload;
                d.flag_sum -= e.flag ? e.count : 0;
                d.fp_sum = addmod(d.fp_sum, kPrime - term);
                if (pure(d, j)) queue.push_back(j);
            }
        }
        if (!std::all_of(t.begin(), t.end(), [](const Cell& c) { return c == Cell{}; })) return std::nullopt;
        std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
        return out;
    }

    void merge(const SparseRecovery& o) {
        if (rows_ != o.rows_ || cells_ != o.cells_ || seed_ != o.seed_)
            throw std::invalid_argument("incompatible lookup tables");
        for (std::size_t k = 0; k < table_.size(); ++k) {
            auto& c = table_[k];
            const auto& d = o.table_[k];
            c.count += d.count;
            c.key_sum += d.key_sum;
            c.payload_sum += d.payload_sum;
            c.flag_sum += d.flag_sum;
            c.fp_sum = addmod(c.fp_sum, d.fp_sum);
        }
    }
    friend bool operator==(const SparseRecovery& a, const SparseRecovery& b) {
        return a.rows_ == b.rows_ && a.cells_ == b.cells_ && a.seed_ == b.seed_ && a.table_ == b.table_;
    }

private:
    struct Cell {
        std::int64_t count = 0;
        __int128 key_sum = 0;
        __int128 payload_sum = 0;
        std::int64_t flag_sum = 0;
        std::uint64_t fp_sum = 0;
        friend bool operator==(const Cell&, const Cell&) = default;
    };

    std::size_t index(std::uint32_t r, std::uint64_t key) const {
        return static_cast<std::size_t>(r) * cells_ + fast_range(hash_words(seed_, r, key), cells_);
    }
    std::uint64_t fingerprint(std::uint64_t key) const { return hash_words(seed_, tag("iblt-fp"), key) % kPrime; }

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

    bool pure(const Cell& c, std::size_t at) const {
        if (c.count == 0) return false;
        if (c.key_sum % c.count != 0 || c.payload_sum % c.count != 0) return false;
        if (c.flag_sum != 0 && c.flag_sum != c.count) return false;
        __int128 k = c.key_sum / c.count;
        if (k < 0 || k > static_cast<__int128>(~std::uint64_t{0})) return false;
        auto key = static_cast<std::uint64_t>(k);
        if (index(static_cast<std::uint32_t>(at / cells_), key) != at) return false;
        return mulmod(mod_signed(c.count), fingerprint(key)) == c.fp_sum;
    }

    std::uint32_t rows_ = 0, cells_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<Cell> table_;
};

}  // namespace geosketch

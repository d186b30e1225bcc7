#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hash.hpp"
#include "hypercube.hpp"
#include "json.hpp"

namespace geosketch {

struct NodeId {
    std::uint32_t depth = 0;
    Fingerprint fp;
    friend constexpr bool operator==(const NodeId&, const NodeId&) = default;
    friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
    std::uint64_t key() const { return hash_words(fold(fp), depth); }
};

// Random quadtree over {0,1}^d of depth h = log2(2d). Level j < h-1 queries 2^j
// sampled coordinates (0-based, with repetition); level h-1 queries all of them.
class QuadtreeSpec {
public:
    static QuadtreeSpec sample(std::uint32_t d, std::uint64_t seed) {
        check_dim(d);
        std::uint32_t h = depth_for(d);
        std::vector<std::vector<std::uint32_t>> levels;
        for (std::uint32_t j = 0; j + 2 <= h; ++j) {
            std::vector<std::uint32_t> coords(std::size_t{1} << j);
            for (std::size_t k = 0; k < coords.size(); ++k)
                coords[k] = static_cast<std::uint32_t>(fast_range(hash_words(seed, tag("quadtree-coord"), j, k), d));
            levels.push_back(std::move(coords));
        }
        return QuadtreeSpec(d, seed, std::move(levels));
    }

    QuadtreeSpec(std::uint32_t d, std::uint64_t seed, std::vector<std::vector<std::uint32_t>> levels)
        : d_(d), h_(depth_for(d)), seed_(seed), key_(derive_seed(seed, tag("quadtree-fingerprint"))),
          levels_(std::move(levels)) {
        check_dim(d);
        if (levels_.size() + 1 != h_) throw std::invalid_argument("wrong number of quadtree levels");
        for (std::size_t j = 0; j < levels_.size(); ++j) {
            if (levels_[j].size() != (std::size_t{1} << j)) throw std::invalid_argument("level has wrong width");
            for (auto c : levels_[j])
                if (c >= d) throw std::invalid_argument("coordinate out of range");
            for (auto c : levels_[j]) sequence_.push_back(c);
        }
    }

    std::uint32_t dim() const { return d_; }
    std::uint32_t depth() const { return h_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<std::vector<std::uint32_t>>& levels() const { return levels_; }

    // All node ids on the root-to-leaf path of x, depths 0..h.
    std::vector<NodeId> path(const HypercubePoint& x) const {
        check_point(x);
        std::vector<NodeId> out;
        out.reserve(h_ + 1);
        WordHasher hasher(key_);
        std::uint64_t partial = 0;
        std::uint32_t nbits = 0;
        auto push_bit = [&](bool b) {
            partial |= static_cast<std::uint64_t>(b) << (nbits & 63);
            ++nbits;
            if ((nbits & 63) == 0) {
                hasher.add(partial);
                partial = 0;
            }
        };
        auto emit = [&](std::uint32_t depth) {
            WordHasher snap = hasher;
            snap.add(partial);
            snap.add(nbits);
            snap.add(depth);
            out.push_back({depth, snap.finish()});
        };
        emit(0);
        std::size_t pos = 0;
        for (std::uint32_t i = 1; i < h_; ++i) {
            std::size_t end = (std::size_t{1} << i) - 1;
            for (; pos < end; ++pos) push_bit(x.bit(sequence_[pos]));
            emit(i);
        }
        for (std::uint32_t k = 0; k < d_; ++k) push_bit(x.bit(k));
        emit(h_);
        return out;
    }

    NodeId node_at_depth(const HypercubePoint& x, std::uint32_t i) const {
        if (i > h_) throw std::out_of_range("depth out of range");
        return path(x)[i];
    }

    std::uint32_t lca_depth(const HypercubePoint& x, const HypercubePoint& y) const {
        check_point(x);
        check_point(y);
        if (x == y) return h_;
        for (std::size_t q = 0; q < sequence_.size(); ++q) {
            if (x.bit(sequence_[q]) != y.bit(sequence_[q]))
                return static_cast<std::uint32_t>(std::bit_width(q + 1) - 1);
        }
        return h_ - 1;
    }

    nlohmann::json to_json() const { return {{"d", d_}, {"seed", seed_}}; }
    static QuadtreeSpec from_json(const nlohmann::json& j) {
        return sample(j.at("d").get<std::uint32_t>(), j.at("seed").get<std::uint64_t>());
    }

    static std::uint32_t depth_for(std::uint32_t d) { return static_cast<std::uint32_t>(std::bit_width(d)); }

private:
    static void check_dim(std::uint32_t d) {
        if (!is_power_of_two(d) || d > kMaxDimension) throw std::invalid_argument("d must be a power of two");
    }
    void check_point(const HypercubePoint& x) const {
        if (x.dim() != d_) throw std::invalid_argument("point dimension does not match tree");
    }

    std::uint32_t d_, h_;
    std::uint64_t seed_, key_;
    std::vector<std::vector<std::uint32_t>> levels_;
    std::vector<std::uint32_t> sequence_;
};

inline QuadtreeSpec sample_quadtree(std::uint32_t d, std::uint64_t seed) { return QuadtreeSpec::sample(d, seed); }

}  // namespace geosketch

template <>
struct std::hash<geosketch::NodeId> {
    std::size_t operator()(const geosketch::NodeId& v) const noexcept { return v.key(); }
};

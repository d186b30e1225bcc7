#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>

#include "hash.hpp"
#include "hypercube.hpp"
#include "quadtree.hpp"

namespace geosketch {

// log2 n, never below 1 so that tiny instances keep finite parameters.
inline double log2_floor1(std::uint64_t n) { return std::max(1.0, std::log2(static_cast<double>(std::max<std::uint64_t>(n, 1)))); }
inline std::uint32_t ceil_log2_floor1(std::uint64_t n) {
    return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::bit_width(std::max<std::uint64_t>(n, 1) - 1)));
}

// Hashes parent and child node ids into [m] with m = min(n^3, 2^31).
class UniverseMap {
public:
    UniverseMap() = default;
    UniverseMap(std::uint64_t n, std::uint64_t seed) : seed_(seed) {
        double cube = std::pow(static_cast<double>(std::max<std::uint64_t>(n, 2)), 3.0);
        m_ = cube >= 2147483648.0 ? (std::uint64_t{1} << 31) : static_cast<std::uint64_t>(cube);
        bits_ = static_cast<std::uint32_t>(std::bit_width(m_ - 1));
    }
    std::uint64_t m() const { return m_; }
    std::uint32_t bits_u() const { return bits_; }
    std::uint32_t bits_v() const { return 2 * bits_; }
    std::uint64_t u(const NodeId& parent) const {
        return fast_range(hash_words(seed_, tag("universe-u"), parent.depth, parent.fp.hi, parent.fp.lo), m_);
    }
    std::uint64_t v2(const NodeId& child) const {
        return fast_range(hash_words(seed_, tag("universe-v"), child.depth, child.fp.hi, child.fp.lo), m_);
    }
    std::uint64_t vkey(std::uint64_t u, std::uint64_t v2) const { return u * m_ + v2; }
    std::uint64_t parent_of(std::uint64_t vkey) const { return vkey / m_; }

private:
    std::uint64_t seed_ = 0, m_ = 8;
    std::uint32_t bits_ = 3;
};

struct UniverseCollisions {
    std::size_t parent = 0;  // distinct depth i-1 nodes sharing a u value
    std::size_t child = 0;   // distinct depth i nodes sharing a V key
};

inline UniverseCollisions universe_collisions(const QuadtreeSpec& tree, const UniverseMap& um, const PointList& pts,
                                              std::uint32_t i) {
    std::map<std::uint64_t, std::set<NodeId>> us, vs;
    for (const auto& x : pts) {
        auto p = tree.path(x);
        auto u = um.u(p[i - 1]);
        us[u].insert(p[i - 1]);
        vs[um.vkey(u, um.v2(p[i]))].insert(p[i]);
    }
    UniverseCollisions c;
    for (const auto& [k, s] : us) c.parent += s.size() - 1;
    for (const auto& [k, s] : vs) c.child += s.size() - 1;
    return c;
}

}  // namespace geosketch

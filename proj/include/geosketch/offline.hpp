#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hypercube.hpp"
#include "quadtree.hpp"

namespace geosketch {

struct NodeStats {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::vector<std::int32_t> ones;
    NodeId parent;
    std::int64_t count() const { return a + b; }
};

// Per-depth node statistics of a point set under a fixed tree.
// For EMD the nodes hold C = A + B with multiplicity; for MST they hold the distinct points of X.
class LevelDecomposition {
public:
    static LevelDecomposition for_emd(const QuadtreeSpec& tree, const PointList& A, const PointList& B) {
        LevelDecomposition L(tree);
        for (const auto& x : A) L.insert(x, true);
        for (const auto& x : B) L.insert(x, false);
        return L;
    }

    static LevelDecomposition for_points(const QuadtreeSpec& tree, const PointList& X) {
        LevelDecomposition L(tree);
        std::set<HypercubePoint> seen;
        for (const auto& x : X)
            if (seen.insert(x).second) L.insert(x, true);
        return L;
    }

    std::uint32_t depth() const { return h_; }
    std::uint32_t dim() const { return d_; }
    const std::map<NodeId, NodeStats>& level(std::uint32_t i) const { return levels_.at(i); }
    const NodeStats& stats(const NodeId& v) const { return levels_.at(v.depth).at(v); }

    // E||c - c'||_1 for c uniform in the node u and c' uniform in the node v.
    double avg(const NodeStats& u, const NodeStats& v) const {
        if (u.count() == 0 || v.count() == 0) return 0.0;
        double cu = static_cast<double>(u.count()), cv = static_cast<double>(v.count());
        double s = 0;
        for (std::uint32_t k = 0; k < d_; ++k) {
            double pu = u.ones[k] / cu, pv = v.ones[k] / cv;
            s += pu * (1 - pv) + pv * (1 - pu);
        }
        return s;
    }

    // E||x - c||_1 for c uniform in the node.
    double avg_point(const HypercubePoint& x, const NodeStats& v) const {
        if (v.count() == 0) return 0.0;
        double cv = static_cast<double>(v.count());
        double s = 0;
        for (std::uint32_t k = 0; k < d_; ++k) {
            double pv = v.ones[k] / cv;
            s += x.bit(k) ? 1 - pv : pv;
        }
        return s;
    }

    double edge_avg(const NodeId& v) const {
        const auto& sv = stats(v);
        return avg(stats(sv.parent), sv);
    }

    std::int64_t delta(std::uint32_t i) const {
        std::int64_t s = 0;
        for (const auto& [v, st] : levels_.at(i)) s += std::llabs(st.a - st.b);
        return s;
    }

private:
    explicit LevelDecomposition(const QuadtreeSpec& tree)
        : tree_(&tree), h_(tree.depth()), d_(tree.dim()), levels_(tree.depth() + 1) {}

    void insert(const HypercubePoint& x, bool first) {
        auto path = tree_->path(x);
        for (std::uint32_t i = 0; i <= h_; ++i) {
            auto& st = levels_[i][path[i]];
            if (st.ones.empty()) st.ones.assign(d_, 0);
            if (i > 0) st.parent = path[i - 1];
            (first ? st.a : st.b) += 1;
            for (std::uint32_t k = 0; k < d_; ++k) st.ones[k] += x.bit(k);
        }
    }

    const QuadtreeSpec* tree_;
    std::uint32_t h_, d_;
    std::vector<std::map<NodeId, NodeStats>> levels_;
};

struct Matching {
    // Index pairs (into A, into B).
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

inline void check_balanced(const PointList& A, const PointList& B) {
    if (A.size() != B.size()) throw std::invalid_argument("|A| and |B| differ");
}

// Bottom-up greedy matching inside every node, children in ascending fingerprint order.
inline Matching depth_greedy_matching(const QuadtreeSpec& tree, const PointList& A, const PointList& B) {
    check_balanced(A, B);
    const std::uint32_t h = tree.depth();
    std::vector<std::vector<NodeId>> pa(A.size()), pb(B.size());
    for (std::size_t k = 0; k < A.size(); ++k) pa[k] = tree.path(A[k]);
    for (std::size_t k = 0; k < B.size(); ++k) pb[k] = tree.path(B[k]);

    struct Open {
        std::vector<std::size_t> a, b;
        NodeId parent;
    };
    std::map<NodeId, Open> cur;
    for (std::size_t k = 0; k < A.size(); ++k) {
        auto& o = cur[pa[k][h]];
        o.a.push_back(k);
        o.parent = pa[k][h - 1];
    }
    for (std::size_t k = 0; k < B.size(); ++k) {
        auto& o = cur[pb[k][h]];
        o.b.push_back(k);
        o.parent = pb[k][h - 1];
    }

    Matching M;
    for (std::uint32_t i = h;; --i) {
        std::map<NodeId, Open> up;
        for (auto& [v, o] : cur) {
            std::size_t m = std::min(o.a.size(), o.b.size());
            for (std::size_t k = 0; k < m; ++k) M.pairs.emplace_back(o.a[k], o.b[k]);
            if (i == 0) continue;
            auto& p = up[o.parent];
            for (std::size_t k = m; k < o.a.size(); ++k) {
                p.a.push_back(o.a[k]);
                p.parent = pa[o.a[k]][i >= 2 ? i - 2 : 0];
            }
            for (std::size_t k = m; k < o.b.size(); ++k) {
                p.b.push_back(o.b[k]);
                p.parent = pb[o.b[k]][i >= 2 ? i - 2 : 0];
            }
        }
        if (i == 0) break;
        for (auto it = up.begin(); it != up.end();) {
            if (it->second.a.empty() && it->second.b.empty())
                it = up.erase(it);
            else
                ++it;
        }
        cur = std::move(up);
    }
    return M;
}

inline double matching_cost(const Matching& M, const PointList& A, const PointList& B) {
    double c = 0;
    for (const auto& [a, b] : M.pairs) c += hamming_distance(A.at(a), B.at(b));
    return c;
}

inline double value_emd(const QuadtreeSpec& tree, const PointList& A, const PointList& B) {
    check_balanced(A, B);
    auto L = LevelDecomposition::for_emd(tree, A, B);
    double v = 0;
    for (std::uint32_t i = 1; i <= tree.depth(); ++i) {
        for (const auto& [node, st] : L.level(i)) {
            std::int64_t diff = std::llabs(st.a - st.b);
            if (diff != 0) v += static_cast<double>(diff) * L.avg(L.stats(st.parent), st);
        }
    }
    return v;
}

inline double inspector_payment(const QuadtreeSpec& tree, const HypercubePoint& a, const HypercubePoint& b,
                                const LevelDecomposition& C) {
    if (a == b) return 0.0;
    auto pa = tree.path(a), pb = tree.path(b);
    double pay = 0;
    for (std::uint32_t i = 1; i <= tree.depth(); ++i) {
        if (pa[i] == pb[i]) continue;
        pay += C.avg_point(a, C.stats(pa[i - 1])) + C.avg_point(b, C.stats(pb[i - 1]));
    }
    return pay;
}

// Payment with C given as a multiset.
inline double inspector_payment(const QuadtreeSpec& tree, const HypercubePoint& a, const HypercubePoint& b,
                                const PointList& C) {
    auto L = LevelDecomposition::for_emd(tree, C, {});
    return inspector_payment(tree, a, b, L);
}

struct SpanningTree {
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // indices into X
};

// Consecutive points of the depth-first order, children visited by ascending fingerprint.
inline SpanningTree depth_greedy_spanning_tree(const QuadtreeSpec& tree, const PointList& X) {
    if (X.empty()) throw std::invalid_argument("empty point set");
    std::vector<std::vector<NodeId>> paths(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) paths[k] = tree.path(X[k]);
    std::vector<std::size_t> order(X.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return paths[x] < paths[y]; });
    SpanningTree G;
    for (std::size_t k = 1; k < order.size(); ++k) G.edges.emplace_back(order[k - 1], order[k]);
    return G;
}

inline double tree_cost(const SpanningTree& G, const PointList& X) {
    double c = 0;
    for (const auto& [x, y] : G.edges) c += hamming_distance(X.at(x), X.at(y));
    return c;
}

inline double value_mst(const QuadtreeSpec& tree, const PointList& X) {
    if (X.empty()) throw std::invalid_argument("empty point set");
    auto L = LevelDecomposition::for_points(tree, X);
    double v = 0;
    for (std::uint32_t i = 1; i <= tree.depth(); ++i) {
        const auto& lv = L.level(i);
        if (lv.size() <= 1) continue;
        for (const auto& [node, st] : lv) v += L.avg(L.stats(st.parent), st);
    }
    return v;
}

constexpr std::size_t kExactEmdCap = 512;
constexpr std::size_t kExactMstCap = 2048;

// Min-cost assignment (Hungarian method with potentials). Returns the column of each row.
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<std::int64_t>>& cost) {
    const std::size_t n = cost.size();
    const std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<std::int64_t> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            std::size_t i0 = p[j0], j1 = 0;
            std::int64_t delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                std::int64_t cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> col(n);
    for (std::size_t j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
    return col;
}

inline Matching exact_emd_matching(const PointList& A, const PointList& B) {
    check_balanced(A, B);
    if (A.size() > kExactEmdCap) throw std::invalid_argument("exact_emd: n exceeds 512");
    std::vector<std::vector<std::int64_t>> cost(A.size(), std::vector<std::int64_t>(B.size()));
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < B.size(); ++j) cost[i][j] = hamming_distance(A[i], B[j]);
    auto col = hungarian(cost);
    Matching M;
    for (std::size_t i = 0; i < A.size(); ++i) M.pairs.emplace_back(i, col[i]);
    return M;
}

inline double exact_emd(const PointList& A, const PointList& B) {
    if (A.empty() && B.empty()) return 0.0;
    auto M = exact_emd_matching(A, B);
    return matching_cost(M, A, B);
}

inline double exact_mst(const PointList& X) {
    if (X.size() > kExactMstCap) throw std::invalid_argument("exact_mst: n exceeds 2048");
    if (X.size() <= 1) return 0.0;
    const std::size_t n = X.size();
    std::vector<std::uint32_t> best(n, std::numeric_limits<std::uint32_t>::max());
    std::vector<char> in(n, 0);
    best[0] = 0;
    double total = 0;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        for (std::size_t k = 0; k < n; ++k)
            if (!in[k] && (pick == n || best[k] < best[pick])) pick = k;
        in[pick] = 1;
        total += best[pick];
        for (std::size_t k = 0; k < n; ++k)
            if (!in[k]) best[k] = std::min(best[k], hamming_distance(X[pick], X[k]));
    }
    return total;
}

}  // namespace geosketch

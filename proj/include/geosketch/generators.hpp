#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypercube.hpp"
#include "turnstile.hpp"

namespace geosketch {

enum class InstanceKind { Uniform, Clustered, MatchedNoise, HardMst, HardEmd };

inline InstanceKind parse_instance_kind(const std::string& s) {
    if (s == "uniform") return InstanceKind::Uniform;
    if (s == "clustered") return InstanceKind::Clustered;
    if (s == "matched_noise") return InstanceKind::MatchedNoise;
    if (s == "hard_mst") return InstanceKind::HardMst;
    if (s == "hard_emd") return InstanceKind::HardEmd;
    throw std::invalid_argument("unknown instance kind: " + s);
}

struct GenParams {
    InstanceKind kind = InstanceKind::Uniform;
    std::size_t n = 16;  // points per set; for hard kinds the coset size |C^perp|
    std::uint32_t d = 16;
    std::uint64_t seed = 1;
    double eps = 0.05;       // matched_noise flip rate
    std::size_t k = 2;       // hard_mst groups
    double alpha = 1.0;      // hard kinds: noise rate 1/(200 alpha)
    std::size_t clusters = 4;
    double flip = 0.05;      // clustered spread
    std::size_t churn = 0;   // extra points inserted and later deleted
    std::optional<int> z;    // hard kinds: force the planted bit
};

struct Instance {
    Stream stream;
    std::optional<int> z;
};

namespace detail {

class GenRng {
public:
    explicit GenRng(std::uint64_t seed) : eng_(seed) {}
    std::uint64_t word() { return eng_(); }
    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    bool coin(double p) { return unit() < p; }
    std::size_t below(std::size_t m) { return static_cast<std::size_t>(unit() * static_cast<double>(m)); }

    HypercubePoint point(std::uint32_t d) {
        HypercubePoint x(d);
        for (auto& w : x.words()) w = word();
        if (d < 64) x.words()[0] &= (std::uint64_t{1} << d) - 1;
        return x;
    }
    HypercubePoint noisy(HypercubePoint x, double p) {
        for (std::uint32_t b = 0; b < x.dim(); ++b)
            if (coin(p)) x.flip(b);
        return x;
    }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[below(k)]);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace detail

// Generator rows of the code used as C^perp: the all-ones word, the log2 d coordinate
// functions of the first-order Reed-Muller code, then products of pairs of them.
// Minimum weight is d/2 while only first-order rows are used and d/4 after that.
inline std::vector<HypercubePoint> hard_code_generators(std::uint32_t d, std::uint32_t dim) {
    if (d < 4) throw std::invalid_argument("hard instances need d >= 4");
    const std::uint32_t m = static_cast<std::uint32_t>(std::countr_zero(d));
    std::vector<std::vector<int>> monomials{{}};
    for (std::uint32_t a = 0; a < m; ++a) monomials.push_back({int(a)});
    for (std::uint32_t a = 0; a < m; ++a)
        for (std::uint32_t b = a + 1; b < m; ++b) monomials.push_back({int(a), int(b)});
    if (dim > monomials.size())
        throw std::invalid_argument("code dimension " + std::to_string(dim) + " unsupported at d=" + std::to_string(d));
    std::vector<HypercubePoint> rows;
    for (std::uint32_t r = 0; r < dim; ++r) {
        HypercubePoint g(d);
        for (std::uint32_t pos = 0; pos < d; ++pos) {
            bool v = true;
            for (int a : monomials[r]) v = v && ((pos >> a) & 1u);
            g.set(pos, v);
        }
        rows.push_back(g);
    }
    return rows;
}

inline std::vector<HypercubePoint> hard_code(std::uint32_t d, std::size_t n) {
    if (!std::has_single_bit(n) || n < 2) throw std::invalid_argument("hard instances need n a power of two >= 2");
    auto rows = hard_code_generators(d, static_cast<std::uint32_t>(std::countr_zero(n)));
    std::vector<HypercubePoint> words;
    for (std::size_t mask = 0; mask < n; ++mask) {
        HypercubePoint c(d);
        for (std::size_t r = 0; r < rows.size(); ++r)
            if ((mask >> r) & 1u) c = c ^ rows[r];
        words.push_back(c);
    }
    return words;
}

inline Instance gen_instance(const GenParams& g) {
    detail::GenRng rng(g.seed);
    Instance out;
    auto& s = out.stream;
    auto coset = [&](const HypercubePoint& x, const std::vector<HypercubePoint>& code, Label l) {
        for (const auto& c : code) s.push_back({1, l, x ^ c});
    };
    auto hard_bit = [&] { return g.z ? *g.z : int(rng.word() & 1u); };
    auto hard_eps = [&] {
        if (!(g.alpha >= 1.0)) throw std::invalid_argument("alpha must be at least 1");
        return 1.0 / (200.0 * g.alpha);
    };
    switch (g.kind) {
        case InstanceKind::Uniform:
            for (std::size_t k = 0; k < g.n; ++k) s.push_back({1, Label::X, rng.point(g.d)});
            break;
        case InstanceKind::Clustered: {
            if (g.clusters == 0) throw std::invalid_argument("clusters must be positive");
            std::vector<HypercubePoint> centers;
            for (std::size_t c = 0; c < g.clusters; ++c) centers.push_back(rng.point(g.d));
            for (std::size_t k = 0; k < g.n; ++k)
                s.push_back({1, Label::X, rng.noisy(centers[rng.below(g.clusters)], g.flip)});
            break;
        }
        case InstanceKind::MatchedNoise: {
            std::vector<HypercubePoint> A;
            for (std::size_t k = 0; k < g.n; ++k) A.push_back(rng.point(g.d));
            std::vector<HypercubePoint> B;
            for (const auto& a : A) B.push_back(rng.noisy(a, g.eps));
            rng.shuffle(B);
            for (const auto& a : A) s.push_back({1, Label::A, a});
            for (const auto& b : B) s.push_back({1, Label::B, b});
            break;
        }
        case InstanceKind::HardMst: {
            if (g.k < 2) throw std::invalid_argument("hard_mst needs k >= 2");
            auto code = hard_code(g.d, g.n);
            double eps = hard_eps();
            int z = hard_bit();
            out.z = z;
            HypercubePoint x = rng.point(g.d);
            for (std::size_t l = 0; l < g.k; ++l) {
                if (l > 0) x = z ? rng.noisy(x, eps) : rng.point(g.d);
                coset(x, code, Label::X);
            }
            break;
        }
        case InstanceKind::HardEmd: {
            auto code = hard_code(g.d, g.n);
            double eps = hard_eps();
            int z = hard_bit();
            out.z = z;
            HypercubePoint x = rng.point(g.d);
            HypercubePoint y = z ? rng.noisy(x, eps) : rng.point(g.d);
            coset(x, code, Label::A);
            coset(y, code, Label::B);
            break;
        }
    }
    if (g.churn > 0) {
        // Interleave transient points: inserted before the real updates, deleted after them.
        Label l = g.kind == InstanceKind::MatchedNoise || g.kind == InstanceKind::HardEmd ? Label::A : Label::X;
        Stream pre, post;
        for (std::size_t k = 0; k < g.churn; ++k) {
            auto p = rng.point(g.d);
            pre.push_back({1, l, p});
            post.push_back({-1, l, p});
        }
        rng.shuffle(post);
        Stream all = std::move(pre);
        all.insert(all.end(), s.begin(), s.end());
        all.insert(all.end(), post.begin(), post.end());
        s = std::move(all);
    }
    return out;
}

}  // namespace geosketch

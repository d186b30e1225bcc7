#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <thread>
#include <vector>

#include "emd_sketch.hpp"
#include "exact.hpp"
#include "hash.hpp"
#include "hypercube.hpp"
#include "json.hpp"
#include "quadtree.hpp"
#include "sketches.hpp"
#include "sparse_recovery.hpp"
#include "stable.hpp"
#include "turnstile.hpp"
#include "universe.hpp"

namespace geosketch {

inline double mst_alpha(std::uint32_t i, std::uint32_t d, std::uint64_t n) {
    double L = log2_floor1(n);
    return std::min(1.0, std::ldexp(1.0, static_cast<int>(i)) / (d * L * L * L));
}

struct MstConfig {
    std::uint64_t n = 0;  // 0: distinct points of the stream
    std::uint32_t d = 0;  // 0: taken from the stream
    std::uint64_t seed = 1;
    std::uint32_t samples = 0;  // 0: ceil(log2 n)^3
    double gamma = 0;           // 0: 1 / ceil(log2 n)^2
    std::uint32_t parent_rows = 9;
    std::uint32_t parent_buckets = 64;
    std::uint32_t parent_size = 24;
    std::uint32_t child_families = 0;  // 0: 2 ceil(log2 n)
    std::uint32_t rep_families = 4;
    std::uint32_t table_rows = 3;
    std::uint32_t table_cells = 32;
    unsigned threads = 1;

    std::uint32_t L() const { return ceil_log2_floor1(n); }
    std::uint32_t sample_count() const { return samples ? samples : L() * L() * L(); }
    double event_gamma() const { return gamma > 0 ? gamma : 1.0 / (double(L()) * L()); }
    // p = eps / (2 log n) with eps = gamma / 20.
    double parent_p() const { return event_gamma() / (40.0 * log2_floor1(n)); }
    std::uint32_t kappa_max() const { return L(); }
    std::uint32_t eta_max() const { return L() + 4; }
    std::uint32_t children_families() const { return child_families ? child_families : 2 * L(); }

    nlohmann::json to_json() const {
        return {{"n", n},
                {"d", d},
                {"seed", seed},
                {"samples", samples},
                {"gamma", gamma},
                {"parent_rows", parent_rows},
                {"parent_buckets", parent_buckets},
                {"parent_size", parent_size},
                {"child_families", child_families},
                {"rep_families", rep_families},
                {"table_rows", table_rows},
                {"table_cells", table_cells},
                {"threads", threads}};
    }
    void apply_json(const nlohmann::json& j) {
        n = j.value("n", n);
        d = j.value("d", d);
        seed = j.value("seed", seed);
        samples = j.value("samples", samples);
        gamma = j.value("gamma", gamma);
        parent_rows = j.value("parent_rows", parent_rows);
        parent_buckets = j.value("parent_buckets", parent_buckets);
        parent_size = j.value("parent_size", parent_size);
        child_families = j.value("child_families", child_families);
        rep_families = j.value("rep_families", rep_families);
        table_rows = j.value("table_rows", table_rows);
        table_cells = j.value("table_cells", table_cells);
        threads = j.value("threads", threads);
    }
    void validate() const {
        if (n == 0 || d == 0) throw std::invalid_argument("n and d must be known");
        if (!std::has_single_bit(parent_buckets)) throw std::invalid_argument("parent_buckets must be a power of two");
        if (parent_rows == 0 || parent_size == 0 || rep_families == 0 || table_rows == 0 || table_cells == 0)
            throw std::invalid_argument("sketch shapes must be positive");
    }
};

struct MstSampleOutcome {
    bool ok = false;
    std::uint64_t u = 0;
    std::uint64_t v1 = 0, v2 = 0;  // children from the D and D' families
    std::uint64_t r1 = 0, r2 = 0;  // representative tokens
    bool chi1 = false, chi2 = false;  // chi_S = -1 at the representatives
    bool differ() const { return chi1 != chi2; }
};

// One sampled tuple (parent, two children, two representatives, characters) at level i.
class MstSample {
public:
    using Entry = SparseRecovery::Entry;

    MstSample() = default;
    MstSample(const MstConfig& c, const UniverseMap& um, std::uint32_t level, std::uint64_t seed)
        : um_(um), seed_(seed), p_(c.parent_p()), rows_(c.parent_rows), buckets_(c.parent_buckets),
          size_(c.parent_size), kmax_(c.kappa_max()), emax_(c.eta_max()), jc_(c.children_families()),
          jr_(c.rep_families), scaler_(derive_seed(seed, tag("mst-t"))),
          chars_(CharacterSet::sample(c.d, mst_alpha(level, c.d, c.n), derive_seed(seed, tag("mst-chars")))),
          bank_(static_cast<std::size_t>(rows_) * buckets_ * size_) {
        for (std::uint32_t r = 0; r < rows_; ++r)
            mult_.push_back(static_cast<std::uint32_t>(hash_words(seed, tag("mst-bucket"), r)) | 1u);
        for (int side = 0; side < 2; ++side) {
            for (std::uint32_t j = 0; j < jc_; ++j)
                for (std::uint32_t k = 0; k <= kmax_; ++k)
                    child_.emplace_back(c.table_rows, c.table_cells, derive_seed(seed, tag("mst-child"), side, j, k));
            for (std::uint32_t j = 0; j < jr_; ++j)
                for (std::uint32_t e = 0; e <= emax_; ++e)
                    rep_.emplace_back(c.table_rows, c.table_cells, derive_seed(seed, tag("mst-rep"), side, j, e));
        }
    }

    double p() const { return p_; }
    double t_u(std::uint64_t u) const { return scaler_.variate(u); }
    const CharacterSet& chars() const { return chars_; }

    // Nested subsampling: v is in D_{kappa,j} (side 0) or D'_{kappa,j} (side 1) iff kappa <= child_level.
    std::uint32_t child_level(int side, std::uint32_t j, std::uint64_t vkey) const {
        return std::countl_zero(hash_words(seed_, tag("mst-D"), side, j, vkey) | 1u);
    }
    std::uint32_t rep_level(int side, std::uint32_t j, std::uint64_t token) const {
        return std::countl_zero(hash_words(seed_, tag("mst-P"), side, j, token) | 1u);
    }
    std::uint32_t parent_bucket(std::uint32_t r, std::uint64_t u) const {
        if (buckets_ == 1) return 0;
        return (mult_[r] * static_cast<std::uint32_t>(u)) >> (32 - std::countr_zero(buckets_));
    }

    void update(std::uint64_t u, std::uint64_t vkey, std::uint64_t token, bool chi_minus, std::int64_t delta) {
        if (delta == 0) return;
        // Child-count vector under u, scaled by t_u^{-1/p}, into one bucket per row.
        int dsign = delta > 0 ? 1 : -1;
        double base = std::log2(std::fabs(static_cast<double>(delta))) - std::log2(t_u(u)) / p_;
        for (std::uint32_t r = 0; r < rows_; ++r) {
            std::uint32_t b = parent_bucket(r, u);
            for (std::uint32_t k = 0; k < size_; ++k) {
                auto cf = stable_coefficient(p_, hash_words(seed_, tag("mst-coef"), r, k), vkey);
                bank_[cell(r, b, k)].add(WideTerm::from_log2(cf.sign * dsign, cf.log_abs / std::numbers::ln2 + base));
            }
        }
        for (int side = 0; side < 2; ++side) {
            for (std::uint32_t j = 0; j < jc_; ++j) {
                auto top = std::min(child_level(side, j, vkey), kmax_);
                for (std::uint32_t k = 0; k <= top; ++k) child_[child_index(side, j, k)].update(vkey, 0, false, delta);
            }
            for (std::uint32_t j = 0; j < jr_; ++j) {
                auto top = std::min(rep_level(side, j, token), emax_);
                for (std::uint32_t e = 0; e <= top; ++e)
                    rep_[rep_index(side, j, e)].update(token, vkey, chi_minus, delta);
            }
        }
    }

    // Natural log of the p-norm estimate of bucket c in row r. For small p, |acc|^{-p} is close
    // to Exp(1) scaled by the inverse p-th moment, so the harmonic mean is used.
    double bucket_log_estimate(std::uint32_t r, std::uint32_t c) const {
        double h = 0;
        for (std::uint32_t k = 0; k < size_; ++k) {
            double l = bank_[cell(r, c, k)].log2_abs();
            if (std::isinf(l)) return -std::numeric_limits<double>::infinity();
            h += std::exp(-p_ * l * std::numbers::ln2);
        }
        return -std::log(h / size_) / p_;
    }

    // Per-u score: the lower median over rows of its buckets' estimates; argmax over [m],
    // smallest u on ties. A u can beat the current best only if a majority of its buckets do,
    // which is tested branch-free against per-row bitmasks.
    std::optional<std::uint64_t> parent_recover() const {
        std::vector<std::vector<double>> est(rows_, std::vector<double>(buckets_));
        for (std::uint32_t r = 0; r < rows_; ++r)
            for (std::uint32_t c = 0; c < buckets_; ++c) est[r][c] = bucket_log_estimate(r, c);
        const std::uint32_t need = rows_ / 2 + 1;
        const std::uint32_t words = (buckets_ + 63) / 64;
        std::optional<std::uint64_t> best;
        double top = -std::numeric_limits<double>::infinity();
        std::vector<std::uint64_t> alive(static_cast<std::size_t>(rows_) * words);
        auto refresh = [&] {
            std::fill(alive.begin(), alive.end(), 0);
            for (std::uint32_t r = 0; r < rows_; ++r)
                for (std::uint32_t c = 0; c < buckets_; ++c)
                    if (est[r][c] > top) alive[r * words + c / 64] |= std::uint64_t{1} << (c % 64);
        };
        refresh();
        std::vector<double> vals(rows_);
        for (std::uint64_t u = 0; u < um_.m(); ++u) {
            std::uint32_t above = 0;
            for (std::uint32_t r = 0; r < rows_; ++r) {
                std::uint32_t b = parent_bucket(r, u);
                above += (alive[r * words + b / 64] >> (b % 64)) & 1u;
            }
            if (above < need) continue;
            for (std::uint32_t r = 0; r < rows_; ++r) vals[r] = est[r][parent_bucket(r, u)];
            std::nth_element(vals.begin(), vals.begin() + (need - 1), vals.end(), std::greater<>());
            top = vals[need - 1];
            best = u;
            refresh();
        }
        return best;
    }

    // Children of u inside D_{kappa,j}, or nullopt when the table does not decode.
    std::optional<std::vector<std::uint64_t>> child_recover(int side, std::uint32_t kappa, std::uint32_t j,
                                                            std::uint64_t u) const {
        auto d = child_[child_index(side, j, kappa)].decode();
        if (!d) return std::nullopt;
        std::vector<std::uint64_t> out;
        for (const auto& e : *d)
            if (e.count > 0 && um_.parent_of(e.key) == u) out.push_back(e.key);
        return out;
    }

    // kappa from the top down, j ascending; first unique hit.
    std::optional<std::uint64_t> child_sample(int side, std::uint64_t u) const {
        for (std::uint32_t k = kmax_ + 1; k-- > 0;)
            for (std::uint32_t j = 0; j < jc_; ++j)
                if (auto s = child_recover(side, k, j, u); s && s->size() == 1) return s->front();
        return std::nullopt;
    }

    struct Representative {
        std::uint64_t token = 0;
        bool chi_minus = false;
    };

    // eta from the bottom up, j ascending; first unique point of X_v.
    std::optional<Representative> representative(int side, std::uint64_t vkey) const {
        for (std::uint32_t e = 0; e <= emax_; ++e) {
            for (std::uint32_t j = 0; j < jr_; ++j) {
                auto d = rep_[rep_index(side, j, e)].decode();
                if (!d) continue;
                std::optional<Representative> hit;
                std::size_t count = 0;
                for (const auto& en : *d) {
                    if (en.count > 0 && en.payload == vkey) {
                        ++count;
                        hit = Representative{en.key, en.flag};
                    }
                }
                if (count == 1) return hit;
            }
        }
        return std::nullopt;
    }

    MstSampleOutcome run() const {
        MstSampleOutcome o;
        auto u = parent_recover();
        if (!u) return o;
        o.u = *u;
        auto v1 = child_sample(0, *u), v2 = child_sample(1, *u);
        if (!v1 || !v2) return o;
        o.v1 = *v1;
        o.v2 = *v2;
        auto r1 = representative(0, *v1), r2 = representative(1, *v2);
        if (!r1 || !r2) return o;
        o.r1 = r1->token;
        o.r2 = r2->token;
        o.chi1 = r1->chi_minus;
        o.chi2 = r2->chi_minus;
        o.ok = true;
        return o;
    }

    void merge(const MstSample& o) {
        if (seed_ != o.seed_) throw std::invalid_argument("merging different samples");
        for (std::size_t k = 0; k < bank_.size(); ++k) bank_[k].merge(o.bank_[k]);
        for (std::size_t k = 0; k < child_.size(); ++k) child_[k].merge(o.child_[k]);
        for (std::size_t k = 0; k < rep_.size(); ++k) rep_[k].merge(o.rep_[k]);
    }
    friend bool operator==(const MstSample& a, const MstSample& b) {
        return a.seed_ == b.seed_ && a.bank_ == b.bank_ && a.child_ == b.child_ && a.rep_ == b.rep_;
    }

private:
    std::size_t cell(std::uint32_t r, std::uint32_t c, std::uint32_t k) const {
        return (static_cast<std::size_t>(r) * buckets_ + c) * size_ + k;
    }
    std::size_t child_index(int side, std::uint32_t j, std::uint32_t k) const {
        return (static_cast<std::size_t>(side) * jc_ + j) * (kmax_ + 1) + k;
    }
    std::size_t rep_index(int side, std::uint32_t j, std::uint32_t e) const {
        return (static_cast<std::size_t>(side) * jr_ + j) * (emax_ + 1) + e;
    }

    UniverseMap um_;
    std::uint64_t seed_ = 0;
    double p_ = 0.01;
    std::uint32_t rows_ = 0, buckets_ = 0, size_ = 0, kmax_ = 0, emax_ = 0, jc_ = 0, jr_ = 0;
    ExpScaler scaler_;
    CharacterSet chars_;
    std::vector<std::uint32_t> mult_;  // multiply-shift over u < 2^31
    std::vector<WideSum> bank_;
    std::vector<SparseRecovery> child_, rep_;
};

// Keys a point contributes under at level i.
struct MstPointKeys {
    std::uint64_t u = 0, vkey = 0, node = 0, token = 0;
};

inline MstPointKeys mst_keys(const UniverseMap& um, const std::vector<NodeId>& path, std::uint32_t i,
                             const HypercubePoint& x, std::uint64_t token_seed) {
    MstPointKeys k;
    k.u = um.u(path[i - 1]);
    k.vkey = um.vkey(k.u, um.v2(path[i]));
    k.node = path[i].key();
    k.token = point_hash(token_seed, x);
    return k;
}

struct MstLevelReport {
    std::uint32_t level = 0;
    double l0 = 0;
    bool used = false;  // l0 > 1.5
    std::uint32_t samples = 0, ok = 0, differ = 0;
    double mu = 0;
    double contribution = 0;
};

struct MstEstimate {
    double value = 0;
    std::vector<MstLevelReport> levels;
};

inline QuadtreeSpec mst_tree(const MstConfig& c) { return sample_quadtree(c.d, derive_seed(c.seed, tag("mst-tree"))); }
inline UniverseMap mst_universe(const MstConfig& c, std::uint32_t i) {
    return UniverseMap(c.n, derive_seed(c.seed, tag("mst-universe"), i));
}
inline std::uint64_t mst_token_seed(const MstConfig& c) { return derive_seed(c.seed, tag("mst-token")); }
inline std::uint64_t mst_sample_seed(const MstConfig& c, std::uint32_t i, std::uint32_t k) {
    return derive_seed(c.seed, tag("mst-sample"), i, k);
}
inline L0Sketch mst_l0(const MstConfig& c, std::uint32_t i) {
    return L0Sketch::for_universe(c.n, derive_seed(c.seed, tag("mst-l0"), i));
}

// mu_i from sample outcomes, clamped to 10 d log n / 2^i; throws if every sample failed.
inline MstLevelReport mst_level_report(const MstConfig& c, std::uint32_t i, double l0,
                                       const std::vector<MstSampleOutcome>& out) {
    MstLevelReport rep;
    rep.level = i;
    rep.l0 = l0;
    rep.used = l0 > 1.5;
    if (!rep.used) return rep;
    rep.samples = static_cast<std::uint32_t>(out.size());
    for (const auto& o : out) {
        rep.ok += o.ok;
        rep.differ += o.ok && o.differ();
    }
    if (rep.ok == 0) throw std::runtime_error("every MST sample failed at level " + std::to_string(i));
    double scale = std::ldexp(1.0, -static_cast<int>(i)) * c.d;
    rep.mu = std::min(rep.differ / (double(rep.ok) * mst_alpha(i, c.d, c.n)), 10 * scale * log2_floor1(c.n));
    rep.contribution = l0 * (rep.mu + scale);
    return rep;
}

// Full linear state: per level an l0 sketch and all samples. Memory grows with the sample count.
class MstSketch {
public:
    explicit MstSketch(const MstConfig& c) : cfg_(c), tree_((c.validate(), mst_tree(c))) {
        for (std::uint32_t i = 1; i <= tree_.depth(); ++i) {
            Level L{mst_universe(c, i), mst_l0(c, i), {}};
            for (std::uint32_t k = 0; k < c.sample_count(); ++k) L.samples.emplace_back(c, L.um, i, mst_sample_seed(c, i, k));
            levels_.push_back(std::move(L));
        }
    }

    const QuadtreeSpec& tree() const { return tree_; }
    const MstSample& sample(std::uint32_t i, std::uint32_t k) const { return levels_[i - 1].samples[k]; }
    const UniverseMap& universe(std::uint32_t i) const { return levels_[i - 1].um; }

    void update(const TurnstileUpdate& up) {
        auto p = tree_.path(up.point);
        auto ts = mst_token_seed(cfg_);
        for (std::uint32_t i = 1; i <= tree_.depth(); ++i) {
            auto& L = levels_[i - 1];
            auto k = mst_keys(L.um, p, i, up.point, ts);
            L.l0.update(k.node, up.sign);
            for (auto& s : L.samples) s.update(k.u, k.vkey, k.token, char_eval(s.chars(), up.point) < 0, up.sign);
        }
    }

    MstEstimate estimate() const {
        MstEstimate e;
        for (std::uint32_t i = 1; i <= tree_.depth(); ++i) {
            const auto& L = levels_[i - 1];
            double l0 = L.l0.estimate();
            std::vector<MstSampleOutcome> out;
            if (l0 > 1.5)
                for (const auto& s : L.samples) out.push_back(s.run());
            e.levels.push_back(mst_level_report(cfg_, i, l0, out));
            e.value += e.levels.back().contribution;
        }
        return e;
    }

    void merge(const MstSketch& o) {
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            levels_[i].l0.merge(o.levels_[i].l0);
            for (std::size_t k = 0; k < levels_[i].samples.size(); ++k) levels_[i].samples[k].merge(o.levels_[i].samples[k]);
        }
    }
    friend bool operator==(const MstSketch& a, const MstSketch& b) {
        if (a.levels_.size() != b.levels_.size()) return false;
        for (std::size_t i = 0; i < a.levels_.size(); ++i)
            if (!(a.levels_[i].l0 == b.levels_[i].l0) || !(a.levels_[i].samples == b.levels_[i].samples)) return false;
        return true;
    }

private:
    struct Level {
        UniverseMap um;
        L0Sketch l0;
        std::vector<MstSample> samples;
    };
    MstConfig cfg_;
    QuadtreeSpec tree_;
    std::vector<Level> levels_;
};

inline MstConfig resolve_mst_config(const Stream& s, MstConfig c) {
    auto f = materialize(s);
    PointMultiset all;
    for (const auto* m : {&f.A, &f.B, &f.X})
        for (const auto& [x, k] : m->entries()) all.add(x, k);
    if (all.distinct() == 0) throw std::invalid_argument("MST needs a nonempty point set");
    if (c.n == 0) c.n = all.distinct();
    if (c.d == 0) c.d = f.d;
    c.validate();
    return c;
}

// Replays the stream once per level and once per sample, keeping one sample state alive
// per worker; yields the same estimate as MstSketch with the same config.
inline MstEstimate mst_estimate(const Stream& s, MstConfig c) {
    c = resolve_mst_config(s, c);
    auto tree = mst_tree(c);
    std::vector<std::vector<NodeId>> paths;
    paths.reserve(s.size());
    for (const auto& up : s) paths.push_back(tree.path(up.point));
    auto ts = mst_token_seed(c);
    MstEstimate e;
    for (std::uint32_t i = 1; i <= tree.depth(); ++i) {
        auto um = mst_universe(c, i);
        std::vector<MstPointKeys> keys;
        keys.reserve(s.size());
        for (std::size_t k = 0; k < s.size(); ++k) keys.push_back(mst_keys(um, paths[k], i, s[k].point, ts));
        auto l0 = mst_l0(c, i);
        for (std::size_t k = 0; k < s.size(); ++k) l0.update(keys[k].node, s[k].sign);
        double l0v = l0.estimate();
        std::vector<MstSampleOutcome> out;
        if (l0v > 1.5) {
            out.resize(c.sample_count());
            auto work = [&](std::uint32_t first, std::uint32_t step) {
                for (std::uint32_t k = first; k < out.size(); k += step) {
                    MstSample smp(c, um, i, mst_sample_seed(c, i, k));
                    for (std::size_t q = 0; q < s.size(); ++q)
                        smp.update(keys[q].u, keys[q].vkey, keys[q].token, char_eval(smp.chars(), s[q].point) < 0,
                                   s[q].sign);
                    out[k] = smp.run();
                }
            };
            unsigned t = std::max(1u, c.threads);
            if (t == 1) {
                work(0, 1);
            } else {
                std::vector<std::thread> pool;
                for (unsigned w = 0; w < t; ++w) pool.emplace_back(work, w, t);
                for (auto& th : pool) th.join();
            }
        }
        e.levels.push_back(mst_level_report(c, i, l0v, out));
        e.value += e.levels.back().contribution;
    }
    return e;
}

// Exact |L_i| and E_{v ~ L_i} ||r_v - c_{pi(v)}||_1 over distinct points, where r_v is uniform
// in X_v and c_{pi(v)} is drawn by a uniform child of pi(v) then a uniform point of it.
inline std::pair<std::size_t, double> reference_level_quantities(const QuadtreeSpec& tree, const PointList& X,
                                                                 std::uint32_t i) {
    if (i == 0 || i > tree.depth()) throw std::invalid_argument("level out of range");
    const std::uint32_t d = tree.dim();
    std::map<NodeId, std::vector<double>> ones;  // child -> bit counts
    std::map<NodeId, double> sizes;
    std::map<NodeId, NodeId> parent;
    std::set<HypercubePoint> seen;
    for (const auto& x : X) {
        if (!seen.insert(x).second) continue;
        auto p = tree.path(x);
        auto& o = ones[p[i]];
        o.resize(d, 0.0);
        for (std::uint32_t k = 0; k < d; ++k) o[k] += x.bit(k);
        sizes[p[i]] += 1;
        parent[p[i]] = p[i - 1];
    }
    std::map<NodeId, std::vector<double>> g;  // parent -> mean of child bit fractions
    std::map<NodeId, double> nchild;
    for (const auto& [v, o] : ones) {
        auto& acc = g[parent[v]];
        acc.resize(d, 0.0);
        for (std::uint32_t k = 0; k < d; ++k) acc[k] += o[k] / sizes[v];
        nchild[parent[v]] += 1;
    }
    double total = 0;
    for (const auto& [v, o] : ones) {
        const auto& acc = g[parent[v]];
        double c = nchild[parent[v]];
        for (std::uint32_t k = 0; k < d; ++k) {
            double f = o[k] / sizes[v], q = acc[k] / c;
            total += f * (1 - q) + q * (1 - f);
        }
    }
    return {ones.size(), ones.empty() ? 0.0 : total / ones.size()};
}

// Exact per-level structure for side checks, keyed as the samples key it.
struct MstLevelTruth {
    std::map<std::uint64_t, std::set<std::uint64_t>> children;  // u -> child V keys
    std::map<std::uint64_t, std::vector<HypercubePoint>> points; // V key -> distinct points
    std::size_t nodes = 0;
};

inline MstLevelTruth mst_level_truth(const QuadtreeSpec& tree, const UniverseMap& um, const PointList& X,
                                     std::uint32_t i) {
    MstLevelTruth t;
    std::set<HypercubePoint> seen;
    for (const auto& x : X) {
        if (!seen.insert(x).second) continue;
        auto p = tree.path(x);
        auto u = um.u(p[i - 1]);
        auto vk = um.vkey(u, um.v2(p[i]));
        t.children[u].insert(vk);
        t.points[vk].push_back(x);
    }
    t.nodes = t.points.size();
    return t;
}

struct MstEventCheck {
    bool e1 = false, e2 = false, e3 = false;
    std::optional<std::uint64_t> u_star;
    bool all() const { return e1 && e2 && e3; }
};

inline MstEventCheck check_mst_events(const MstLevelTruth& t, const MstSample& s, const MstConfig& c) {
    MstEventCheck ev;
    const double gamma = c.event_gamma(), n = static_cast<double>(c.n), Lg = log2_floor1(c.n);
    const double Li = static_cast<double>(t.nodes);
    double sum = 0, best = -1, second = 0;
    for (const auto& [u, ch] : t.children) {
        double v = ch.size() / s.t_u(u);
        sum += v;
        if (v > best) {
            second = std::max(second, best);
            best = v;
            ev.u_star = u;
        } else {
            second = std::max(second, v);
        }
    }
    if (!ev.u_star) return ev;
    ev.e1 = sum <= 4 * std::log(n / gamma) / gamma * Li;
    ev.e2 = best >= gamma * Li && best >= (1 + gamma) * second;
    bool sums_ok = true;
    for (int side = 0; side < 2; ++side) {
        for (std::uint32_t j = 0; j < c.children_families(); ++j) {
            for (std::uint32_t k = 0; k <= c.kappa_max(); ++k) {
                double r = 0;
                for (const auto& [u, ch] : t.children) {
                    double hits = 0;
                    for (auto v : ch) hits += s.child_level(side, j, v) >= k;
                    r += hits / s.t_u(u);
                }
                sums_ok &= r <= Lg * Lg * Lg / (std::ldexp(1.0, static_cast<int>(k)) * gamma) * sum;
            }
        }
    }
    // Some kappa with 2^kappa >= |C(u*)| has unique hits on both sides.
    const auto& cu = t.children.at(*ev.u_star);
    bool unique = false;
    for (std::uint32_t k = 0; k <= c.kappa_max() && !unique; ++k) {
        if (std::ldexp(1.0, static_cast<int>(k)) < cu.size()) continue;
        bool sides[2] = {false, false};
        for (int side = 0; side < 2; ++side) {
            for (std::uint32_t j = 0; j < c.children_families(); ++j) {
                std::size_t hits = 0;
                for (auto v : cu) hits += s.child_level(side, j, v) >= k;
                sides[side] |= hits == 1;
            }
        }
        unique = sides[0] && sides[1];
    }
    ev.e3 = sums_ok && unique;
    return ev;
}

}  // namespace geosketch

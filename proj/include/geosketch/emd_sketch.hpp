#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <thread>
#include <vector>

#include "count_sketch.hpp"
#include "hash.hpp"
#include "hypercube.hpp"
#include "json.hpp"
#include "quadtree.hpp"
#include "sketches.hpp"
#include "turnstile.hpp"
#include "universe.hpp"

namespace geosketch {

inline double emd_alpha(std::uint32_t i, std::uint32_t d, std::uint64_t n) {
    double L = log2_floor1(n);
    return std::min(1.0, std::ldexp(1.0, static_cast<int>(i)) / (d * L * L));
}

struct CharacterSet {
    HypercubePoint mask;

    static CharacterSet sample(std::uint32_t d, double rate, std::uint64_t seed) {
        CharacterSet S{HypercubePoint(d)};
        for (std::uint32_t k = 0; k < d; ++k)
            if (hash_below(hash_words(seed, k), rate)) S.mask.set(k, true);
        return S;
    }
    static CharacterSet empty(std::uint32_t d) { return CharacterSet{HypercubePoint(d)}; }
    bool contains(std::uint32_t k) const { return mask.bit(k); }
    std::uint32_t size() const { return mask.popcount(); }
};

inline int char_eval(const CharacterSet& S, const HypercubePoint& x) {
    S.mask.check_same(x);
    std::uint32_t c = 0;
    for (std::size_t w = 0; w < x.words().size(); ++w) c += std::popcount(S.mask.words()[w] & x.words()[w]);
    return (c & 1u) ? -1 : 1;
}

// Pr[chi(c) != chi(c')] for c uniform in C_u and c' uniform in C_v, from the
// four counts |C_u|, |C_{u,S}|, |C_v|, |C_{v,S}| where C_S = {chi = -1}.
inline double split_probability(double cu, double cus, double cv, double cvs) {
    if (!(cu > 0) || !(cv > 0)) return 0.0;
    double qu = std::clamp(cus / cu, 0.0, 1.0), qv = std::clamp(cvs / cv, 0.0, 1.0);
    return qu + qv - 2 * qu * qv;
}

inline double split_probability(const PointList& Cu, const PointList& Cv, const CharacterSet& S) {
    double us = 0, vs = 0;
    for (const auto& x : Cu) us += char_eval(S, x) < 0;
    for (const auto& x : Cv) vs += char_eval(S, x) < 0;
    return split_probability(static_cast<double>(Cu.size()), us, static_cast<double>(Cv.size()), vs);
}

// Exact I_i = (2 / alpha_i) sum_v Q_v E_{c in C_u, c' in C_v} (1 - (1 - 2 alpha)^{|c - c'|}) / 2,
// the expectation over S taken in closed form. n = 0 means |A|.
inline double reference_I_i(const QuadtreeSpec& tree, const PointList& A, const PointList& B, std::uint32_t i,
                            std::uint64_t n = 0) {
    if (i == 0 || i > tree.depth()) throw std::invalid_argument("level out of range");
    if (n == 0) n = A.size();
    double alpha = emd_alpha(i, tree.dim(), n);
    struct Child {
        NodeId parent;
        std::int64_t a = 0, b = 0;
        PointList pts;
    };
    std::map<NodeId, PointList> parents;
    std::map<NodeId, Child> children;
    auto put = [&](const HypercubePoint& x, bool isA) {
        auto p = tree.path(x);
        parents[p[i - 1]].push_back(x);
        auto& c = children[p[i]];
        c.parent = p[i - 1];
        (isA ? c.a : c.b) += 1;
        c.pts.push_back(x);
    };
    for (const auto& x : A) put(x, true);
    for (const auto& x : B) put(x, false);
    double total = 0;
    for (const auto& [v, c] : children) {
        double Q = std::fabs(static_cast<double>(c.a - c.b));
        if (Q == 0) continue;
        const auto& Cu = parents.at(c.parent);
        double s = 0;
        for (const auto& x : Cu)
            for (const auto& y : c.pts) s += 0.5 * (1 - std::pow(1 - 2 * alpha, hamming_distance(x, y)));
        total += Q * s / (static_cast<double>(Cu.size()) * static_cast<double>(c.pts.size()));
    }
    return 2 * total / alpha;
}

struct EmdConfig {
    std::uint64_t n = 0;  // 0: taken from the stream
    std::uint32_t d = 0;  // 0: taken from the stream
    double eps = 0.1;
    std::uint64_t seed = 1;
    int passes = 2;
    std::uint32_t level_medians = 3;
    std::uint32_t sets_per_level = 8;
    std::uint32_t reps_per_set = 4;
    std::uint32_t delta_sketch_size = 738;
    L1SamplerShape sampler{5, 32, 64, 0.05};
    std::uint32_t ls1_reps = 64;
    std::uint32_t ls1_id_reps = 5;  // leading LS1 reps that carry identifier planes
    std::uint32_t ls_rows = 5;
    std::uint32_t ls1_buckets = 32;
    std::uint32_t ls2_buckets = 64;
    std::uint32_t ls3_buckets = 64;
    std::uint64_t scan_limit = 1u << 14;
    unsigned threads = 1;

    // Reduced repetition counts sized for a single-core desk run.
    static EmdConfig desk() { return EmdConfig{}; }

    // Repetition counts with every polylog constant set to 1. Not runnable beyond toy n.
    static EmdConfig theory(std::uint64_t n, std::uint32_t d, double eps) {
        auto sat = [](double v) {
            return static_cast<std::uint32_t>(std::min(std::ceil(v), 4294967295.0));
        };
        EmdConfig c;
        c.n = n;
        c.d = d;
        c.eps = eps;
        double L = ceil_log2_floor1(n);
        double tau = 1 / (L * L * L), gamma = tau / L;
        double beta = std::ceil(std::pow(L, 5) / (eps * tau * gamma * gamma * gamma));
        c.level_medians = std::max<std::uint32_t>(1, ceil_log2_floor1(d));
        c.sets_per_level = sat(std::pow(L, 6));
        c.reps_per_set = sat(L);
        c.delta_sketch_size = CauchyL1Sketch::size_for(0.01, 0.01);
        c.sampler = L1SamplerShape{sat(L + 7), sat(12 / (gamma * gamma)), CauchyL1Sketch::size_for(0.01, 0.01), gamma};
        double eta1 = gamma * gamma / L, eta2 = std::pow(gamma, 5) / (L * L);
        c.ls1_reps = sat(L / (gamma * gamma));
        c.ls1_id_reps = c.ls1_reps;
        c.ls_rows = sat(L + 7);
        c.ls1_buckets = sat(12 / (eta1 * eta1));
        c.ls2_buckets = sat(12 / (eta2 * eta2));
        c.ls3_buckets = sat(12 * beta);
        return c;
    }

    nlohmann::json to_json() const {
        return {{"n", n},
                {"d", d},
                {"eps", eps},
                {"seed", seed},
                {"passes", passes},
                {"level_medians", level_medians},
                {"sets_per_level", sets_per_level},
                {"reps_per_set", reps_per_set},
                {"delta_sketch_size", delta_sketch_size},
                {"sampler_rows", sampler.rows},
                {"sampler_buckets", sampler.buckets},
                {"sampler_norm_size", sampler.norm_size},
                {"sampler_gamma", sampler.gamma},
                {"ls1_reps", ls1_reps},
                {"ls1_id_reps", ls1_id_reps},
                {"ls_rows", ls_rows},
                {"ls1_buckets", ls1_buckets},
                {"ls2_buckets", ls2_buckets},
                {"ls3_buckets", ls3_buckets},
                {"scan_limit", scan_limit},
                {"threads", threads}};
    }

    // Keys present in j override the current values; "profile": "theory" starts from theory(n, d, eps).
    void apply_json(const nlohmann::json& j) {
        if (j.contains("profile") && j["profile"] == "theory") {
            auto n0 = j.value("n", n);
            auto d0 = j.value("d", d);
            auto e0 = j.value("eps", eps);
            auto s0 = seed;
            auto p0 = passes;
            *this = theory(n0, d0, e0);
            seed = s0;
            passes = p0;
        }
        n = j.value("n", n);
        d = j.value("d", d);
        eps = j.value("eps", eps);
        seed = j.value("seed", seed);
        passes = j.value("passes", passes);
        level_medians = j.value("level_medians", level_medians);
        sets_per_level = j.value("sets_per_level", sets_per_level);
        reps_per_set = j.value("reps_per_set", reps_per_set);
        delta_sketch_size = j.value("delta_sketch_size", delta_sketch_size);
        sampler.rows = j.value("sampler_rows", sampler.rows);
        sampler.buckets = j.value("sampler_buckets", sampler.buckets);
        sampler.norm_size = j.value("sampler_norm_size", sampler.norm_size);
        sampler.gamma = j.value("sampler_gamma", sampler.gamma);
        ls1_reps = j.value("ls1_reps", ls1_reps);
        ls1_id_reps = j.value("ls1_id_reps", ls1_id_reps);
        ls_rows = j.value("ls_rows", ls_rows);
        ls1_buckets = j.value("ls1_buckets", ls1_buckets);
        ls2_buckets = j.value("ls2_buckets", ls2_buckets);
        ls3_buckets = j.value("ls3_buckets", ls3_buckets);
        scan_limit = j.value("scan_limit", scan_limit);
        threads = j.value("threads", threads);
    }

    void validate() const {
        if (passes != 1 && passes != 2) throw std::invalid_argument("passes must be 1 or 2");
        if (!(eps > 0 && eps < 1)) throw std::invalid_argument("eps must lie in (0,1)");
        if (n == 0 || d == 0) throw std::invalid_argument("n and d must be known");
        if (level_medians == 0 || sets_per_level == 0 || reps_per_set == 0 || ls1_reps == 0)
            throw std::invalid_argument("repetition counts must be positive");
    }
};

// One sampling stack of the one-pass estimator: fresh exponentials t_u, t_v,
// LS1 recovers the parent maximizing P_u / t_u, LS2 the child maximizing Q_v / t_v
// under it, LS3 the four scaled counts at that pair.
class LsStack {
public:
    LsStack() = default;
    LsStack(const EmdConfig& c, const UniverseMap& um, std::uint64_t seed)
        : um_(um), scan_limit_(c.scan_limit), tu_(derive_seed(seed, tag("ls-tu"))),
          tv_(derive_seed(seed, tag("ls-tv"))), alpha_seed_(derive_seed(seed, tag("ls1-alpha"))),
          ls2_(c.ls_rows, c.ls2_buckets, derive_seed(seed, tag("ls2")), um.bits_v()) {
        for (std::uint32_t r = 0; r < c.ls1_reps; ++r)
            ls1_.emplace_back(c.ls_rows, c.ls1_buckets, derive_seed(seed, tag("ls1"), r),
                              r < c.ls1_id_reps ? um.bits_u() : 0);
        for (std::uint32_t q = 0; q < 4; ++q)
            ls3_.emplace_back(c.ls_rows, c.ls3_buckets, derive_seed(seed, tag("ls3"), q));
    }

    double t_u(std::uint64_t u) const { return tu_.variate(u); }
    double t_v(std::uint64_t vkey) const { return tv_.variate(vkey); }

    // sigma: turnstile sign; qsign: sigma times +1 for A, -1 for B.
    void update(std::uint64_t u, std::uint64_t vkey, int sigma, int qsign, bool chi_minus) {
        double iu = 1 / t_u(u), iuv = iu / t_v(vkey);
        for (std::uint32_t r = 0; r < ls1_.size(); ++r)
            ls1_[r].update(u, qsign * alpha(r, vkey) * iu);
        ls2_.update(vkey, qsign * iuv);
        ls3_[0].update(u, sigma * iu);
        ls3_[2].update(vkey, sigma * iuv);
        if (chi_minus) {
            ls3_[1].update(u, sigma * iu);
            ls3_[3].update(vkey, sigma * iuv);
        }
    }

    double ls1_score(std::uint64_t u) const {
        std::vector<double> v(ls1_.size());
        for (std::size_t r = 0; r < ls1_.size(); ++r) v[r] = std::fabs(ls1_[r].estimate(u));
        return median_inplace(v);
    }

    // Argmax of the median |S_u| over decoded candidates, smallest u on ties.
    std::optional<std::uint64_t> ls1() const {
        std::vector<std::uint64_t> cand;
        if (um_.m() <= scan_limit_) {
            for (std::uint64_t u = 0; u < um_.m(); ++u) cand.push_back(u);
        } else {
            for (const auto& cs : ls1_) {
                auto c = cs.candidates(um_.m());
                cand.insert(cand.end(), c.begin(), c.end());
            }
            std::sort(cand.begin(), cand.end());
            cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        }
        std::optional<std::uint64_t> best;
        double top = 0;
        for (auto u : cand) {
            double s = ls1_score(u);
            if (s > top) {
                top = s;
                best = u;
            }
        }
        return best;
    }

    // Child of u maximizing |S_v|; falls back to the first child slot.
    std::uint64_t ls2(std::uint64_t u) const {
        std::vector<std::uint64_t> cand;
        for (auto k : ls2_.candidates(std::numeric_limits<std::uint64_t>::max()))
            if (k < um_.m() * um_.m() && um_.parent_of(k) == u) cand.push_back(k);
        if (cand.empty() && um_.m() <= scan_limit_)
            for (std::uint64_t v = 0; v < um_.m(); ++v) cand.push_back(um_.vkey(u, v));
        std::uint64_t best = um_.vkey(u, 0);
        double top = 0;
        for (auto k : cand) {
            double s = std::fabs(ls2_.estimate(k));
            if (s > top) {
                top = s;
                best = k;
            }
        }
        return best;
    }

    double ls3(std::uint64_t u, std::uint64_t vkey) const {
        double s1 = ls3_[0].estimate(u), s2 = ls3_[1].estimate(u);
        double s3 = ls3_[2].estimate(vkey), s4 = ls3_[3].estimate(vkey);
        if (!(s1 > 0) || !(s3 > 0)) return 0.0;
        return std::clamp(split_probability(s1, s2, s3, s4), 0.0, 1.0);
    }

    // nullopt when LS1 decodes no parent at all.
    std::optional<double> estimate() const {
        auto u = ls1();
        if (!u) return std::nullopt;
        return ls3(*u, ls2(*u));
    }

    void merge(const LsStack& o) {
        for (std::size_t r = 0; r < ls1_.size(); ++r) ls1_[r].merge(o.ls1_[r]);
        ls2_.merge(o.ls2_);
        for (std::size_t q = 0; q < 4; ++q) ls3_[q].merge(o.ls3_[q]);
    }
    friend bool operator==(const LsStack& a, const LsStack& b) {
        return a.ls1_ == b.ls1_ && a.ls2_ == b.ls2_ && a.ls3_ == b.ls3_;
    }

private:
    double alpha(std::uint32_t r, std::uint64_t vkey) const {
        return cauchy_from_unit(unit_open(hash_words(alpha_seed_, r, vkey)));
    }

    UniverseMap um_;
    std::uint64_t scan_limit_ = 0;
    ExpScaler tu_, tv_;
    std::uint64_t alpha_seed_ = 0;
    std::vector<CountSketch> ls1_;
    CountSketch ls2_;
    std::vector<CountSketch> ls3_;
};

// Two-pass inner unit: pass one samples v proportional to |A_v| - |B_v|, pass two
// counts C_u, C_{u,S}, C_v, C_{v,S} at the sample exactly.
struct TwoPassUnit {
    L1Sampler sampler;
    std::optional<std::uint64_t> sampled;
    bool sampled_done = false;
    std::int64_t cu = 0, cus = 0, cv = 0, cvs = 0;

    std::optional<double> estimate() const {
        if (!sampled) return std::nullopt;
        return split_probability(static_cast<double>(cu), static_cast<double>(cus), static_cast<double>(cv),
                                 static_cast<double>(cvs));
    }
    friend bool operator==(const TwoPassUnit& a, const TwoPassUnit& b) {
        return a.sampler == b.sampler && a.sampled == b.sampled && a.cu == b.cu && a.cus == b.cus && a.cv == b.cv &&
               a.cvs == b.cvs;
    }
};

struct EmdLevelReport {
    std::uint32_t level = 0;
    double alpha = 0;
    std::vector<double> delta_hat;  // per median repetition
    std::vector<double> eta_r;
    double eta = 0;
};

struct EmdEstimate {
    double value = 0;
    double additive = 0;  // eps n d in one-pass mode
    std::vector<EmdLevelReport> levels;
};

// State for one level i (parent depth i-1, child depth i). Single writer.
class EmdLevelSketch {
public:
    EmdLevelSketch(const EmdConfig& c, std::uint32_t level)
        : cfg_(c), level_(level), alpha_(emd_alpha(level, c.d, c.n)),
          um_(c.n, derive_seed(c.seed, tag("emd-universe"), level)) {
        const std::uint32_t M = c.level_medians, J = c.sets_per_level, K = c.reps_per_set;
        for (std::uint32_t r = 0; r < M; ++r) {
            delta_.emplace_back(c.delta_sketch_size, derive_seed(c.seed, tag("emd-delta"), level, r));
            for (std::uint32_t j = 0; j < J; ++j) {
                sets_.push_back(CharacterSet::sample(c.d, alpha_, derive_seed(c.seed, tag("emd-chars"), level, r, j)));
                for (std::uint32_t k = 0; k < K; ++k) {
                    auto s = derive_seed(c.seed, tag("emd-unit"), level, r, j, k);
                    if (c.passes == 2)
                        two_.push_back(TwoPassUnit{L1Sampler(um_.bits_v(), s, c.sampler), std::nullopt});
                    else
                        one_.emplace_back(c, um_, s);
                }
            }
        }
    }

    std::uint32_t level() const { return level_; }
    double alpha() const { return alpha_; }
    const UniverseMap& universe() const { return um_; }
    const CharacterSet& set(std::uint32_t r, std::uint32_t j) const { return sets_[r * cfg_.sets_per_level + j]; }
    const LsStack& stack(std::uint32_t r, std::uint32_t j, std::uint32_t k) const { return one_[unit(r, j, k)]; }
    const TwoPassUnit& two_pass_unit(std::uint32_t r, std::uint32_t j, std::uint32_t k) const {
        return two_[unit(r, j, k)];
    }

    void update(const TurnstileUpdate& up, const std::vector<NodeId>& path) {
        if (up.label == Label::X) throw std::invalid_argument("EMD streams carry only A and B points");
        int sigma = up.sign, qsign = up.label == Label::A ? up.sign : -up.sign;
        auto u = um_.u(path[level_ - 1]);
        auto vk = um_.vkey(u, um_.v2(path[level_]));
        for (auto& D : delta_) D.update(vk, qsign);
        const std::uint32_t J = cfg_.sets_per_level, K = cfg_.reps_per_set;
        for (std::uint32_t r = 0; r < cfg_.level_medians; ++r) {
            for (std::uint32_t j = 0; j < J; ++j) {
                if (cfg_.passes == 2) {
                    for (std::uint32_t k = 0; k < K; ++k) two_[unit(r, j, k)].sampler.update(vk, qsign);
                } else {
                    bool minus = char_eval(sets_[r * J + j], up.point) < 0;
                    for (std::uint32_t k = 0; k < K; ++k) one_[unit(r, j, k)].update(u, vk, sigma, qsign, minus);
                }
            }
        }
    }

    void finish_first_pass() {
        for (auto& t : two_) {
            t.sampled = t.sampler.sample();
            t.sampled_done = true;
        }
    }

    void update_second(const TurnstileUpdate& up, const std::vector<NodeId>& path) {
        auto u = um_.u(path[level_ - 1]);
        auto vk = um_.vkey(u, um_.v2(path[level_]));
        const std::uint32_t J = cfg_.sets_per_level, K = cfg_.reps_per_set;
        for (std::uint32_t r = 0; r < cfg_.level_medians; ++r) {
            for (std::uint32_t j = 0; j < J; ++j) {
                int chi = 0;  // evaluated lazily
                for (std::uint32_t k = 0; k < K; ++k) {
                    auto& t = two_[unit(r, j, k)];
                    if (!t.sampled) continue;
                    bool in_u = um_.parent_of(*t.sampled) == u, in_v = *t.sampled == vk;
                    if (!in_u && !in_v) continue;
                    if (chi == 0) chi = char_eval(sets_[r * J + j], up.point);
                    if (in_u) {
                        t.cu += up.sign;
                        if (chi < 0) t.cus += up.sign;
                    }
                    if (in_v) {
                        t.cv += up.sign;
                        if (chi < 0) t.cvs += up.sign;
                    }
                }
            }
        }
    }

    EmdLevelReport estimate() const {
        EmdLevelReport rep;
        rep.level = level_;
        rep.alpha = alpha_;
        const double L = log2_floor1(cfg_.n);
        const std::uint32_t J = cfg_.sets_per_level, K = cfg_.reps_per_set;
        for (std::uint32_t r = 0; r < cfg_.level_medians; ++r) {
            double dh = delta_[r].estimate();
            rep.delta_hat.push_back(dh);
            bool zero = cfg_.passes == 1 ? dh < 2 * cfg_.eps * cfg_.n / (L * L * L) : !(dh > 0);
            if (zero) {
                rep.eta_r.push_back(0.0);
                continue;
            }
            double sum_j = 0;
            std::uint32_t ok_j = 0;
            for (std::uint32_t j = 0; j < J; ++j) {
                double s = 0;
                std::uint32_t ok = 0;
                for (std::uint32_t k = 0; k < K; ++k) {
                    auto e = cfg_.passes == 2 ? two_[unit(r, j, k)].estimate() : one_[unit(r, j, k)].estimate();
                    if (e) {
                        s += *e;
                        ++ok;
                    }
                }
                if (ok > 0) {
                    sum_j += s / ok;
                    ++ok_j;
                }
            }
            double avg = ok_j > 0 ? sum_j / ok_j : 0.0;
            rep.eta_r.push_back(3 * dh / alpha_ * (avg + 1 / (8 * L * L)));
        }
        auto v = rep.eta_r;
        rep.eta = median_inplace(v);
        return rep;
    }

    void merge(const EmdLevelSketch& o) {
        if (level_ != o.level_) throw std::invalid_argument("merging different levels");
        for (std::size_t r = 0; r < delta_.size(); ++r) delta_[r].merge(o.delta_[r]);
        for (std::size_t k = 0; k < one_.size(); ++k) one_[k].merge(o.one_[k]);
        for (std::size_t k = 0; k < two_.size(); ++k) {
            auto& t = two_[k];
            const auto& s = o.two_[k];
            if (t.sampled_done != s.sampled_done || t.sampled != s.sampled)
                throw std::invalid_argument("merging two-pass states with different samples");
            t.sampler.merge(s.sampler);
            t.cu += s.cu;
            t.cus += s.cus;
            t.cv += s.cv;
            t.cvs += s.cvs;
        }
    }

    friend bool operator==(const EmdLevelSketch& a, const EmdLevelSketch& b) {
        return a.level_ == b.level_ && a.delta_ == b.delta_ && a.one_ == b.one_ && a.two_ == b.two_;
    }

private:
    std::size_t unit(std::uint32_t r, std::uint32_t j, std::uint32_t k) const {
        return (static_cast<std::size_t>(r) * cfg_.sets_per_level + j) * cfg_.reps_per_set + k;
    }

    EmdConfig cfg_;
    std::uint32_t level_;
    double alpha_;
    UniverseMap um_;
    std::vector<CauchyL1Sketch> delta_;
    std::vector<CharacterSet> sets_;
    std::vector<LsStack> one_;
    std::vector<TwoPassUnit> two_;
};

inline QuadtreeSpec emd_tree(const EmdConfig& c) { return sample_quadtree(c.d, derive_seed(c.seed, tag("emd-tree"))); }

// All levels of the EMD estimator over one sampled quadtree.
class EmdSketch {
public:
    explicit EmdSketch(const EmdConfig& c) : cfg_(c), tree_((c.validate(), emd_tree(c))) {
        for (std::uint32_t i = 1; i <= tree_.depth(); ++i) levels_.emplace_back(c, i);
    }

    const EmdConfig& config() const { return cfg_; }
    const QuadtreeSpec& tree() const { return tree_; }
    const std::vector<EmdLevelSketch>& levels() const { return levels_; }

    void update(const TurnstileUpdate& up) {
        auto p = tree_.path(up.point);
        for (auto& L : levels_) L.update(up, p);
    }
    void finish_first_pass() {
        for (auto& L : levels_) L.finish_first_pass();
    }
    void update_second(const TurnstileUpdate& up) {
        auto p = tree_.path(up.point);
        for (auto& L : levels_) L.update_second(up, p);
    }

    // Feeds a whole pass; levels are independent, so they may be split across threads.
    void ingest(const Stream& s, bool second = false) {
        std::vector<std::vector<NodeId>> paths;
        paths.reserve(s.size());
        for (const auto& up : s) paths.push_back(tree_.path(up.point));
        auto work = [&](std::size_t first, std::size_t step) {
            for (std::size_t l = first; l < levels_.size(); l += step)
                for (std::size_t k = 0; k < s.size(); ++k)
                    second ? levels_[l].update_second(s[k], paths[k]) : levels_[l].update(s[k], paths[k]);
        };
        unsigned t = std::max(1u, std::min<unsigned>(cfg_.threads, static_cast<unsigned>(levels_.size())));
        if (t == 1) {
            work(0, 1);
            return;
        }
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < t; ++w) pool.emplace_back(work, w, t);
        for (auto& th : pool) th.join();
    }

    EmdEstimate estimate() const {
        EmdEstimate e;
        for (const auto& L : levels_) {
            e.levels.push_back(L.estimate());
            e.value += e.levels.back().eta;
        }
        if (cfg_.passes == 1) {
            e.additive = cfg_.eps * static_cast<double>(cfg_.n) * cfg_.d;
            e.value += e.additive;
        }
        return e;
    }

    void merge(const EmdSketch& o) {
        if (!(o.tree_.levels() == tree_.levels())) throw std::invalid_argument("merging sketches over different trees");
        for (std::size_t k = 0; k < levels_.size(); ++k) levels_[k].merge(o.levels_[k]);
    }
    friend bool operator==(const EmdSketch& a, const EmdSketch& b) { return a.levels_ == b.levels_; }

private:
    EmdConfig cfg_;
    QuadtreeSpec tree_;
    std::vector<EmdLevelSketch> levels_;
};

// Fills n and d from the final multisets and checks balance.
inline EmdConfig resolve_emd_config(const Stream& s, EmdConfig c) {
    auto f = materialize(s);
    if (f.X.total() != 0) throw std::invalid_argument("EMD streams carry only A and B points");
    if (f.A.total() != f.B.total()) throw std::invalid_argument("final multisets A and B differ in size");
    if (c.n == 0) c.n = static_cast<std::uint64_t>(std::max<std::int64_t>(1, f.A.total()));
    if (c.d == 0) c.d = f.d;
    c.validate();
    return c;
}

inline EmdEstimate emd_estimate(const Stream& s, EmdConfig c) {
    c = resolve_emd_config(s, c);
    EmdSketch sk(c);
    sk.ingest(s);
    if (c.passes == 2) {
        sk.finish_first_pass();
        sk.ingest(s, true);
    }
    return sk.estimate();
}

// Exact per-level quantities for side checks, keyed as the sketches key them.
struct EmdLevelTruth {
    std::map<std::uint64_t, double> P, Cu, CuS;  // by u
    std::map<std::uint64_t, double> Q, Cv, CvS;  // by V key
    double delta = 0;
};

inline EmdLevelTruth emd_level_truth(const QuadtreeSpec& tree, const UniverseMap& um, const PointList& A,
                                     const PointList& B, std::uint32_t i, const CharacterSet* S = nullptr) {
    EmdLevelTruth t;
    std::map<std::uint64_t, double> signedQ;
    auto put = [&](const HypercubePoint& x, double s) {
        auto p = tree.path(x);
        auto u = um.u(p[i - 1]);
        auto vk = um.vkey(u, um.v2(p[i]));
        signedQ[vk] += s;
        t.Cu[u] += 1;
        t.Cv[vk] += 1;
        bool minus = S && char_eval(*S, x) < 0;
        t.CuS[u] += minus;
        t.CvS[vk] += minus;
    };
    for (const auto& x : A) put(x, 1);
    for (const auto& x : B) put(x, -1);
    for (const auto& [vk, q] : signedQ) {
        t.Q[vk] = std::fabs(q);
        t.P[um.parent_of(vk)] += std::fabs(q);
        t.delta += std::fabs(q);
    }
    return t;
}

struct EmdEventCheck {
    bool e1 = false, e2 = false, e3 = false, e4 = false;
    std::optional<std::uint64_t> u_star, v_star;
    bool all() const { return e1 && e2 && e3 && e4; }
};

// Exact evaluation of the four events for scalings t_u, t_v; n is the instance size.
inline EmdEventCheck check_emd_events(const EmdLevelTruth& t, const UniverseMap& um,
                                      const std::function<double(std::uint64_t)>& tu,
                                      const std::function<double(std::uint64_t)>& tv, double gamma, std::size_t beta,
                                      double n) {
    EmdEventCheck c;
    const double bound = 4 * std::log(n / gamma) / gamma;
    double sumP = 0, best = -1, second = 0;
    for (const auto& [u, p] : t.P) {
        if (p == 0) continue;
        double s = p / tu(u);
        sumP += s;
        if (s > best) {
            second = std::max(second, best);
            best = s;
            c.u_star = u;
        } else {
            second = std::max(second, s);
        }
    }
    if (!c.u_star) return c;
    c.e1 = sumP <= bound * t.delta && best >= gamma * t.delta && best >= (1 + gamma) * second;

    double sumQ = 0, bq = -1, sq = 0;
    for (const auto& [vk, q] : t.Q) {
        if (q == 0) continue;
        sumQ += q / (tu(um.parent_of(vk)) * tv(vk));
        if (um.parent_of(vk) != *c.u_star) continue;
        double s = q / tv(vk);
        if (s > bq) {
            sq = std::max(sq, bq);
            bq = s;
            c.v_star = vk;
        } else {
            sq = std::max(sq, s);
        }
    }
    double Pstar = t.P.at(*c.u_star);
    c.e2 = sumQ <= bound * sumP && bq >= gamma * Pstar && bq >= (1 + gamma) * sq;

    std::vector<double> cu, cv;
    double sumC = 0;
    for (const auto& [u, k] : t.Cu) {
        if (k == 0) continue;
        cu.push_back(k / tu(u));
        sumC += cu.back();
    }
    for (const auto& [vk, k] : t.Cv)
        if (k != 0) cv.push_back(k / (tu(um.parent_of(vk)) * tv(vk)));
    const double rb = 12 / std::sqrt(static_cast<double>(beta));
    c.e3 = sumC <= bound * n && tail_truncated_norms(cu, beta).first <= rb * n;
    c.e4 = tail_truncated_norms(cv, beta).first <= rb * sumC;
    return c;
}

}  // namespace geosketch

#pragma once

#include <chrono>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "emd_sketch.hpp"
#include "json.hpp"
#include "mst_sketch.hpp"
#include "offline.hpp"
#include "turnstile.hpp"

namespace geosketch {

enum class Problem { Emd, Mst };

inline Problem parse_problem(const std::string& s) {
    if (s == "emd" || s == "EMD") return Problem::Emd;
    if (s == "mst" || s == "MST") return Problem::Mst;
    throw std::invalid_argument("problem must be emd or mst");
}

struct EstimateReport {
    Problem problem = Problem::Emd;
    double estimate = 0;
    std::optional<double> exact;
    std::optional<double> ratio;  // estimate / exact, omitted when exact is 0
    std::string oracle_note;      // why exact is missing when it was requested
    std::uint64_t n = 0;
    std::uint32_t d = 0;
    double eps = 0;
    int passes = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0;
    nlohmann::json levels = nlohmann::json::array();

    nlohmann::json to_json() const {
        nlohmann::json j{{"problem", problem == Problem::Emd ? "EMD" : "MST"},
                         {"estimate", estimate},
                         {"n", n},
                         {"d", d},
                         {"seed", seed},
                         {"wall_seconds", wall_seconds},
                         {"levels", levels}};
        if (problem == Problem::Emd) {
            j["eps"] = eps;
            j["passes"] = passes;
        }
        if (exact) j["exact"] = *exact;
        if (ratio) j["ratio"] = *ratio;
        if (!oracle_note.empty()) j["oracle_note"] = oracle_note;
        return j;
    }

    static std::string csv_header() { return "problem,n,d,eps,passes,seed,estimate,exact,ratio,wall_seconds"; }
    std::string csv_row() const {
        std::ostringstream o;
        o.precision(17);
        o << (problem == Problem::Emd ? "EMD" : "MST") << ',' << n << ',' << d << ',';
        if (problem == Problem::Emd) o << eps << ',' << passes;
        else o << ',';
        o << ',' << seed << ',' << estimate << ',';
        if (exact) o << *exact;
        o << ',';
        if (ratio) o << *ratio;
        o << ',' << wall_seconds;
        return o.str();
    }
};

struct RunOptions {
    bool oracle = false;
    EmdConfig emd;
    MstConfig mst;
};

inline EstimateReport run_estimator(const Stream& s, Problem problem, const RunOptions& opt) {
    EstimateReport r;
    r.problem = problem;
    auto t0 = std::chrono::steady_clock::now();
    if (problem == Problem::Emd) {
        auto c = resolve_emd_config(s, opt.emd);
        auto e = emd_estimate(s, c);
        r.estimate = e.value;
        r.n = c.n;
        r.d = c.d;
        r.eps = c.eps;
        r.passes = c.passes;
        r.seed = c.seed;
        for (const auto& lv : e.levels)
            r.levels.push_back({{"level", lv.level}, {"alpha", lv.alpha}, {"eta", lv.eta}, {"delta_hat", lv.delta_hat}});
    } else {
        auto c = resolve_mst_config(s, opt.mst);
        auto e = mst_estimate(s, c);
        r.estimate = e.value;
        r.n = c.n;
        r.d = c.d;
        r.seed = c.seed;
        for (const auto& lv : e.levels)
            r.levels.push_back({{"level", lv.level},
                                {"l0", lv.l0},
                                {"used", lv.used},
                                {"samples", lv.samples},
                                {"ok", lv.ok},
                                {"differ", lv.differ},
                                {"mu", lv.mu}});
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.oracle) {
        auto f = materialize(s);
        if (problem == Problem::Emd) {
            auto A = f.A.expand(), B = f.B.expand();
            if (A.size() > kExactEmdCap)
                r.oracle_note = "skipped: EMD oracle is capped at n=" + std::to_string(kExactEmdCap);
            else
                r.exact = exact_emd(A, B);
        } else {
            PointMultiset all;
            for (const auto* m : {&f.A, &f.B, &f.X})
                for (const auto& [x, k] : m->entries()) all.add(x, k);
            PointList X;
            for (const auto& [x, k] : all.entries()) X.push_back(x);
            if (X.size() > kExactMstCap)
                r.oracle_note = "skipped: MST oracle is capped at n=" + std::to_string(kExactMstCap);
            else
                r.exact = exact_mst(X);
        }
        if (r.exact && *r.exact > 0) r.ratio = r.estimate / *r.exact;
    }
    return r;
}

}  // namespace geosketch

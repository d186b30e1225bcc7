#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "hash.hpp"

namespace geosketch {

// Chambers-Mallows-Stuck generator for a symmetric p-stable variable, p in (0,2].
inline double stable_cms(double p, double r, double theta) {
    double w = std::log(1.0 / r);
    return std::sin(p * theta) / std::pow(std::cos(theta), 1.0 / p) *
           std::pow(std::cos(theta * (1.0 - p)) / w, (1.0 - p) / p);
}

inline void check_small_p_inputs(double p, double r, double theta) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("p must lie in (0,1)");
    if (!(r > 0.0 && r < 1.0)) throw std::domain_error("r must lie in (0,1)");
    constexpr double half_pi = std::numbers::pi / 2;
    if (!(theta > -half_pi && theta < half_pi)) throw std::domain_error("theta must lie in (-pi/2, pi/2)");
}

inline double sample_p_stable(double p, double r, double theta) {
    check_small_p_inputs(p, r, theta);
    return stable_cms(p, r, theta);
}

// Natural log of |sample_p_stable(p, r, theta)|; finite far outside double range.
inline double log_abs_p_stable(double p, double r, double theta) {
    check_small_p_inputs(p, r, theta);
    double a = std::fabs(theta);
    if (a == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(std::sin(p * a)) - std::log(std::cos(a)) / p +
           ((1.0 - p) / p) * (std::log(std::cos(a * (1.0 - p))) - std::log(std::log(1.0 / r)));
}

inline double cauchy_from_unit(double u) { return std::tan(std::numbers::pi * (u - 0.5)); }

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6 * (fa + 4 * flm + fm);
    double right = (b - m) / 6 * (fm + 4 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15 * tol) return left + right + delta / 15;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    // Split into panels first so sharp features are not skipped.
    constexpr int panels = 64;
    double h = (b - a) / panels, total = 0;
    for (int k = 0; k < panels; ++k) {
        double x0 = a + k * h, x1 = x0 + h, xm = 0.5 * (x0 + x1);
        double f0 = f(x0), fm = f(xm), f1 = f(x1);
        double whole = h / 6 * (f0 + 4 * fm + f1);
        total += adaptive_simpson(f, x0, x1, f0, fm, f1, whole, tol / panels, 40);
    }
    return total;
}

// Pr[|D_p| <= e^{log_z}] for the generator with r ~ U(0,1), theta ~ U(-pi/2, pi/2).
inline double abs_stable_cdf_log(double p, double log_z) {
    constexpr double half_pi = std::numbers::pi / 2;
    auto integrand = [&](double th) -> double {
        if (th <= 0.0) return 1.0;
        if (th >= half_pi) return 0.0;
        // |g(r,th)| <= z  iff  r <= exp(-exp(L)).
        double L = std::log(std::cos(th * (1.0 - p))) +
                   (p / (1.0 - p)) * (std::log(std::sin(p * th)) - std::log(std::cos(th)) / p - log_z);
        return std::exp(-std::exp(L));
    };
    return integrate(integrand, 0.0, half_pi, 1e-13) / half_pi;
}

inline double log_g_diag(double p, double t) {
    // g(t, pi t / 2): theta on the same quantile as r.
    return log_abs_p_stable(p, t, std::numbers::pi * t / 2);
}

}  // namespace detail

// ln median(|D_p|), by bisection over t in [0.1, 0.9] on z = g(t, pi t/2).
inline double log_median_abs_stable(double p) {
    static std::mutex mu;
    static std::map<double, double> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        if (auto it = cache.find(p); it != cache.end()) return it->second;
    }
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("p must lie in (0,1)");
    double lo = 0.1, hi = 0.9;
    double llo = detail::log_g_diag(p, lo), lhi = detail::log_g_diag(p, hi);
    if (detail::abs_stable_cdf_log(p, llo) > 0.5 || detail::abs_stable_cdf_log(p, lhi) < 0.5)
        throw std::runtime_error("median bracket failed");
    while (lhi - llo > 1e-9) {
        double mid = 0.5 * (lo + hi);
        double lm = detail::log_g_diag(p, mid);
        if (detail::abs_stable_cdf_log(p, lm) < 0.5) {
            lo = mid;
            llo = lm;
        } else {
            hi = mid;
            lhi = lm;
        }
        if (hi - lo < 1e-15) break;
    }
    double result = 0.5 * (llo + lhi);
    std::lock_guard<std::mutex> lock(mu);
    cache[p] = result;
    return result;
}

inline double median_abs_stable(double p) { return std::exp(log_median_abs_stable(p)); }

// Keyed coefficient of a small-p stable sketch: sign and ln|value|.
struct LogCoefficient {
    int sign;
    double log_abs;
};

inline LogCoefficient stable_coefficient(double p, std::uint64_t seed, std::uint64_t key) {
    double r = unit_open(hash_words(seed, key, 1));
    double theta = (unit_open(hash_words(seed, key, 2)) - 0.5) * std::numbers::pi;
    return {theta > 0 ? 1 : -1, log_abs_p_stable(p, r, theta)};
}

}  // namespace geosketch

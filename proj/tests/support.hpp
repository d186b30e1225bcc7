#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "geosketch/hypercube.hpp"

namespace testkit {

using geosketch::HypercubePoint;
using geosketch::PointList;

inline HypercubePoint random_point(std::mt19937_64& rng, std::uint32_t d) {
    HypercubePoint x(d);
    for (auto& w : x.words()) w = rng();
    if (d < 64) x.words()[0] &= (std::uint64_t{1} << d) - 1;
    return x;
}

inline PointList random_points(std::mt19937_64& rng, std::size_t n, std::uint32_t d) {
    PointList out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(random_point(rng, d));
    return out;
}

// Points around a few centers with independent bit flips.
inline PointList clustered_points(std::mt19937_64& rng, std::size_t n, std::uint32_t d, std::size_t clusters,
                                  double flip) {
    PointList centers = random_points(rng, clusters, d);
    std::bernoulli_distribution coin(flip);
    PointList out;
    for (std::size_t k = 0; k < n; ++k) {
        HypercubePoint x = centers[rng() % clusters];
        for (std::uint32_t b = 0; b < d; ++b)
            if (coin(rng)) x.flip(b);
        out.push_back(x);
    }
    return out;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::fabs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

// Critical value of the two-sample KS test at level 0.01.
inline double ks_critical_01(std::size_t n, std::size_t m) {
    return 1.628 * std::sqrt(double(n + m) / (double(n) * double(m)));
}

template <class K>
double tv_distance(const std::map<K, double>& p, const std::map<K, double>& q) {
    double s = 0;
    for (const auto& [k, v] : p) {
        auto it = q.find(k);
        s += std::fabs(v - (it == q.end() ? 0.0 : it->second));
    }
    for (const auto& [k, v] : q)
        if (!p.count(k)) s += std::fabs(v);
    return s / 2;
}

template <class K>
std::map<K, double> normalize(const std::map<K, std::size_t>& counts) {
    double total = 0;
    for (const auto& [k, c] : counts) total += double(c);
    std::map<K, double> out;
    for (const auto& [k, c] : counts) out[k] = double(c) / total;
    return out;
}

}  // namespace testkit

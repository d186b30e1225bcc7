#include <random>

#include "doctest.h"
#include "geosketch/hypercube.hpp"
#include "support.hpp"

using namespace geosketch;

TEST_SUITE("hypercube") {

TEST_CASE("hamming distance on small examples") {
    CHECK(hamming_distance(HypercubePoint::from_bits("0000"), HypercubePoint::from_bits("0000")) == 0);
    CHECK(hamming_distance(HypercubePoint::from_bits("0000"), HypercubePoint::from_bits("1111")) == 4);
    CHECK(hamming_distance(HypercubePoint::from_bits("1010"), HypercubePoint::from_bits("0011")) == 2);
    CHECK_THROWS(hamming_distance(HypercubePoint(4), HypercubePoint(8)));
}

TEST_CASE("dimension must be a power of two") {
    CHECK_THROWS(HypercubePoint(6));
    CHECK_THROWS(HypercubePoint(0));
    CHECK_THROWS(HypercubePoint(1u << 17));
    CHECK_NOTHROW(HypercubePoint(1u << 16));
}

TEST_CASE("hamming distance is a metric on random triples") {
    std::mt19937_64 rng(11);
    for (std::uint32_t d : {8u, 64u, 256u}) {
        for (int t = 0; t < 300; ++t) {
            auto x = testkit::random_point(rng, d), y = testkit::random_point(rng, d), z = testkit::random_point(rng, d);
            CHECK(hamming_distance(x, y) == hamming_distance(y, x));
            CHECK(hamming_distance(x, x) == 0);
            CHECK((hamming_distance(x, y) == 0) == (x == y));
            CHECK(hamming_distance(x, z) <= hamming_distance(x, y) + hamming_distance(y, z));
        }
    }
}

TEST_CASE("hex round trip, most significant word first") {
    auto x = HypercubePoint::from_word(8, 0x0f);
    CHECK(x.to_hex() == "0f");
    CHECK(HypercubePoint::from_hex("0f", 8) == x);
    CHECK(x.bit(0));
    CHECK_FALSE(x.bit(4));

    HypercubePoint y(128);
    y.set(0, true);
    y.set(127, true);
    CHECK(y.to_hex() == "80000000000000000000000000000001");
    CHECK(HypercubePoint::from_hex(y.to_hex(), 128) == y);
    CHECK(HypercubePoint::dim_for_hex_length(2) == 8);
    CHECK(HypercubePoint::dim_for_hex_length(16) == 64);
    CHECK_THROWS(HypercubePoint::from_hex("0g", 8));
    CHECK_THROWS(HypercubePoint::from_hex("f", 8));

    std::mt19937_64 rng(3);
    for (std::uint32_t d : {4u, 16u, 64u, 512u}) {
        auto z = testkit::random_point(rng, d);
        CHECK(HypercubePoint::from_hex(z.to_hex(), d) == z);
    }
}

TEST_CASE("multiset bookkeeping") {
    PointMultiset m;
    auto a = HypercubePoint::from_bits("0101"), b = HypercubePoint::from_bits("1100");
    m.add(a, 2);
    m.add(b);
    m.add(a, -1);
    CHECK(m.total() == 2);
    CHECK(m.distinct() == 2);
    m.add(b, -1);
    CHECK(m.distinct() == 1);
    CHECK(m.expand() == PointList{a});
    m.add(b, -1);
    CHECK_FALSE(m.nonnegative());
}

TEST_CASE("embedding is deterministic and equal inputs map equally") {
    EmbeddingFamily fam(4, 64, 1.5, 10.0, 77);
    std::vector<double> x{0.1, 2.0, -1.0, 3.5};
    CHECK(embed_point(fam, x) == embed_point(fam, x));
    EmbeddingFamily again(4, 64, 1.5, 10.0, 77);
    CHECK(embed_point(again, x) == embed_point(fam, x));
    CHECK_THROWS(EmbeddingFamily(4, 60, 1.5, 10.0, 1));
    CHECK_THROWS(EmbeddingFamily(4, 64, 0.5, 10.0, 1));
}

TEST_CASE("l1 embedding of 16 points has distortion at most 4 for most families") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::uint32_t din = 8, dout = 2048;
    std::vector<std::vector<double>> pts(16, std::vector<double>(din));
    for (auto& p : pts)
        for (auto& c : p) c = unif(rng);
    double R = embedding_scale(pts, 1.0);
    int good = 0;
    const int families = 100;
    for (int f = 0; f < families; ++f) {
        EmbeddingFamily fam(din, dout, 1.0, R, 1000 + f);
        std::vector<HypercubePoint> img;
        for (const auto& p : pts) img.push_back(fam.embed(p));
        double lo = 1e300, hi = 0;
        for (std::size_t a = 0; a < pts.size(); ++a) {
            for (std::size_t b = a + 1; b < pts.size(); ++b) {
                double ratio = hamming_distance(img[a], img[b]) / lp_distance(pts[a], pts[b], 1.0);
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
        }
        if (lo > 0 && hi / lo <= 4.0) ++good;
    }
    CHECK(good >= 90);
}

TEST_CASE("lp embedding: differing fraction tracks distance over R within a factor 4") {
    const std::uint32_t din = 6, dout = 8192;
    const double p = 1.5;
    std::vector<double> origin(din, 0.0);
    std::vector<std::vector<double>> far_pts;
    for (double s : {0.1, 0.25, 0.5, 1.0}) {
        std::vector<double> y(din);
        for (std::uint32_t i = 0; i < din; ++i) y[i] = s * (i % 2 == 0 ? 1.0 : -0.5);
        far_pts.push_back(y);
    }
    std::vector<std::vector<double>> all = far_pts;
    all.push_back(origin);
    double R = embedding_scale(all, p, 8.0);
    EmbeddingFamily fam(din, dout, p, R, 5);
    auto o = fam.embed(origin);
    double lo = 1e300, hi = 0;
    for (const auto& y : far_pts) {
        double frac = hamming_distance(o, fam.embed(y)) / double(dout);
        double ratio = frac / (lp_distance(origin, y, p) / R);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    CHECK(lo > 0);
    CHECK(hi / lo <= 4.0);
}

}  // TEST_SUITE

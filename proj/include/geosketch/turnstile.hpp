#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypercube.hpp"

namespace geosketch {

enum class Label : std::uint8_t { A = 0, B = 1, X = 2 };

inline char label_char(Label l) { return l == Label::A ? 'A' : l == Label::B ? 'B' : 'X'; }

struct TurnstileUpdate {
    int sign = 1;  // +1 insertion, -1 deletion
    Label label = Label::X;
    HypercubePoint point;
    friend bool operator==(const TurnstileUpdate&, const TurnstileUpdate&) = default;
};

using Stream = std::vector<TurnstileUpdate>;

struct FinalSets {
    PointMultiset A, B, X;
    std::uint32_t d = 0;
};

// Net multisets of a stream; throws if a multiplicity ends negative.
inline FinalSets materialize(const Stream& s) {
    FinalSets f;
    for (const auto& u : s) {
        if (f.d == 0) f.d = u.point.dim();
        if (u.point.dim() != f.d) throw std::invalid_argument("stream mixes point dimensions");
        auto& m = u.label == Label::A ? f.A : u.label == Label::B ? f.B : f.X;
        m.add(u.point, u.sign);
    }
    if (!f.A.nonnegative() || !f.B.nonnegative() || !f.X.nonnegative())
        throw std::invalid_argument("stream ends with a negative multiplicity");
    return f;
}

inline Stream insertions(const PointList& pts, Label label) {
    Stream s;
    for (const auto& x : pts) s.push_back({1, label, x});
    return s;
}

}  // namespace geosketch

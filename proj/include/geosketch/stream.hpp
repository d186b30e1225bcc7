#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bytes.hpp"
#include "hypercube.hpp"
#include "turnstile.hpp"

namespace geosketch {

// Text format: one update per line, "<sign> <label> <hex>", e.g. "+ A 0f".
// '#' starts a comment. "# dim <d>" fixes the dimension of the lines after it;
// otherwise it follows from the hex length. Binary format: "GSK1", u32 d, u64 count,
// then per record i8 sign, u8 label, ceil(d/64) little-endian u64 words.

class StreamParseError : public std::runtime_error {
public:
    StreamParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t k = 0;
    while (k < s.size()) {
        while (k < s.size() && (s[k] == ' ' || s[k] == '\t' || s[k] == '\r')) ++k;
        std::size_t start = k;
        while (k < s.size() && s[k] != ' ' && s[k] != '\t' && s[k] != '\r') ++k;
        if (k > start) out.push_back(s.substr(start, k - start));
    }
    return out;
}

inline Label parse_label(char c) {
    switch (c) {
        case 'A': return Label::A;
        case 'B': return Label::B;
        case 'X': return Label::X;
        default: throw std::invalid_argument(std::string("unknown label '") + c + "'");
    }
}

}  // namespace detail

inline Stream parse_stream_text(std::string_view text) {
    Stream out;
    std::uint32_t dim = 0;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            auto comment = detail::split_ws(line.substr(hash + 1));
            if (comment.size() == 2 && comment[0] == "dim") {
                try {
                    dim = static_cast<std::uint32_t>(std::stoul(std::string(comment[1])));
                    HypercubePoint probe(dim);
                } catch (const std::exception&) {
                    throw StreamParseError(line_no, "bad dimension pragma");
                }
            }
            line = line.substr(0, hash);
        }
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 3) throw StreamParseError(line_no, "expected '<sign> <label> <hex>'");
        TurnstileUpdate u;
        if (tok[0] == "+")
            u.sign = 1;
        else if (tok[0] == "-")
            u.sign = -1;
        else
            throw StreamParseError(line_no, "sign must be + or -");
        try {
            if (tok[1].size() != 1) throw std::invalid_argument("label must be one of A, B, X");
            u.label = detail::parse_label(tok[1][0]);
            std::uint32_t d = dim ? dim : HypercubePoint::dim_for_hex_length(tok[2].size());
            u.point = HypercubePoint::from_hex(tok[2], d);
        } catch (const std::exception& e) {
            throw StreamParseError(line_no, e.what());
        }
        out.push_back(std::move(u));
    }
    return out;
}

inline std::string write_stream_text(const Stream& s) {
    std::string out;
    if (!s.empty()) out += "# dim " + std::to_string(s.front().point.dim()) + "\n";
    for (const auto& u : s) {
        if (u.point.dim() != s.front().point.dim()) throw std::invalid_argument("stream mixes point dimensions");
        out += u.sign > 0 ? '+' : '-';
        out += ' ';
        out += label_char(u.label);
        out += ' ';
        out += u.point.to_hex();
        out += '\n';
    }
    return out;
}

inline std::vector<unsigned char> write_stream_binary(const Stream& s) {
    ByteWriter w;
    w.put_magic("GSK1");
    std::uint32_t d = s.empty() ? 0 : s.front().point.dim();
    w.put(d);
    w.put(static_cast<std::uint64_t>(s.size()));
    for (const auto& u : s) {
        if (u.point.dim() != d) throw std::invalid_argument("stream mixes point dimensions");
        w.put(static_cast<std::int8_t>(u.sign));
        w.put(static_cast<std::uint8_t>(u.label));
        for (auto word : u.point.words()) w.put(word);
    }
    return w.take();
}

inline Stream parse_stream_binary(const std::vector<unsigned char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("GSK1");
    auto d = r.get<std::uint32_t>();
    auto count = r.get<std::uint64_t>();
    Stream out;
    if (count == 0) {
        if (!r.done()) throw std::runtime_error("trailing bytes after stream");
        return out;
    }
    HypercubePoint proto(d);
    const std::size_t record = 2 + 8 * proto.words().size();
    if (count > bytes.size() / record) throw std::runtime_error("truncated stream");
    out.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        TurnstileUpdate u;
        auto sign = r.get<std::int8_t>();
        auto label = r.get<std::uint8_t>();
        if (sign != 1 && sign != -1) throw std::runtime_error("record " + std::to_string(k) + ": bad sign");
        if (label > 2) throw std::runtime_error("record " + std::to_string(k) + ": bad label");
        u.sign = sign;
        u.label = static_cast<Label>(label);
        u.point = proto;
        for (auto& word : u.point.words()) word = r.get<std::uint64_t>();
        if (d < 64 && (u.point.words()[0] >> d) != 0)
            throw std::runtime_error("record " + std::to_string(k) + ": point exceeds dimension");
        out.push_back(std::move(u));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes after stream");
    return out;
}

// Binary when the input starts with the magic, text otherwise.
inline Stream parse_stream(const std::vector<unsigned char>& bytes) {
    if (bytes.size() >= 4 && std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) == "GSK1")
        return parse_stream_binary(bytes);
    return parse_stream_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace geosketch

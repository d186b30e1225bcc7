#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geosketch {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
    const std::vector<unsigned char>& bytes() const { return buf_; }
    std::vector<unsigned char> take() { return std::move(buf_); }

private:
    std::vector<unsigned char> buf_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t size) : p_(data), end_(data + size) {}
    explicit ByteReader(const std::vector<unsigned char>& v) : ByteReader(v.data(), v.size()) {}

    template <class T>
    T get() {
        if (static_cast<std::size_t>(end_ - p_) < sizeof(T)) throw std::runtime_error("truncated sketch state");
        T v;
        std::memcpy(&v, p_, sizeof(T));
        p_ += sizeof(T);
        return v;
    }
    void expect_magic(std::string_view m) {
        if (static_cast<std::size_t>(end_ - p_) < m.size() || std::memcmp(p_, m.data(), m.size()) != 0)
            throw std::runtime_error("bad magic: expected " + std::string(m));
        p_ += m.size();
    }
    bool done() const { return p_ == end_; }

private:
    const unsigned char* p_;
    const unsigned char* end_;
};

}  // namespace geosketch

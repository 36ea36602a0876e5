#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace topos {

using Bytes = std::vector<uint8_t>;
using Digest32 = std::array<uint8_t, 32>;

inline std::string to_hex(const uint8_t* data, size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }

template <size_t N>
std::string to_hex(const std::array<uint8_t, N>& a) { return to_hex(a.data(), N); }

inline std::optional<Bytes> from_hex(const std::string& s) {
    if (s.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<uint8_t>(hi << 4 | lo));
    }
    return out;
}

// Canonical binary writer: little-endian fixed ints, u32 length prefixes.
class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void raw(const uint8_t* data, size_t len) { buf_.insert(buf_.end(), data, data + len); }
    void raw(const Bytes& b) { raw(b.data(), b.size()); }
    template <size_t N>
    void raw(const std::array<uint8_t, N>& a) { raw(a.data(), N); }
    void bytes(const Bytes& b) {
        u32(static_cast<uint32_t>(b.size()));
        raw(b);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(reinterpret_cast<const uint8_t*>(s.data()), s.size());
    }
    const Bytes& out() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(const Bytes& b) : data_(b.data()), size_(b.size()) {}
    Reader(const uint8_t* d, size_t n) : data_(d), size_(n) {}

    uint8_t u8() { return need(1), data_[pos_++]; }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    Bytes bytes() {
        uint32_t n = u32();
        need(n);
        Bytes out(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return out;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string out(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return out;
    }
    template <size_t N>
    std::array<uint8_t, N> fixed() {
        need(N);
        std::array<uint8_t, N> a;
        std::memcpy(a.data(), data_ + pos_, N);
        pos_ += N;
        return a;
    }
    bool done() const { return pos_ == size_; }
    size_t remaining() const { return size_ - pos_; }

private:
    void need(size_t n) {
        if (size_ - pos_ < n) throw std::out_of_range("truncated buffer");
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

}  // namespace topos

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasvfuse/error.hpp"

namespace sasvfuse::detail {

// Little-endian encoding independent of host byte order.
class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u16(std::uint16_t v) { put_le(v, 2); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str16(std::string_view s) {
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s);
    }
    void str32(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    void f64s(std::span<const double> v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    const std::vector<std::uint8_t>& buffer() const& { return buf_; }
    std::vector<std::uint8_t> buffer() && { return std::move(buf_); }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string module)
        : data_(data), module_(std::move(module)) {}

    std::string bytes(std::size_t n, std::string_view what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(get_le(1, what)); }
    std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(get_le(2, what)); }
    std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get_le(4, what)); }
    std::uint64_t u64(std::string_view what) { return get_le(8, what); }
    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

    std::string str16(std::string_view what) { return bytes(u16(what), what); }
    std::string str32(std::string_view what) { return bytes(u32(what), what); }
    std::vector<double> f64s(std::string_view what) {
        const std::uint64_t n = u64(what);
        if (n > remaining() / 8) {
            throw LoadError(module_, std::string(what) + ": truncated (need " + std::to_string(n) +
                                         " values, have " + std::to_string(remaining() / 8) + ")");
        }
        std::vector<double> v(n);
        for (auto& x : v) x = f64(what);
        return v;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n, std::string_view what) const {
        if (n > remaining()) {
            throw LoadError(module_, std::string(what) + ": truncated (need " + std::to_string(n) +
                                         " bytes, have " + std::to_string(remaining()) + ")");
        }
    }
    std::uint64_t get_le(int n, std::string_view what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string module_;
};

}  // namespace sasvfuse::detail

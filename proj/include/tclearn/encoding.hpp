#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string_view>

#include "tclearn/bytes.hpp"
#include "tclearn/errors.hpp"

namespace tclearn {

// Canonical byte encoding used everywhere a digest or signature is computed:
// little-endian fixed-width integers, IEEE-754 bit patterns for reals,
// u32-length-prefixed variable fields, fixed field order. Two encoders on
// two machines must produce identical bytes for identical values.
class CanonicalWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    // Raw fixed-width field, no length prefix.
    void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

    // Length-prefixed variable field.
    void bytes(ByteView data) {
        u32(static_cast<std::uint32_t>(data.size()));
        raw(data);
    }

    void str(std::string_view s) { bytes(as_view(s)); }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

  private:
    Bytes buf_;
};

class CanonicalReader {
  public:
    explicit CanonicalReader(ByteView data) : data_(data) {}

    std::uint8_t u8() { return take(1)[0]; }

    std::uint32_t u32() {
        ByteView b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        ByteView b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    double f64() { return std::bit_cast<double>(u64()); }

    Bytes raw(std::size_t n) {
        ByteView b = take(n);
        return Bytes(b.begin(), b.end());
    }

    template <std::size_t N>
    std::array<std::uint8_t, N> fixed() {
        ByteView b = take(N);
        std::array<std::uint8_t, N> out{};
        std::memcpy(out.data(), b.data(), N);
        return out;
    }

    Bytes bytes() { return raw(u32()); }

    std::string str() {
        Bytes b = bytes();
        return std::string(b.begin(), b.end());
    }

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    ByteView take(std::size_t n) {
        if (pos_ + n > data_.size()) throw ValidationError("canonical decode: truncated input");
        ByteView v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace tclearn

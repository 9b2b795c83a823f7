#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tclearn {

using Bytes = std::vector<std::uint8_t>;
using Hash32 = std::array<std::uint8_t, 32>;
using Id16 = std::array<std::uint8_t, 16>;

using ByteView = std::span<const std::uint8_t>;

inline ByteView as_view(const Bytes& b) { return {b.data(), b.size()}; }
inline ByteView as_view(const Hash32& h) { return {h.data(), h.size()}; }
inline ByteView as_view(const Id16& i) { return {i.data(), i.size()}; }
inline ByteView as_view(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);  // throws on malformed input

Hash32 hash32_from_hex(std::string_view hex);
Id16 id16_from_hex(std::string_view hex);

std::string to_base64(ByteView data);
Bytes from_base64(std::string_view b64);  // throws on malformed input

constexpr Hash32 zero_hash32() { return Hash32{}; }

// Exact round-trip formatting for doubles (shortest form that reparses
// bit-identically) and the matching parser.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace tclearn

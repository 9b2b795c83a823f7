#include "tclearn/bytes.hpp"

#include <charconv>
#include <cstring>

#include "tclearn/errors.hpp"

namespace tclearn {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";
constexpr char kB64Digits[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

}  // namespace

std::string to_hex(ByteView data) {
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw ValidationError("hex string has odd length");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_value(hex[i]);
        int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) throw ValidationError("invalid hex digit");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

Hash32 hash32_from_hex(std::string_view hex) {
    Bytes b = from_hex(hex);
    if (b.size() != 32) throw ValidationError("expected 32-byte hex value");
    Hash32 h{};
    std::memcpy(h.data(), b.data(), 32);
    return h;
}

Id16 id16_from_hex(std::string_view hex) {
    Bytes b = from_hex(hex);
    if (b.size() != 16) throw ValidationError("expected 16-byte hex value");
    Id16 id{};
    std::memcpy(id.data(), b.data(), 16);
    return id;
}

std::string to_base64(ByteView data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(kB64Digits[(v >> 18) & 63]);
        out.push_back(kB64Digits[(v >> 12) & 63]);
        out.push_back(kB64Digits[(v >> 6) & 63]);
        out.push_back(kB64Digits[v & 63]);
    }
    std::size_t rem = data.size() - i;
    if (rem == 1) {
        std::uint32_t v = data[i] << 16;
        out.push_back(kB64Digits[(v >> 18) & 63]);
        out.push_back(kB64Digits[(v >> 12) & 63]);
        out.append("==");
    } else if (rem == 2) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(kB64Digits[(v >> 18) & 63]);
        out.push_back(kB64Digits[(v >> 12) & 63]);
        out.push_back(kB64Digits[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

Bytes from_base64(std::string_view b64) {
    if (b64.size() % 4 != 0) throw ValidationError("base64 length not a multiple of 4");
    Bytes out;
    out.reserve(b64.size() / 4 * 3);
    for (std::size_t i = 0; i < b64.size(); i += 4) {
        int pad = 0;
        std::uint32_t v = 0;
        for (int j = 0; j < 4; ++j) {
            char c = b64[i + j];
            if (c == '=') {
                if (i + 4 != b64.size() || j < 2) throw ValidationError("misplaced base64 padding");
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad > 0) throw ValidationError("data after base64 padding");
            int d = b64_value(c);
            if (d < 0) throw ValidationError("invalid base64 digit");
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("double formatting failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ValidationError("invalid real number: " + std::string(text));
    return v;
}

}  // namespace tclearn

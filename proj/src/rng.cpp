#include "tclearn/rng.hpp"

#include <cmath>

#include "tclearn/hash.hpp"

namespace tclearn {

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
    if (bound == 0) return 0;
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound + 1) % bound;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v > limit);
    return v % bound;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
}

void Rng::fill(Bytes& out, std::size_t n) {
    out.reserve(out.size() + n);
    while (n >= 8) {
        std::uint64_t v = next_u64();
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        n -= 8;
    }
    if (n > 0) {
        std::uint64_t v = next_u64();
        for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

Bytes Rng::bytes(std::size_t n) {
    Bytes out;
    fill(out, n);
    return out;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) {
    Bytes material;
    for (int i = 0; i < 8; ++i) material.push_back(static_cast<std::uint8_t>(parent >> (8 * i)));
    material.insert(material.end(), tag.begin(), tag.end());
    for (int i = 0; i < 8; ++i) material.push_back(static_cast<std::uint8_t>(index >> (8 * i)));
    Hash32 h = crypto::sha256(as_view(material));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(h[i]) << (8 * i);
    return v;
}

}  // namespace tclearn

#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

#include "tclearn/bytes.hpp"

namespace tclearn {

// Deterministic, platform-independent PRNG (splitmix64 core). Standard
// library distributions are implementation-defined, so all randomness in
// the protocol goes through this engine to keep runs reproducible
// bit-for-bit across compilers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) without modulo bias.
    std::uint64_t uniform_int(std::uint64_t bound);

    // Standard normal via Box-Muller.
    double normal();

    void fill(Bytes& out, std::size_t n);
    Bytes bytes(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        shuffle(p);
        return p;
    }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent child seed from a parent seed and a textual tag,
// so every component of a run draws from its own stream.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

}  // namespace tclearn

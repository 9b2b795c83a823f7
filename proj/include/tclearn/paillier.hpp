#pragma once

#include <gmp.h>

#include <cstdint>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/errors.hpp"
#include "tclearn/rng.hpp"

namespace tclearn::crypto {

// Thin RAII wrapper over GMP integers with just the arithmetic the
// additive scheme and its test oracles need.
class BigInt {
  public:
    BigInt() { mpz_init(v_); }
    explicit BigInt(std::uint64_t x) { mpz_init_set_ui(v_, x); }
    explicit BigInt(std::int64_t x) { mpz_init_set_si(v_, x); }
    BigInt(const BigInt& o) { mpz_init_set(v_, o.v_); }
    BigInt(BigInt&& o) noexcept {
        mpz_init(v_);
        mpz_swap(v_, o.v_);
    }
    BigInt& operator=(const BigInt& o) {
        if (this != &o) mpz_set(v_, o.v_);
        return *this;
    }
    BigInt& operator=(BigInt&& o) noexcept {
        mpz_swap(v_, o.v_);
        return *this;
    }
    ~BigInt() { mpz_clear(v_); }

    static BigInt from_bytes(ByteView big_endian);
    Bytes to_bytes() const;  // big-endian, minimal length
    static BigInt random_bits(Rng& rng, std::size_t bits);

    friend BigInt operator+(const BigInt& a, const BigInt& b);
    friend BigInt operator-(const BigInt& a, const BigInt& b);
    friend BigInt operator*(const BigInt& a, const BigInt& b);
    friend BigInt operator%(const BigInt& a, const BigInt& b);
    friend bool operator==(const BigInt& a, const BigInt& b) { return mpz_cmp(a.v_, b.v_) == 0; }
    friend bool operator!=(const BigInt& a, const BigInt& b) { return !(a == b); }
    friend bool operator<(const BigInt& a, const BigInt& b) { return mpz_cmp(a.v_, b.v_) < 0; }

    static BigInt powm(const BigInt& base, const BigInt& exp, const BigInt& mod);
    static BigInt invert(const BigInt& a, const BigInt& mod);  // throws if no inverse
    static BigInt gcd(const BigInt& a, const BigInt& b);
    static BigInt lcm(const BigInt& a, const BigInt& b);
    static BigInt next_prime(const BigInt& a);
    static BigInt divexact(const BigInt& a, const BigInt& b);

    std::int64_t to_i64() const;  // throws if out of range
    std::size_t bit_length() const { return mpz_sizeinbase(v_, 2); }
    bool is_zero() const { return mpz_sgn(v_) == 0; }
    bool is_negative() const { return mpz_sgn(v_) < 0; }
    BigInt negated() const;

    std::string to_string() const;

  private:
    mpz_t v_;
};

struct HEPublicKey {
    BigInt n;
    BigInt n_squared;
};

struct HEPrivateKey {
    BigInt lambda;  // lcm(p-1, q-1)
    BigInt mu;      // (lambda mod n)^-1 mod n
};

struct HEKeyPair {
    HEPublicKey pub;
    HEPrivateKey priv;
};

struct HECiphertext {
    BigInt value;  // residue mod n^2

    Bytes serialize() const;  // length-prefixed big-endian bytes
    static HECiphertext parse(ByteView data);
};

// Paillier-style additive scheme with g = n + 1. Deterministic given the
// seed; key sizes of 512 bits keep tests fast and anything real should use
// 2048 or more.
HEKeyPair he_keygen(unsigned bits, std::uint64_t seed);

HECiphertext he_encrypt(const HEPublicKey& pub, const BigInt& message, Rng& rng);
BigInt he_decrypt(const HEPublicKey& pub, const HEPrivateKey& priv, const HECiphertext& c);

// Centered representative in (-n/2, n/2], so modular wraparound of small
// negative values decodes correctly.
BigInt he_decrypt_centered(const HEPublicKey& pub, const HEPrivateKey& priv,
                           const HECiphertext& c);

HECiphertext he_add(const HECiphertext& a, const HECiphertext& b, const HEPublicKey& pub);
HECiphertext he_scale(const HECiphertext& a, const BigInt& plain_scalar, const HEPublicKey& pub);

// Element-wise homomorphic fold of equal-length ciphertext vectors.
std::vector<HECiphertext> encrypted_aggregate(
    const std::vector<std::vector<HECiphertext>>& encrypted_vectors, const HEPublicKey& pub);

// E(sum_i w_i * x_i) from encrypted weights and plaintext (quantized)
// features; only the key holder can read the score.
HECiphertext encrypted_linear_predict(const std::vector<HECiphertext>& encrypted_weights,
                                      const std::vector<std::int64_t>& quantized_features,
                                      const HEPublicKey& pub);

// Fixed-point bridge between real-valued weights and the integer plaintext
// space: scale 2^16, offset 2^31 for sign handling.
struct QuantizedWeights {
    std::uint32_t scale_bits = 16;
    std::uint64_t offset = 1ULL << 31;
    std::vector<std::uint64_t> values;
};

constexpr std::uint32_t kQuantScaleBits = 16;
constexpr std::uint64_t kQuantOffset = 1ULL << 31;

std::int64_t quantize_signed(double x);
double dequantize_signed(std::int64_t q);
QuantizedWeights quantize_weights(const std::vector<double>& w);
std::vector<double> dequantize_weights(const QuantizedWeights& q);

// Offset-aware decode of a sum of `term_count` offset-quantized values.
double dequantize_sum(const BigInt& decrypted, std::size_t term_count);

std::vector<HECiphertext> encrypt_quantized(const QuantizedWeights& q, const HEPublicKey& pub,
                                            Rng& rng);

Bytes serialize_ciphertext_vector(const std::vector<HECiphertext>& v);
std::vector<HECiphertext> parse_ciphertext_vector(ByteView data);

}  // namespace tclearn::crypto

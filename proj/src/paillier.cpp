#include "tclearn/paillier.hpp"

#include <cmath>

#include "tclearn/encoding.hpp"
#include "tclearn/errors.hpp"

namespace tclearn::crypto {

BigInt BigInt::from_bytes(ByteView big_endian) {
    BigInt out;
    if (!big_endian.empty())
        mpz_import(out.v_, big_endian.size(), 1, 1, 1, 0, big_endian.data());
    return out;
}

Bytes BigInt::to_bytes() const {
    if (mpz_sgn(v_) < 0) throw CryptoError("cannot serialize negative big integer");
    if (mpz_sgn(v_) == 0) return Bytes{0};
    std::size_t count = 0;
    Bytes out((mpz_sizeinbase(v_, 2) + 7) / 8);
    mpz_export(out.data(), &count, 1, 1, 1, 0, v_);
    out.resize(count);
    return out;
}

BigInt BigInt::random_bits(Rng& rng, std::size_t bits) {
    std::size_t nbytes = (bits + 7) / 8;
    Bytes raw = rng.bytes(nbytes);
    // trim to exactly `bits` and force the top bit so the value has full size
    std::size_t excess = nbytes * 8 - bits;
    raw[0] &= static_cast<std::uint8_t>(0xff >> excess);
    raw[0] |= static_cast<std::uint8_t>(0x80 >> excess);
    return from_bytes(as_view(raw));
}

BigInt operator+(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_add(out.v_, a.v_, b.v_);
    return out;
}

BigInt operator-(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_sub(out.v_, a.v_, b.v_);
    return out;
}

BigInt operator*(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_mul(out.v_, a.v_, b.v_);
    return out;
}

BigInt operator%(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_mod(out.v_, a.v_, b.v_);  // non-negative remainder
    return out;
}

BigInt BigInt::powm(const BigInt& base, const BigInt& exp, const BigInt& mod) {
    if (mpz_sgn(exp.v_) < 0) {
        BigInt inv = invert(base, mod);
        BigInt pos_exp = exp.negated();
        return powm(inv, pos_exp, mod);
    }
    BigInt out;
    mpz_powm(out.v_, base.v_, exp.v_, mod.v_);
    return out;
}

BigInt BigInt::invert(const BigInt& a, const BigInt& mod) {
    BigInt out;
    if (mpz_invert(out.v_, a.v_, mod.v_) == 0)
        throw CryptoError("value has no modular inverse");
    return out;
}

BigInt BigInt::gcd(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_gcd(out.v_, a.v_, b.v_);
    return out;
}

BigInt BigInt::lcm(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_lcm(out.v_, a.v_, b.v_);
    return out;
}

BigInt BigInt::next_prime(const BigInt& a) {
    BigInt out;
    mpz_nextprime(out.v_, a.v_);
    return out;
}

BigInt BigInt::divexact(const BigInt& a, const BigInt& b) {
    BigInt out;
    mpz_divexact(out.v_, a.v_, b.v_);
    return out;
}

std::int64_t BigInt::to_i64() const {
    if (!mpz_fits_slong_p(v_)) throw CryptoError("big integer does not fit in 64 bits");
    return mpz_get_si(v_);
}

BigInt BigInt::negated() const {
    BigInt out;
    mpz_neg(out.v_, v_);
    return out;
}

std::string BigInt::to_string() const {
    char* s = mpz_get_str(nullptr, 10, v_);
    std::string out(s);
    void (*freefn)(void*, std::size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefn);
    freefn(s, out.size() + 1);
    return out;
}

Bytes HECiphertext::serialize() const {
    CanonicalWriter w;
    w.bytes(as_view(value.to_bytes()));
    return w.take();
}

HECiphertext HECiphertext::parse(ByteView data) {
    CanonicalReader r(data);
    HECiphertext c;
    c.value = BigInt::from_bytes(as_view(r.bytes()));
    if (!r.at_end()) throw CryptoError("trailing bytes after ciphertext");
    return c;
}

HEKeyPair he_keygen(unsigned bits, std::uint64_t seed) {
    if (bits < 512) throw CryptoError("homomorphic key must be at least 512 bits");
    Rng rng(derive_seed(seed, "he-keygen"));
    unsigned half = bits / 2;
    BigInt p = BigInt::next_prime(BigInt::random_bits(rng, half));
    BigInt q;
    do {
        q = BigInt::next_prime(BigInt::random_bits(rng, half));
    } while (p == q);

    HEKeyPair kp;
    kp.pub.n = p * q;
    kp.pub.n_squared = kp.pub.n * kp.pub.n;
    BigInt one{std::uint64_t{1}};
    kp.priv.lambda = BigInt::lcm(p - one, q - one);
    kp.priv.mu = BigInt::invert(kp.priv.lambda % kp.pub.n, kp.pub.n);
    return kp;
}

HECiphertext he_encrypt(const HEPublicKey& pub, const BigInt& message, Rng& rng) {
    if (message.is_negative() || !(message < pub.n))
        throw CryptoError("plaintext outside [0, n)");
    BigInt r;
    do {
        r = BigInt::random_bits(rng, pub.n.bit_length() - 1) % pub.n;
    } while (r.is_zero() || BigInt::gcd(r, pub.n) != BigInt(std::uint64_t{1}));

    // g = n + 1, so g^m = 1 + m*n (mod n^2)
    BigInt gm = (BigInt(std::uint64_t{1}) + message * pub.n) % pub.n_squared;
    BigInt rn = BigInt::powm(r, pub.n, pub.n_squared);
    HECiphertext c;
    c.value = (gm * rn) % pub.n_squared;
    return c;
}

BigInt he_decrypt(const HEPublicKey& pub, const HEPrivateKey& priv, const HECiphertext& c) {
    BigInt u = BigInt::powm(c.value, priv.lambda, pub.n_squared);
    BigInt l = BigInt::divexact(u - BigInt(std::uint64_t{1}), pub.n);
    return (l * priv.mu) % pub.n;
}

BigInt he_decrypt_centered(const HEPublicKey& pub, const HEPrivateKey& priv,
                           const HECiphertext& c) {
    BigInt m = he_decrypt(pub, priv, c);
    BigInt half = BigInt::divexact(pub.n - (pub.n % BigInt(std::uint64_t{2})), BigInt(std::uint64_t{2}));
    if (half < m) return m - pub.n;
    return m;
}

HECiphertext he_add(const HECiphertext& a, const HECiphertext& b, const HEPublicKey& pub) {
    HECiphertext c;
    c.value = (a.value * b.value) % pub.n_squared;
    return c;
}

HECiphertext he_scale(const HECiphertext& a, const BigInt& plain_scalar, const HEPublicKey& pub) {
    HECiphertext c;
    c.value = BigInt::powm(a.value, plain_scalar, pub.n_squared);
    return c;
}

std::vector<HECiphertext> encrypted_aggregate(
    const std::vector<std::vector<HECiphertext>>& encrypted_vectors, const HEPublicKey& pub) {
    if (encrypted_vectors.empty()) return {};
    std::size_t dim = encrypted_vectors.front().size();
    for (const auto& v : encrypted_vectors)
        if (v.size() != dim) throw ValidationError("encrypted gradient vectors differ in length");

    std::vector<HECiphertext> acc = encrypted_vectors.front();
    for (std::size_t k = 1; k < encrypted_vectors.size(); ++k)
        for (std::size_t i = 0; i < dim; ++i) acc[i] = he_add(acc[i], encrypted_vectors[k][i], pub);
    return acc;
}

HECiphertext encrypted_linear_predict(const std::vector<HECiphertext>& encrypted_weights,
                                      const std::vector<std::int64_t>& quantized_features,
                                      const HEPublicKey& pub) {
    if (encrypted_weights.size() != quantized_features.size())
        throw ValidationError("weight and feature dimensions disagree");
    HECiphertext acc;
    acc.value = BigInt(std::uint64_t{1});  // E(0) with unit randomness
    for (std::size_t i = 0; i < encrypted_weights.size(); ++i) {
        if (quantized_features[i] == 0) continue;
        acc = he_add(acc, he_scale(encrypted_weights[i], BigInt(quantized_features[i]), pub), pub);
    }
    return acc;
}

std::int64_t quantize_signed(double x) {
    double scaled = x * static_cast<double>(1ULL << kQuantScaleBits);
    double limit = static_cast<double>(1LL << 31);
    if (!(scaled > -limit && scaled < limit))
        throw ValidationError("value outside quantizable range");
    return std::llround(scaled);
}

double dequantize_signed(std::int64_t q) {
    return static_cast<double>(q) / static_cast<double>(1ULL << kQuantScaleBits);
}

QuantizedWeights quantize_weights(const std::vector<double>& w) {
    QuantizedWeights q;
    q.values.reserve(w.size());
    for (double x : w)
        q.values.push_back(static_cast<std::uint64_t>(quantize_signed(x) +
                                                      static_cast<std::int64_t>(kQuantOffset)));
    return q;
}

std::vector<double> dequantize_weights(const QuantizedWeights& q) {
    std::vector<double> out;
    out.reserve(q.values.size());
    for (std::uint64_t v : q.values)
        out.push_back(static_cast<double>(static_cast<std::int64_t>(v) -
                                          static_cast<std::int64_t>(q.offset)) /
                      static_cast<double>(1ULL << q.scale_bits));
    return out;
}

double dequantize_sum(const BigInt& decrypted, std::size_t term_count) {
    BigInt offset_total =
        BigInt(static_cast<std::uint64_t>(term_count)) * BigInt(kQuantOffset);
    BigInt centered = decrypted - offset_total;
    return dequantize_signed(centered.to_i64());
}

std::vector<HECiphertext> encrypt_quantized(const QuantizedWeights& q, const HEPublicKey& pub,
                                            Rng& rng) {
    std::vector<HECiphertext> out;
    out.reserve(q.values.size());
    for (std::uint64_t v : q.values) out.push_back(he_encrypt(pub, BigInt(v), rng));
    return out;
}

Bytes serialize_ciphertext_vector(const std::vector<HECiphertext>& v) {
    CanonicalWriter w;
    w.u64(v.size());
    for (const HECiphertext& c : v) w.bytes(as_view(c.value.to_bytes()));
    return w.take();
}

std::vector<HECiphertext> parse_ciphertext_vector(ByteView data) {
    CanonicalReader r(data);
    std::uint64_t n = r.u64();
    std::vector<HECiphertext> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        HECiphertext c;
        c.value = BigInt::from_bytes(as_view(r.bytes()));
        out.push_back(std::move(c));
    }
    if (!r.at_end()) throw CryptoError("trailing bytes after ciphertext vector");
    return out;
}

}  // namespace tclearn::crypto

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tclearn/paillier.hpp"
#include "tclearn/rng.hpp"

using namespace tclearn;
using crypto::BigInt;

namespace {

const crypto::HEKeyPair& keys() {
    static crypto::HEKeyPair kp = crypto::he_keygen(512, 1000);
    return kp;
}

}  // namespace

TEST_CASE("keygen is deterministic and seeds differ") {
    crypto::HEKeyPair a = crypto::he_keygen(512, 7);
    crypto::HEKeyPair b = crypto::he_keygen(512, 7);
    crypto::HEKeyPair c = crypto::he_keygen(512, 8);
    CHECK(a.pub.n == b.pub.n);
    CHECK(a.pub.n != c.pub.n);
    CHECK(a.pub.n.bit_length() >= 500);
    CHECK_THROWS_AS(crypto::he_keygen(128, 1), CryptoError);
}

TEST_CASE("encrypt/decrypt identity over the plaintext space") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        BigInt m = BigInt::random_bits(rng, 200);
        crypto::HECiphertext c = crypto::he_encrypt(kp.pub, m, rng);
        CHECK(crypto::he_decrypt(kp.pub, kp.priv, c) == m);
    }
    CHECK_THROWS_AS(crypto::he_encrypt(kp.pub, kp.pub.n + BigInt(std::uint64_t{1}), rng),
                    CryptoError);
}

TEST_CASE("decrypting with a mismatched key yields garbage") {
    const crypto::HEKeyPair& kp = keys();
    crypto::HEKeyPair other = crypto::he_keygen(512, 2000);
    Rng rng(43);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        BigInt m = BigInt::random_bits(rng, 120);
        crypto::HECiphertext c = crypto::he_encrypt(kp.pub, m, rng);
        if (!(crypto::he_decrypt(other.pub, other.priv, c) == m)) ++mismatches;
    }
    CHECK(mismatches == 1000);
}

TEST_CASE("homomorphic addition and scaling") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(44);
    crypto::HECiphertext e3 = crypto::he_encrypt(kp.pub, BigInt(std::uint64_t{3}), rng);
    crypto::HECiphertext e4 = crypto::he_encrypt(kp.pub, BigInt(std::uint64_t{4}), rng);
    CHECK(crypto::he_decrypt(kp.pub, kp.priv, crypto::he_add(e3, e4, kp.pub)) ==
          BigInt(std::uint64_t{7}));

    crypto::HECiphertext e5 = crypto::he_encrypt(kp.pub, BigInt(std::uint64_t{5}), rng);
    CHECK(crypto::he_decrypt(kp.pub, kp.priv,
                             crypto::he_scale(e5, BigInt(std::uint64_t{0}), kp.pub)) ==
          BigInt(std::uint64_t{0}));
    CHECK(crypto::he_decrypt(kp.pub, kp.priv,
                             crypto::he_scale(e5, BigInt(std::uint64_t{9}), kp.pub)) ==
          BigInt(std::uint64_t{45}));
}

TEST_CASE("1000 random pairs add exactly under encryption") {
    // plaintext big-integer arithmetic is the oracle
    const crypto::HEKeyPair& kp = keys();
    Rng rng(45);
    for (int i = 0; i < 1000; ++i) {
        BigInt a = BigInt::random_bits(rng, 250);
        BigInt b = BigInt::random_bits(rng, 250);
        crypto::HECiphertext ea = crypto::he_encrypt(kp.pub, a, rng);
        crypto::HECiphertext eb = crypto::he_encrypt(kp.pub, b, rng);
        BigInt sum = crypto::he_decrypt(kp.pub, kp.priv, crypto::he_add(ea, eb, kp.pub));
        CHECK(sum == (a + b) % kp.pub.n);
    }
}

TEST_CASE("scaling matches plaintext products, including negative scalars") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(46);
    for (int i = 0; i < 200; ++i) {
        BigInt a = BigInt::random_bits(rng, 60);
        auto scalar = static_cast<std::int64_t>(rng.uniform_int(1 << 20)) - (1 << 19);
        crypto::HECiphertext ea = crypto::he_encrypt(kp.pub, a, rng);
        crypto::HECiphertext scaled = crypto::he_scale(ea, BigInt(scalar), kp.pub);
        BigInt expected = scalar >= 0
                              ? (a * BigInt(scalar)) % kp.pub.n
                              : (kp.pub.n - (a * BigInt(-scalar)) % kp.pub.n) % kp.pub.n;
        CHECK(crypto::he_decrypt(kp.pub, kp.priv, scaled) == expected);
    }
}

TEST_CASE("addition is associative and commutative under decryption") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(47);
    for (int i = 0; i < 50; ++i) {
        BigInt a = BigInt::random_bits(rng, 100);
        BigInt b = BigInt::random_bits(rng, 100);
        BigInt c = BigInt::random_bits(rng, 100);
        crypto::HECiphertext ea = crypto::he_encrypt(kp.pub, a, rng);
        crypto::HECiphertext eb = crypto::he_encrypt(kp.pub, b, rng);
        crypto::HECiphertext ec = crypto::he_encrypt(kp.pub, c, rng);
        BigInt left = crypto::he_decrypt(
            kp.pub, kp.priv, crypto::he_add(crypto::he_add(ea, eb, kp.pub), ec, kp.pub));
        BigInt right = crypto::he_decrypt(
            kp.pub, kp.priv, crypto::he_add(ea, crypto::he_add(eb, ec, kp.pub), kp.pub));
        CHECK(left == right);
        BigInt ab = crypto::he_decrypt(kp.pub, kp.priv, crypto::he_add(ea, eb, kp.pub));
        BigInt ba = crypto::he_decrypt(kp.pub, kp.priv, crypto::he_add(eb, ea, kp.pub));
        CHECK(ab == ba);
    }
}

TEST_CASE("quantization error stays within one step") {
    Rng rng(48);
    for (int i = 0; i < 2000; ++i) {
        double x = (rng.uniform() - 0.5) * 2.0 * 32000.0;  // inside [-2^15, 2^15)
        double back = crypto::dequantize_signed(crypto::quantize_signed(x));
        CHECK(std::abs(back - x) <= std::pow(2.0, -16.0));
    }
    CHECK_THROWS_AS(crypto::quantize_signed(40000.0), ValidationError);
}

TEST_CASE("offset quantization round-trips weight vectors") {
    Rng rng(49);
    std::vector<double> w;
    for (int i = 0; i < 64; ++i) w.push_back((rng.uniform() - 0.5) * 20.0);
    crypto::QuantizedWeights q = crypto::quantize_weights(w);
    std::vector<double> back = crypto::dequantize_weights(q);
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(back[i] - w[i]) <= std::pow(2.0, -16.0));
    // grid values survive a second round trip bit-exactly
    crypto::QuantizedWeights q2 = crypto::quantize_weights(back);
    CHECK(crypto::dequantize_weights(q2) == back);
}

TEST_CASE("encrypted aggregation equals the plaintext sums") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(50);
    const std::size_t partners = 4, dim = 12;

    std::vector<std::vector<double>> plain(partners);
    std::vector<std::vector<crypto::HECiphertext>> encrypted;
    for (std::size_t p = 0; p < partners; ++p) {
        for (std::size_t i = 0; i < dim; ++i)
            plain[p].push_back((rng.uniform() - 0.5) * 4.0);
        encrypted.push_back(
            crypto::encrypt_quantized(crypto::quantize_weights(plain[p]), kp.pub, rng));
    }
    std::vector<crypto::HECiphertext> agg = crypto::encrypted_aggregate(encrypted, kp.pub);
    REQUIRE(agg.size() == dim);

    for (std::size_t i = 0; i < dim; ++i) {
        // integer-domain check against the plaintext quantized sum
        std::uint64_t int_sum = 0;
        for (std::size_t p = 0; p < partners; ++p)
            int_sum += crypto::quantize_weights(plain[p]).values[i];
        BigInt dec = crypto::he_decrypt(kp.pub, kp.priv, agg[i]);
        CHECK(dec == BigInt(int_sum));

        // real-domain check within the stacked quantization error
        double real_sum = 0.0;
        for (std::size_t p = 0; p < partners; ++p) real_sum += plain[p][i];
        double decoded = crypto::dequantize_sum(dec, partners);
        CHECK(std::abs(decoded - real_sum) <= partners * std::pow(2.0, -17.0));
        CHECK(std::abs(decoded - real_sum) <= 2.0 * std::pow(2.0, -16.0));
    }

    SUBCASE("zero vectors aggregate to zeros") {
        std::vector<double> zeros(dim, 0.0);
        std::vector<std::vector<crypto::HECiphertext>> enc_zeros;
        enc_zeros.push_back(
            crypto::encrypt_quantized(crypto::quantize_weights(zeros), kp.pub, rng));
        enc_zeros.push_back(
            crypto::encrypt_quantized(crypto::quantize_weights(zeros), kp.pub, rng));
        std::vector<crypto::HECiphertext> z = crypto::encrypted_aggregate(enc_zeros, kp.pub);
        for (const crypto::HECiphertext& c : z) {
            double v = crypto::dequantize_sum(crypto::he_decrypt(kp.pub, kp.priv, c), 2);
            CHECK(v == 0.0);
        }
    }
    SUBCASE("length mismatches are rejected") {
        std::vector<std::vector<crypto::HECiphertext>> bad = encrypted;
        bad[1].pop_back();
        CHECK_THROWS_AS(crypto::encrypted_aggregate(bad, kp.pub), ValidationError);
    }
}

TEST_CASE("encrypted linear prediction matches the plaintext dot product") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(51);
    const std::size_t dim = 8;

    std::vector<double> w;
    for (std::size_t i = 0; i < dim; ++i) w.push_back((rng.uniform() - 0.5) * 6.0);
    crypto::QuantizedWeights qw = crypto::quantize_weights(w);
    std::vector<crypto::HECiphertext> ew = crypto::encrypt_quantized(qw, kp.pub, rng);

    SUBCASE("all-zero features decrypt to zero") {
        std::vector<std::int64_t> qx(dim, 0);
        crypto::HECiphertext score = crypto::encrypted_linear_predict(ew, qx, kp.pub);
        CHECK(crypto::he_decrypt(kp.pub, kp.priv, score) == BigInt(std::uint64_t{0}));
    }
    SUBCASE("a unit feature vector picks out one weight") {
        for (std::size_t j = 0; j < dim; ++j) {
            std::vector<std::int64_t> qx(dim, 0);
            qx[j] = 1;
            crypto::HECiphertext score = crypto::encrypted_linear_predict(ew, qx, kp.pub);
            CHECK(crypto::he_decrypt(kp.pub, kp.priv, score) == BigInt(qw.values[j]));
        }
    }
    SUBCASE("random features match within combined quantization error") {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> x;
            std::vector<std::int64_t> qx;
            for (std::size_t i = 0; i < dim; ++i) {
                x.push_back((rng.uniform() - 0.5) * 8.0);
                qx.push_back(crypto::quantize_signed(x.back()));
            }
            crypto::HECiphertext escore = crypto::encrypted_linear_predict(ew, qx, kp.pub);
            BigInt dec = crypto::he_decrypt_centered(kp.pub, kp.priv, escore);

            std::int64_t qx_sum = 0;
            for (std::int64_t v : qx) qx_sum += v;
            BigInt fixed = dec - BigInt(qx_sum) * BigInt(crypto::kQuantOffset);
            double score = static_cast<double>(fixed.to_i64()) / std::pow(2.0, 32.0);

            double plain = 0.0;
            double bound = dim * std::pow(2.0, -34.0);
            for (std::size_t i = 0; i < dim; ++i) {
                plain += w[i] * x[i];
                bound += (std::abs(w[i]) + std::abs(x[i])) * std::pow(2.0, -17.0);
            }
            CHECK(std::abs(score - plain) <= bound);
        }
    }
    SUBCASE("dimension mismatch is rejected") {
        std::vector<std::int64_t> qx(dim + 1, 1);
        CHECK_THROWS_AS(crypto::encrypted_linear_predict(ew, qx, kp.pub), ValidationError);
    }
}

TEST_CASE("ciphertext serialization round-trips") {
    const crypto::HEKeyPair& kp = keys();
    Rng rng(52);
    std::vector<crypto::HECiphertext> v;
    for (int i = 0; i < 5; ++i)
        v.push_back(crypto::he_encrypt(kp.pub, BigInt::random_bits(rng, 100), rng));
    Bytes wire = crypto::serialize_ciphertext_vector(v);
    std::vector<crypto::HECiphertext> back = crypto::parse_ciphertext_vector(as_view(wire));
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i].value == v[i].value);

    crypto::HECiphertext single = v[0];
    crypto::HECiphertext parsed = crypto::HECiphertext::parse(as_view(single.serialize()));
    CHECK(parsed.value == single.value);
}

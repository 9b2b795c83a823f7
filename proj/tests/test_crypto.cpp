#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "tclearn/crypto.hpp"
#include "tclearn/errors.hpp"
#include "tclearn/hash.hpp"
#include "tclearn/rng.hpp"

using namespace tclearn;

TEST_CASE("sha256 matches the published empty-input vector") {
    Hash32 h = crypto::sha256({});
    CHECK(to_hex(as_view(h)) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("sha256 is stable and bit-sensitive") {
    Bytes data = Rng(5).bytes(300);
    CHECK(crypto::sha256(as_view(data)) == crypto::sha256(as_view(data)));
    Bytes flipped = data;
    flipped[120] ^= 0x04;
    CHECK(crypto::sha256(as_view(flipped)) != crypto::sha256(as_view(data)));
}

TEST_CASE("identity keys are seed-determined") {
    crypto::IdentityKeyPair a = crypto::identity_from_seed(9);
    crypto::IdentityKeyPair b = crypto::identity_from_seed(9);
    crypto::IdentityKeyPair c = crypto::identity_from_seed(10);
    CHECK(a.sign.public_key == b.sign.public_key);
    CHECK(a.box.public_key == b.box.public_key);
    CHECK(a.sign.public_key != c.sign.public_key);
}

TEST_CASE("sign/verify round-trips and rejects tampering") {
    crypto::IdentityKeyPair id = crypto::identity_from_seed(3);
    crypto::IdentityKeyPair other = crypto::identity_from_seed(4);
    Bytes msg = Rng(77).bytes(100);

    Bytes sig = crypto::sign(as_view(msg), as_view(id.sign.private_seed));
    CHECK(crypto::verify(as_view(msg), as_view(sig), as_view(id.sign.public_key)));

    Bytes altered = msg;
    altered[0] ^= 1;
    CHECK_FALSE(crypto::verify(as_view(altered), as_view(sig), as_view(id.sign.public_key)));

    Bytes bad_sig = sig;
    bad_sig[10] ^= 1;
    CHECK_FALSE(crypto::verify(as_view(msg), as_view(bad_sig), as_view(id.sign.public_key)));

    CHECK_FALSE(crypto::verify(as_view(msg), as_view(sig), as_view(other.sign.public_key)));
}

TEST_CASE("aes-256-gcm round-trips and authenticates") {
    Rng rng(11);
    Bytes key = rng.bytes(32);
    Bytes nonce = rng.bytes(12);
    Bytes plaintext = rng.bytes(257);
    Bytes aad = rng.bytes(16);

    Bytes ct = crypto::aes256gcm_encrypt(as_view(key), as_view(nonce), as_view(plaintext),
                                         as_view(aad));
    CHECK(crypto::aes256gcm_decrypt(as_view(key), as_view(nonce), as_view(ct), as_view(aad)) ==
          plaintext);

    Bytes tampered = ct;
    tampered[5] ^= 1;
    CHECK_THROWS_AS(crypto::aes256gcm_decrypt(as_view(key), as_view(nonce), as_view(tampered),
                                              as_view(aad)),
                    CryptoError);
    Bytes wrong_aad = aad;
    wrong_aad[0] ^= 1;
    CHECK_THROWS_AS(crypto::aes256gcm_decrypt(as_view(key), as_view(nonce), as_view(ct),
                                              as_view(wrong_aad)),
                    CryptoError);
}

TEST_CASE("envelopes round-trip between identities") {
    crypto::IdentityKeyPair sender = crypto::identity_from_seed(1);
    crypto::IdentityKeyPair recipient = crypto::identity_from_seed(2);
    crypto::IdentityKeyPair outsider = crypto::identity_from_seed(3);
    Bytes plaintext = Rng(123).bytes(500);

    Rng rng(55);
    crypto::Envelope env = crypto::seal_envelope(as_view(plaintext),
                                                 as_view(recipient.box.public_key),
                                                 as_view(sender.sign.private_seed), rng);

    Bytes opened = crypto::open_envelope(env, as_view(recipient.box.private_key),
                                         as_view(sender.sign.public_key));
    CHECK(opened == plaintext);

    SUBCASE("wrong recipient key cannot open") {
        CHECK_THROWS_AS(crypto::open_envelope(env, as_view(outsider.box.private_key),
                                              as_view(sender.sign.public_key)),
                        CryptoError);
    }
    SUBCASE("tampered ciphertext fails before decryption") {
        crypto::Envelope bad = env;
        bad.ciphertext[3] ^= 1;
        CHECK_THROWS_AS(crypto::open_envelope(bad, as_view(recipient.box.private_key),
                                              as_view(sender.sign.public_key)),
                        CryptoError);
    }
    SUBCASE("wrong sender key fails signature check") {
        CHECK_THROWS_AS(crypto::open_envelope(env, as_view(recipient.box.private_key),
                                              as_view(outsider.sign.public_key)),
                        CryptoError);
    }
    SUBCASE("serialization round-trips") {
        crypto::Envelope back = crypto::Envelope::parse(as_view(env.serialize()));
        CHECK(back.ciphertext == env.ciphertext);
        CHECK(crypto::open_envelope(back, as_view(recipient.box.private_key),
                                    as_view(sender.sign.public_key)) == plaintext);
    }
}

TEST_CASE("envelope randomness follows the provided stream") {
    crypto::IdentityKeyPair sender = crypto::identity_from_seed(1);
    crypto::IdentityKeyPair recipient = crypto::identity_from_seed(2);
    Bytes plaintext{1, 2, 3};

    Rng rng_a(9);
    Rng rng_b(9);
    crypto::Envelope a = crypto::seal_envelope(as_view(plaintext),
                                               as_view(recipient.box.public_key),
                                               as_view(sender.sign.private_seed), rng_a);
    crypto::Envelope b = crypto::seal_envelope(as_view(plaintext),
                                               as_view(recipient.box.public_key),
                                               as_view(sender.sign.private_seed), rng_b);
    CHECK(a.serialize() == b.serialize());
}

#include "tclearn/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <memory>

#include "tclearn/encoding.hpp"
#include "tclearn/errors.hpp"
#include "tclearn/hash.hpp"

namespace tclearn::crypto {

namespace {

using PkeyPtr = std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, decltype(&EVP_PKEY_CTX_free)>;

constexpr std::size_t kGcmTagLen = 16;

PkeyPtr raw_private(int type, ByteView seed) {
    EVP_PKEY* k = EVP_PKEY_new_raw_private_key(type, nullptr, seed.data(), seed.size());
    if (!k) throw CryptoError("failed to load raw private key");
    return {k, EVP_PKEY_free};
}

PkeyPtr raw_public(int type, ByteView pub) {
    EVP_PKEY* k = EVP_PKEY_new_raw_public_key(type, nullptr, pub.data(), pub.size());
    if (!k) throw CryptoError("failed to load raw public key");
    return {k, EVP_PKEY_free};
}

Bytes raw_public_of(EVP_PKEY* key) {
    std::size_t len = 0;
    if (EVP_PKEY_get_raw_public_key(key, nullptr, &len) != 1)
        throw CryptoError("failed to query public key length");
    Bytes out(len);
    if (EVP_PKEY_get_raw_public_key(key, out.data(), &len) != 1)
        throw CryptoError("failed to export public key");
    out.resize(len);
    return out;
}

Bytes x25519_shared(ByteView private_key, ByteView peer_public) {
    PkeyPtr priv = raw_private(EVP_PKEY_X25519, private_key);
    PkeyPtr peer = raw_public(EVP_PKEY_X25519, peer_public);
    PkeyCtxPtr ctx(EVP_PKEY_CTX_new(priv.get(), nullptr), EVP_PKEY_CTX_free);
    if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
        EVP_PKEY_derive_set_peer(ctx.get(), peer.get()) != 1)
        throw CryptoError("X25519 derive setup failed");
    std::size_t len = 0;
    if (EVP_PKEY_derive(ctx.get(), nullptr, &len) != 1)
        throw CryptoError("X25519 derive length failed");
    Bytes shared(len);
    if (EVP_PKEY_derive(ctx.get(), shared.data(), &len) != 1)
        throw CryptoError("X25519 derive failed");
    shared.resize(len);
    return shared;
}

Bytes wrap_key(ByteView shared, ByteView eph_pub, ByteView recipient_pub, ByteView session_key,
               bool unwrap, ByteView wrapped) {
    // KEK binds the shared secret to both public keys.
    Bytes material(shared.begin(), shared.end());
    material.insert(material.end(), eph_pub.begin(), eph_pub.end());
    material.insert(material.end(), recipient_pub.begin(), recipient_pub.end());
    Hash32 kek = sha256(as_view(material));
    Bytes nonce(12, 0);
    if (unwrap) return aes256gcm_decrypt(as_view(kek), as_view(nonce), wrapped, {});
    return aes256gcm_encrypt(as_view(kek), as_view(nonce), session_key, {});
}

}  // namespace

SignKeyPair sign_keypair_from_seed(ByteView seed32) {
    if (seed32.size() != 32) throw CryptoError("signing seed must be 32 bytes");
    SignKeyPair kp;
    kp.private_seed.assign(seed32.begin(), seed32.end());
    PkeyPtr key = raw_private(EVP_PKEY_ED25519, seed32);
    kp.public_key = raw_public_of(key.get());
    return kp;
}

BoxKeyPair box_keypair_from_seed(ByteView seed32) {
    if (seed32.size() != 32) throw CryptoError("box seed must be 32 bytes");
    BoxKeyPair kp;
    kp.private_key.assign(seed32.begin(), seed32.end());
    PkeyPtr key = raw_private(EVP_PKEY_X25519, seed32);
    kp.public_key = raw_public_of(key.get());
    return kp;
}

IdentityKeyPair identity_from_seed(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "identity-keys"));
    IdentityKeyPair id;
    id.sign = sign_keypair_from_seed(as_view(rng.bytes(32)));
    id.box = box_keypair_from_seed(as_view(rng.bytes(32)));
    return id;
}

Bytes sign(ByteView message, ByteView private_seed) {
    PkeyPtr key = raw_private(EVP_PKEY_ED25519, private_seed);
    MdCtxPtr ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
        throw CryptoError("signature init failed");
    std::size_t len = 64;
    Bytes sig(len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1)
        throw CryptoError("signing failed");
    sig.resize(len);
    return sig;
}

bool verify(ByteView message, ByteView signature, ByteView public_key) {
    if (public_key.size() != 32 || signature.size() != 64) return false;
    EVP_PKEY* raw = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(),
                                                public_key.size());
    if (!raw) return false;
    PkeyPtr key(raw, EVP_PKEY_free);
    MdCtxPtr ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
        return false;
    return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                            message.size()) == 1;
}

Bytes aes256gcm_encrypt(ByteView key32, ByteView nonce12, ByteView plaintext, ByteView aad) {
    if (key32.size() != 32 || nonce12.size() != 12) throw CryptoError("bad AES-GCM key or nonce");
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key32.data(),
                                   nonce12.data()) != 1)
        throw CryptoError("AES-GCM encrypt init failed");
    int len = 0;
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw CryptoError("AES-GCM aad failed");
    Bytes out(plaintext.size() + kGcmTagLen);
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw CryptoError("AES-GCM encrypt failed");
    int total = len;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1)
        throw CryptoError("AES-GCM finalize failed");
    total += len;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kGcmTagLen, out.data() + total) != 1)
        throw CryptoError("AES-GCM tag export failed");
    out.resize(total + kGcmTagLen);
    return out;
}

Bytes aes256gcm_decrypt(ByteView key32, ByteView nonce12, ByteView ciphertext, ByteView aad) {
    if (key32.size() != 32 || nonce12.size() != 12) throw CryptoError("bad AES-GCM key or nonce");
    if (ciphertext.size() < kGcmTagLen) throw CryptoError("AES-GCM ciphertext too short");
    std::size_t body_len = ciphertext.size() - kGcmTagLen;
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key32.data(),
                                   nonce12.data()) != 1)
        throw CryptoError("AES-GCM decrypt init failed");
    int len = 0;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw CryptoError("AES-GCM aad failed");
    Bytes out(body_len);
    if (body_len > 0 && EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(),
                                          static_cast<int>(body_len)) != 1)
        throw CryptoError("AES-GCM decrypt failed");
    int total = body_len > 0 ? len : 0;
    Bytes tag(ciphertext.end() - kGcmTagLen, ciphertext.end());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kGcmTagLen, tag.data()) != 1)
        throw CryptoError("AES-GCM tag import failed");
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + total, &len) != 1)
        throw CryptoError("AES-GCM authentication failed");
    total += len;
    out.resize(total);
    return out;
}

Bytes Envelope::serialize() const {
    CanonicalWriter w;
    w.bytes(as_view(encrypted_session_key));
    w.bytes(as_view(ciphertext));
    w.bytes(as_view(sender_signature));
    return w.take();
}

Envelope Envelope::parse(ByteView data) {
    CanonicalReader r(data);
    Envelope e;
    e.encrypted_session_key = r.bytes();
    e.ciphertext = r.bytes();
    e.sender_signature = r.bytes();
    if (!r.at_end()) throw CryptoError("trailing bytes after envelope");
    return e;
}

Envelope seal_envelope(ByteView plaintext, ByteView recipient_box_public,
                       ByteView sender_sign_seed, Rng& rng) {
    Bytes session_key = rng.bytes(32);
    BoxKeyPair ephemeral = box_keypair_from_seed(as_view(rng.bytes(32)));
    Bytes shared = x25519_shared(as_view(ephemeral.private_key), recipient_box_public);

    Envelope env;
    Bytes wrapped = wrap_key(as_view(shared), as_view(ephemeral.public_key), recipient_box_public,
                             as_view(session_key), false, {});
    env.encrypted_session_key = ephemeral.public_key;
    env.encrypted_session_key.insert(env.encrypted_session_key.end(), wrapped.begin(),
                                     wrapped.end());

    Bytes nonce(12, 0);  // fresh session key per envelope
    env.ciphertext = aes256gcm_encrypt(as_view(session_key), as_view(nonce), plaintext, {});
    env.sender_signature = sign(as_view(env.ciphertext), sender_sign_seed);
    return env;
}

Bytes open_envelope(const Envelope& env, ByteView recipient_box_private,
                    ByteView sender_sign_public) {
    if (!verify(as_view(env.ciphertext), as_view(env.sender_signature), sender_sign_public))
        throw CryptoError("envelope sender signature invalid");
    if (env.encrypted_session_key.size() < 32) throw CryptoError("sealed session key too short");
    ByteView eph_pub(env.encrypted_session_key.data(), 32);
    ByteView wrapped(env.encrypted_session_key.data() + 32, env.encrypted_session_key.size() - 32);

    BoxKeyPair self = box_keypair_from_seed(recipient_box_private);
    Bytes shared = x25519_shared(recipient_box_private, eph_pub);
    Bytes session_key = wrap_key(as_view(shared), eph_pub, as_view(self.public_key), {}, true,
                                 wrapped);
    Bytes nonce(12, 0);
    return aes256gcm_decrypt(as_view(session_key), as_view(nonce), as_view(env.ciphertext), {});
}

}  // namespace tclearn::crypto

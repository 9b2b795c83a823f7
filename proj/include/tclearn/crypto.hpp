#pragma once

#include <cstdint>

#include "tclearn/bytes.hpp"
#include "tclearn/rng.hpp"

namespace tclearn::crypto {

// Ed25519 signing pair expanded deterministically from a 32-byte seed.
struct SignKeyPair {
    Bytes private_seed;  // 32 bytes
    Bytes public_key;    // 32 bytes
};

// X25519 key-agreement pair for sealing session keys.
struct BoxKeyPair {
    Bytes private_key;  // 32 bytes
    Bytes public_key;   // 32 bytes
};

// A partner's identity: one pair for signatures, one for envelopes.
struct IdentityKeyPair {
    SignKeyPair sign;
    BoxKeyPair box;
};

IdentityKeyPair identity_from_seed(std::uint64_t seed);
SignKeyPair sign_keypair_from_seed(ByteView seed32);
BoxKeyPair box_keypair_from_seed(ByteView seed32);

Bytes sign(ByteView message, ByteView private_seed);
bool verify(ByteView message, ByteView signature, ByteView public_key);

// AES-256-GCM with the 16-byte tag appended to the ciphertext.
Bytes aes256gcm_encrypt(ByteView key32, ByteView nonce12, ByteView plaintext, ByteView aad);
Bytes aes256gcm_decrypt(ByteView key32, ByteView nonce12, ByteView ciphertext, ByteView aad);

// Hybrid envelope: a fresh session key sealed to the recipient's public key
// (ephemeral X25519 + AES-256-GCM key wrap), payload encrypted under the
// session key, sender signature over the payload ciphertext.
struct Envelope {
    Bytes encrypted_session_key;  // ephemeral public key || wrapped key
    Bytes ciphertext;
    Bytes sender_signature;

    Bytes serialize() const;  // length-prefixed fields
    static Envelope parse(ByteView data);
};

Envelope seal_envelope(ByteView plaintext, ByteView recipient_box_public,
                       ByteView sender_sign_seed, Rng& rng);

// Verifies the sender signature before any decryption is attempted.
Bytes open_envelope(const Envelope& env, ByteView recipient_box_private,
                    ByteView sender_sign_public);

}  // namespace tclearn::crypto

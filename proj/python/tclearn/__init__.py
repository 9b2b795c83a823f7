"""Coalition learning with ledger-certified increments.

Thin convenience layer over the compiled core: helpers convert between
Python integers and the big-endian byte strings the homomorphic scheme
speaks natively.
"""

from tclearn._core import (  # noqa: F401
    ConfigError,
    CryptoError,
    HEKeys,
    IdentityKeyPair,
    ValidationError,
    audit_query_file,
    dequantize,
    he_keygen,
    identity_from_seed,
    open_envelope,
    quantize,
    run_scenario,
    run_scenario_file,
    seal_envelope,
    sha256,
    sign,
    verify,
    verify_chain_file,
)
from tclearn import _core


def _to_be(value: int) -> bytes:
    if value < 0:
        raise ValueError("plaintexts are non-negative")
    length = max(1, (value.bit_length() + 7) // 8)
    return value.to_bytes(length, "big")


def _from_be(data: bytes) -> int:
    return int.from_bytes(data, "big")


def he_encrypt(keys: HEKeys, message: int, seed: int = 0) -> bytes:
    """Encrypt a non-negative integer under the coalition key."""
    return _core.he_encrypt(keys, _to_be(message), seed)


def he_decrypt(keys: HEKeys, ciphertext: bytes) -> int:
    return _from_be(_core.he_decrypt(keys, ciphertext))


def he_add(keys: HEKeys, a: bytes, b: bytes) -> bytes:
    """Combine two ciphertexts; decrypts to the sum of their plaintexts."""
    return _core.he_add(keys, a, b)


def he_scale(keys: HEKeys, a: bytes, scalar: int) -> bytes:
    return _core.he_scale(keys, a, scalar)


def he_modulus(keys: HEKeys) -> int:
    return _from_be(keys.n)

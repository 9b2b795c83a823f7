#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tclearn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition or invariant violation on domain values.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed scenario configuration or unreadable input files.
struct ConfigError : Error {
    using Error::Error;
};

struct CryptoError : Error {
    using Error::Error;
};

struct VaultError : Error {
    VaultError(std::string msg, std::uint64_t seq = 0)
        : Error(std::move(msg)), bad_seq(seq) {}
    std::uint64_t bad_seq;
};

enum class ChainErrorCode : std::uint8_t {
    index_gap,
    fork,
    bad_block_hash,
    time_regression,
    parse,
    bad_reference,
};

struct ChainError : Error {
    ChainError(ChainErrorCode c, std::string msg) : Error(std::move(msg)), code(c) {}
    ChainErrorCode code;
};

}  // namespace tclearn

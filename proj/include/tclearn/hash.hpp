#pragma once

#include "tclearn/bytes.hpp"

namespace tclearn::crypto {

// SHA-256 of arbitrary bytes; 32-byte digests are the identity of models,
// blocks, and journal records throughout the protocol.
Hash32 sha256(ByteView data);

Hash32 sha256_concat(ByteView a, ByteView b);

}  // namespace tclearn::crypto

#include "tclearn/hash.hpp"

#include <openssl/evp.h>

#include "tclearn/errors.hpp"

namespace tclearn::crypto {

Hash32 sha256(ByteView data) {
    Hash32 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw CryptoError("SHA-256 digest failed");
    }
    return out;
}

Hash32 sha256_concat(ByteView a, ByteView b) {
    Bytes joined;
    joined.reserve(a.size() + b.size());
    joined.insert(joined.end(), a.begin(), a.end());
    joined.insert(joined.end(), b.begin(), b.end());
    return sha256(as_view(joined));
}

}  // namespace tclearn::crypto

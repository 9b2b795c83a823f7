#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/encoding.hpp"
#include "tclearn/errors.hpp"
#include "tclearn/model.hpp"

namespace tclearn::ledger {

struct PartnerId {
    Id16 id{};
    Bytes public_key;  // signature-verification key
};

// One partner's contribution record: D_i samples so far and the resulting
// strength S_i = 1/N + D_i/D (uniform 1/N while D = 0). Strengths are kept
// exactly as the formula yields them; their sum over the coalition is 2
// once any data has been contributed.
struct StrengthEntry {
    Id16 partner{};
    std::uint64_t samples = 0;  // D_i
    double strength = 0.0;      // S_i
};

struct StrengthTable {
    std::vector<StrengthEntry> entries;  // fixed coalition order
    std::uint64_t total_samples = 0;     // D

    std::size_t partner_count() const { return entries.size(); }
    bool has(const Id16& partner) const;
    const StrengthEntry& entry_of(const Id16& partner) const;

    static StrengthTable uniform(const std::vector<Id16>& partners);

    void encode(CanonicalWriter& w) const;
    static StrengthTable decode(CanonicalReader& r);

    // Tolerance-checked consistency with the strength formula.
    bool consistent(double tol = 1e-9) const;
};

// Returns a copy with the contributor's sample count bumped and every
// strength recomputed.
StrengthTable update_strengths(const StrengthTable& table, const Id16& contributor,
                               std::uint64_t batch_size);

double expected_strength(std::size_t partner_count, std::uint64_t partner_samples,
                         std::uint64_t total_samples);

enum class BlockKind : std::uint8_t { genesis = 0, increment = 1, rollback = 2 };

std::string block_kind_name(BlockKind k);
BlockKind block_kind_from_name(const std::string& name);

struct Block {
    std::uint64_t index = 0;
    std::int64_t timestamp = 0;  // simulated epoch milliseconds
    Hash32 prev_hash{};
    Hash32 model_hash{};
    Id16 contributor{};
    StrengthTable strengths;
    BlockKind kind = BlockKind::increment;
    std::optional<std::uint64_t> rollback_target;
    Hash32 block_hash{};

    // Canonical encoding of every field except block_hash.
    Bytes hash_preimage() const;
};

Hash32 compute_block_hash(const Block& b);

struct Chain {
    std::vector<Block> blocks;

    bool empty() const { return blocks.empty(); }
    std::size_t size() const { return blocks.size(); }
    const Block& head() const;
    const Block& at(std::uint64_t index) const;
};

Block make_genesis(const model::ModelWeights& genesis_model, const std::vector<Id16>& partners,
                   std::int64_t timestamp);

// Validates linkage (index, prev_hash, timestamp, block_hash) before
// extending the chain; each violation throws a ChainError with its own code.
void append_block(Chain& chain, Block block);

struct VerifyResult {
    bool ok = true;
    std::uint64_t bad_index = 0;
    std::string reason;
};

// Full-chain audit of every block invariant and linkage. Findings are
// returned, never thrown.
VerifyResult verify_chain(const Chain& chain);

// Line format used by `dump-chain`, golden tests, and the stored state:
// fields in schema order, hashes hex-encoded, strengths as
// id:samples:strength triples.
std::string dump_block(const Block& b);
Block parse_block(const std::string& line);
std::string dump_chain(const Chain& chain);
Chain parse_chain(std::istream& in);

}  // namespace tclearn::ledger

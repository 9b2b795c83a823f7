#include "tclearn/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "tclearn/hash.hpp"

namespace tclearn::ledger {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t p = s.find(sep, start);
        if (p == std::string::npos) p = s.size();
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
    return out;
}

std::uint64_t parse_u64(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ChainError(ChainErrorCode::parse, "invalid integer field: " + s);
    return std::stoull(s);
}

}  // namespace

bool StrengthTable::has(const Id16& partner) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const StrengthEntry& e) { return e.partner == partner; });
}

const StrengthEntry& StrengthTable::entry_of(const Id16& partner) const {
    for (const StrengthEntry& e : entries)
        if (e.partner == partner) return e;
    throw ValidationError("partner not present in strength table");
}

StrengthTable StrengthTable::uniform(const std::vector<Id16>& partners) {
    if (partners.empty()) throw ValidationError("coalition must not be empty");
    StrengthTable t;
    t.total_samples = 0;
    double s = 1.0 / static_cast<double>(partners.size());
    for (const Id16& p : partners) t.entries.push_back({p, 0, s});
    return t;
}

void StrengthTable::encode(CanonicalWriter& w) const {
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const StrengthEntry& e : entries) {
        w.raw(as_view(e.partner));
        w.u64(e.samples);
        w.f64(e.strength);
    }
    w.u64(total_samples);
}

StrengthTable StrengthTable::decode(CanonicalReader& r) {
    StrengthTable t;
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        StrengthEntry e;
        e.partner = r.fixed<16>();
        e.samples = r.u64();
        e.strength = r.f64();
        t.entries.push_back(e);
    }
    t.total_samples = r.u64();
    return t;
}

bool StrengthTable::consistent(double tol) const {
    if (entries.empty()) return false;
    std::uint64_t sum_samples = 0;
    double sum_strength = 0.0;
    for (const StrengthEntry& e : entries) {
        double expected = expected_strength(entries.size(), e.samples, total_samples);
        if (std::abs(e.strength - expected) > tol) return false;
        sum_samples += e.samples;
        sum_strength += e.strength;
    }
    if (sum_samples != total_samples) return false;
    double expected_sum = total_samples > 0 ? 2.0 : 1.0;
    return std::abs(sum_strength - expected_sum) <= tol * static_cast<double>(entries.size() + 1);
}

double expected_strength(std::size_t partner_count, std::uint64_t partner_samples,
                         std::uint64_t total_samples) {
    double base = 1.0 / static_cast<double>(partner_count);
    if (total_samples == 0) return base;
    return base + static_cast<double>(partner_samples) / static_cast<double>(total_samples);
}

StrengthTable update_strengths(const StrengthTable& table, const Id16& contributor,
                               std::uint64_t batch_size) {
    if (batch_size < 1) throw ValidationError("contribution batch must hold at least one sample");
    if (!table.has(contributor)) throw ValidationError("unknown contributor in strength update");
    StrengthTable next = table;
    next.total_samples += batch_size;
    for (StrengthEntry& e : next.entries) {
        if (e.partner == contributor) e.samples += batch_size;
        e.strength = expected_strength(next.entries.size(), e.samples, next.total_samples);
    }
    return next;
}

std::string block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::genesis: return "genesis";
        case BlockKind::increment: return "increment";
        case BlockKind::rollback: return "rollback";
    }
    throw ValidationError("unknown block kind");
}

BlockKind block_kind_from_name(const std::string& name) {
    if (name == "genesis") return BlockKind::genesis;
    if (name == "increment") return BlockKind::increment;
    if (name == "rollback") return BlockKind::rollback;
    throw ChainError(ChainErrorCode::parse, "unknown block kind: " + name);
}

Bytes Block::hash_preimage() const {
    CanonicalWriter w;
    w.u64(index);
    w.i64(timestamp);
    w.raw(as_view(prev_hash));
    w.raw(as_view(model_hash));
    w.raw(as_view(contributor));
    strengths.encode(w);
    w.u8(static_cast<std::uint8_t>(kind));
    w.u8(rollback_target.has_value() ? 1 : 0);
    w.u64(rollback_target.value_or(0));
    return w.take();
}

Hash32 compute_block_hash(const Block& b) { return crypto::sha256(as_view(b.hash_preimage())); }

const Block& Chain::head() const {
    if (blocks.empty()) throw ValidationError("chain is empty");
    return blocks.back();
}

const Block& Chain::at(std::uint64_t index) const {
    if (index >= blocks.size()) throw ValidationError("block index out of range");
    return blocks[index];
}

Block make_genesis(const model::ModelWeights& genesis_model, const std::vector<Id16>& partners,
                   std::int64_t timestamp) {
    if (partners.empty()) throw ValidationError("cannot create genesis for an empty coalition");
    Block b;
    b.index = 0;
    b.timestamp = timestamp;
    b.prev_hash = zero_hash32();
    b.model_hash = genesis_model.hash();
    b.contributor = Id16{};  // no contributor for genesis
    b.strengths = StrengthTable::uniform(partners);
    b.kind = BlockKind::genesis;
    b.block_hash = compute_block_hash(b);
    return b;
}

void append_block(Chain& chain, Block block) {
    std::uint64_t expected_index = chain.size();
    if (block.index != expected_index)
        throw ChainError(ChainErrorCode::index_gap, "block index " + std::to_string(block.index) +
                                                        " does not extend chain of length " +
                                                        std::to_string(chain.size()));
    Hash32 expected_prev = chain.empty() ? zero_hash32() : chain.head().block_hash;
    if (block.prev_hash != expected_prev)
        throw ChainError(ChainErrorCode::fork, "previous-hash mismatch at index " +
                                                   std::to_string(block.index));
    if (!chain.empty() && block.timestamp < chain.head().timestamp)
        throw ChainError(ChainErrorCode::time_regression,
                         "timestamp regression at index " + std::to_string(block.index));
    if (block.block_hash != compute_block_hash(block))
        throw ChainError(ChainErrorCode::bad_block_hash,
                         "stored block hash does not match its fields at index " +
                             std::to_string(block.index));
    chain.blocks.push_back(std::move(block));
}

VerifyResult verify_chain(const Chain& chain) {
    auto fail = [](std::uint64_t index, std::string reason) {
        return VerifyResult{false, index, std::move(reason)};
    };
    if (chain.empty()) return {};

    for (std::uint64_t i = 0; i < chain.size(); ++i) {
        const Block& b = chain.blocks[i];
        if (b.index != i) return fail(i, "index out of sequence");
        if (i == 0) {
            if (b.kind != BlockKind::genesis) return fail(i, "first block is not genesis");
            if (b.prev_hash != zero_hash32()) return fail(i, "genesis prev_hash not zero");
        } else {
            if (b.kind == BlockKind::genesis) return fail(i, "genesis block after index 0");
            if (b.prev_hash != chain.blocks[i - 1].block_hash)
                return fail(i, "previous-hash linkage broken");
            if (b.timestamp < chain.blocks[i - 1].timestamp)
                return fail(i, "timestamp regression");
        }
        if (b.block_hash != compute_block_hash(b))
            return fail(i, "block hash does not match fields");
        if (!b.strengths.consistent()) return fail(i, "strength table inconsistent");
        if (b.kind == BlockKind::rollback) {
            if (!b.rollback_target) return fail(i, "rollback block missing target");
            if (*b.rollback_target >= i) return fail(i, "rollback target not in the past");
            if (chain.blocks[*b.rollback_target].model_hash != b.model_hash)
                return fail(i, "rollback model hash does not match target block");
        } else if (b.rollback_target) {
            return fail(i, "non-rollback block carries a rollback target");
        }
    }
    return {};
}

std::string dump_block(const Block& b) {
    std::ostringstream out;
    out << b.index << ' ' << b.timestamp << ' ' << to_hex(as_view(b.prev_hash)) << ' '
        << to_hex(as_view(b.model_hash)) << ' ' << to_hex(as_view(b.contributor)) << ' ';
    for (std::size_t i = 0; i < b.strengths.entries.size(); ++i) {
        const StrengthEntry& e = b.strengths.entries[i];
        if (i) out << ',';
        out << to_hex(as_view(e.partner)) << ':' << e.samples << ':'
            << format_double(e.strength);
    }
    out << ' ' << b.strengths.total_samples << ' ' << block_kind_name(b.kind) << ' ';
    if (b.rollback_target)
        out << *b.rollback_target;
    else
        out << '-';
    out << ' ' << to_hex(as_view(b.block_hash));
    return out.str();
}

Block parse_block(const std::string& line) {
    std::vector<std::string> f = split(line, ' ');
    if (f.size() != 10) throw ChainError(ChainErrorCode::parse, "block line needs 10 fields");
    Block b;
    try {
        b.index = parse_u64(f[0]);
        b.timestamp = static_cast<std::int64_t>(std::stoll(f[1]));
        b.prev_hash = hash32_from_hex(f[2]);
        b.model_hash = hash32_from_hex(f[3]);
        b.contributor = id16_from_hex(f[4]);
        for (const std::string& part : split(f[5], ',')) {
            std::vector<std::string> triple = split(part, ':');
            if (triple.size() != 3)
                throw ChainError(ChainErrorCode::parse, "strength entry needs id:samples:strength");
            StrengthEntry e;
            e.partner = id16_from_hex(triple[0]);
            e.samples = parse_u64(triple[1]);
            e.strength = parse_double(triple[2]);
            b.strengths.entries.push_back(e);
        }
        b.strengths.total_samples = parse_u64(f[6]);
        b.kind = block_kind_from_name(f[7]);
        if (f[8] != "-") b.rollback_target = parse_u64(f[8]);
        b.block_hash = hash32_from_hex(f[9]);
    } catch (const ChainError&) {
        throw;
    } catch (const std::exception& e) {
        throw ChainError(ChainErrorCode::parse, std::string("malformed block line: ") + e.what());
    }
    return b;
}

std::string dump_chain(const Chain& chain) {
    std::string out;
    for (const Block& b : chain.blocks) {
        out += dump_block(b);
        out += '\n';
    }
    return out;
}

Chain parse_chain(std::istream& in) {
    Chain c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        c.blocks.push_back(parse_block(line));
    }
    return c;
}

}  // namespace tclearn::ledger

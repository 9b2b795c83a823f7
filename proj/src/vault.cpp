#include "tclearn/vault.hpp"

#include <algorithm>
#include <sstream>

#include "tclearn/crypto.hpp"
#include "tclearn/encoding.hpp"
#include "tclearn/hash.hpp"

namespace tclearn::vault {

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

}  // namespace

std::string encryption_mode_name(EncryptionMode m) {
    switch (m) {
        case EncryptionMode::none: return "none";
        case EncryptionMode::symmetric: return "symmetric";
        case EncryptionMode::homomorphic: return "homomorphic";
    }
    throw ValidationError("unknown encryption mode");
}

EncryptionMode encryption_mode_from_name(const std::string& name) {
    if (name == "none") return EncryptionMode::none;
    if (name == "symmetric") return EncryptionMode::symmetric;
    if (name == "homomorphic") return EncryptionMode::homomorphic;
    throw ValidationError("unknown encryption mode: " + name);
}

std::string audit_action_name(AuditAction a) {
    switch (a) {
        case AuditAction::store: return "store";
        case AuditAction::fetch: return "fetch";
        case AuditAction::fetch_denied: return "fetch_denied";
        case AuditAction::rollback: return "rollback";
        case AuditAction::decrypt_request: return "decrypt_request";
    }
    throw ValidationError("unknown audit action");
}

AuditAction audit_action_from_name(const std::string& name) {
    if (name == "store") return AuditAction::store;
    if (name == "fetch") return AuditAction::fetch;
    if (name == "fetch_denied") return AuditAction::fetch_denied;
    if (name == "rollback") return AuditAction::rollback;
    if (name == "decrypt_request") return AuditAction::decrypt_request;
    throw ValidationError("unknown audit action: " + name);
}

Bytes AuditRecord::hash_preimage() const {
    CanonicalWriter w;
    w.u64(seq);
    w.i64(timestamp);
    w.raw(as_view(requester));
    w.raw(as_view(model_hash));
    w.u8(static_cast<std::uint8_t>(action));
    w.raw(as_view(prev_record_hash));
    return w.take();
}

Hash32 compute_record_hash(const AuditRecord& r) {
    return crypto::sha256(as_view(r.hash_preimage()));
}

std::string dump_audit_record(const AuditRecord& r) {
    std::ostringstream out;
    out << r.seq << ' ' << r.timestamp << ' ' << to_hex(as_view(r.requester)) << ' '
        << to_hex(as_view(r.model_hash)) << ' ' << audit_action_name(r.action) << ' '
        << to_hex(as_view(r.prev_record_hash)) << ' ' << to_hex(as_view(r.record_hash));
    return out.str();
}

AuditRecord parse_audit_record(const std::string& line) {
    std::vector<std::string> f = split(line, ' ');
    if (f.size() != 7) throw VaultError("audit record line needs 7 fields");
    AuditRecord r;
    try {
        r.seq = std::stoull(f[0]);
        r.timestamp = std::stoll(f[1]);
        r.requester = id16_from_hex(f[2]);
        r.model_hash = hash32_from_hex(f[3]);
        r.action = audit_action_from_name(f[4]);
        r.prev_record_hash = hash32_from_hex(f[5]);
        r.record_hash = hash32_from_hex(f[6]);
    } catch (const std::exception& e) {
        throw VaultError(std::string("malformed audit record: ") + e.what());
    }
    return r;
}

AccessPolicy::Entry AccessPolicy::lookup(const Id16& partner) const {
    auto it = entries.find(partner);
    if (it == entries.end()) return {};  // deny by default
    return it->second;
}

Vault::Vault(Bytes symmetric_key32, AccessPolicy policy)
    : symmetric_key_(std::move(symmetric_key32)), policy_(std::move(policy)) {
    if (symmetric_key_.size() != 32) throw ValidationError("vault key must be 32 bytes");
}

void Vault::set_he_key(crypto::HEKeyPair keypair) { he_key_ = std::move(keypair); }

void Vault::append_journal(const Id16& requester, const Hash32& model_hash, AuditAction action,
                           std::int64_t now) {
    AuditRecord r;
    r.seq = journal_.size();
    r.timestamp = now;
    r.requester = requester;
    r.model_hash = model_hash;
    r.action = action;
    r.prev_record_hash = journal_.empty() ? zero_hash32() : journal_.back().record_hash;
    r.record_hash = compute_record_hash(r);
    journal_.push_back(std::move(r));
}

const VaultRecord& Vault::store_model(const model::ModelWeights& m, std::uint64_t block_index,
                                      EncryptionMode mode, std::int64_t now, const Id16& storer) {
    m.validate();
    Hash32 h = m.hash();
    auto it = records_.find(h);
    if (it != records_.end()) {
        if (it->second.block_index != block_index)
            throw VaultError("model already stored under a different block index");
        return it->second;  // idempotent re-store of identical content
    }

    Bytes plaintext = m.canonical_encoding();
    VaultRecord rec;
    rec.model_hash = h;
    rec.block_index = block_index;
    rec.stored_at = now;
    rec.mode = mode;
    switch (mode) {
        case EncryptionMode::none:
            rec.encrypted_blob = plaintext;
            break;
        case EncryptionMode::symmetric: {
            // Nonce derived from the model hash: unique per record since
            // records are keyed by that hash.
            Bytes nonce(h.begin(), h.begin() + 12);
            rec.encrypted_blob = crypto::aes256gcm_encrypt(as_view(symmetric_key_),
                                                           as_view(nonce), as_view(plaintext),
                                                           as_view(h));
            break;
        }
        case EncryptionMode::homomorphic: {
            if (!he_key_) throw VaultError("homomorphic storage requires an HE key");
            crypto::QuantizedWeights q = crypto::quantize_weights(m.weights);
            Rng rng(derive_seed(block_index, "vault-he-store"));
            std::vector<crypto::HECiphertext> enc =
                crypto::encrypt_quantized(q, he_key_->pub, rng);
            CanonicalWriter w;
            w.bytes(as_view(m.arch.canonical_encoding()));
            w.raw(as_view(crypto::serialize_ciphertext_vector(enc)));
            rec.encrypted_blob = w.take();
            for (const crypto::HECiphertext& c : enc)
                flag_protected_ciphertext(crypto::sha256(as_view(c.serialize())));
            break;
        }
    }
    const VaultRecord& stored = records_.emplace(h, std::move(rec)).first->second;
    append_journal(storer, h, AuditAction::store, now);
    return stored;
}

bool Vault::has_model(const Hash32& model_hash) const { return records_.count(model_hash) > 0; }

const VaultRecord& Vault::record_of(const Hash32& model_hash) const {
    auto it = records_.find(model_hash);
    if (it == records_.end()) throw VaultError("unknown model hash in vault");
    return it->second;
}

FetchResult Vault::fetch_model(const Id16& requester, const Hash32& model_hash,
                               std::int64_t now) {
    auto it = records_.find(model_hash);
    if (it == records_.end()) throw VaultError("unknown model hash in vault");

    AccessPolicy::Entry entry = policy_.lookup(requester);
    FetchResult result;
    if (!entry.allowed) {
        result.denial_reason = "access not granted";
        append_journal(requester, model_hash, AuditAction::fetch_denied, now);
        return result;
    }
    if (entry.quota) {
        std::uint64_t recent = 0;
        for (const AuditRecord& r : journal_) {
            if (r.action == AuditAction::fetch && r.requester == requester &&
                r.timestamp > now - entry.quota->window)
                ++recent;
        }
        if (recent >= entry.quota->max_fetches) {
            result.denial_reason = "fetch quota exhausted";
            append_journal(requester, model_hash, AuditAction::fetch_denied, now);
            return result;
        }
    }
    result.allowed = true;
    result.blob = it->second.encrypted_blob;
    append_journal(requester, model_hash, AuditAction::fetch, now);
    return result;
}

Bytes Vault::decrypt_blob(const VaultRecord& rec) const {
    switch (rec.mode) {
        case EncryptionMode::none:
            return rec.encrypted_blob;
        case EncryptionMode::symmetric: {
            Bytes nonce(rec.model_hash.begin(), rec.model_hash.begin() + 12);
            return crypto::aes256gcm_decrypt(as_view(symmetric_key_), as_view(nonce),
                                             as_view(rec.encrypted_blob),
                                             as_view(rec.model_hash));
        }
        case EncryptionMode::homomorphic: {
            if (!he_key_) throw VaultError("homomorphic record without an HE key");
            CanonicalReader r(as_view(rec.encrypted_blob));
            Bytes arch_bytes = r.bytes();
            Bytes rest = r.raw(r.remaining());
            std::vector<crypto::HECiphertext> enc = crypto::parse_ciphertext_vector(as_view(rest));
            crypto::QuantizedWeights q;
            q.values.reserve(enc.size());
            for (const crypto::HECiphertext& c : enc) {
                crypto::BigInt m = crypto::he_decrypt(he_key_->pub, he_key_->priv, c);
                q.values.push_back(static_cast<std::uint64_t>(m.to_i64()));
            }
            model::ModelWeights m;
            m.arch = model::parse_arch(as_view(arch_bytes));
            m.weights = crypto::dequantize_weights(q);
            m.validate();
            return m.canonical_encoding();
        }
    }
    throw VaultError("unknown encryption mode");
}

model::ModelWeights Vault::decrypt_record(const Hash32& model_hash, std::uint64_t version) const {
    const VaultRecord& rec = record_of(model_hash);
    Bytes plaintext = decrypt_blob(rec);
    if (crypto::sha256(as_view(plaintext)) != rec.model_hash)
        throw VaultError("decrypted blob does not reproduce the stored model hash");
    return model::parse_model(as_view(plaintext), version);
}

JournalCheck verify_journal_records(const std::vector<AuditRecord>& journal) {
    Hash32 prev = zero_hash32();
    for (std::size_t i = 0; i < journal.size(); ++i) {
        const AuditRecord& r = journal[i];
        if (r.seq != i) return {false, i};
        if (r.prev_record_hash != prev) return {false, i};
        if (r.record_hash != compute_record_hash(r)) return {false, i};
        prev = r.record_hash;
    }
    return {};
}

std::vector<Id16> audit_query_records(const std::vector<AuditRecord>& journal,
                                      const Hash32& model_hash, std::int64_t before) {
    JournalCheck check = verify_journal_records(journal);
    if (!check.ok) throw VaultError("audit journal tampered", check.bad_seq);
    std::vector<Id16> out;
    for (const AuditRecord& r : journal) {
        if (r.action != AuditAction::fetch || r.model_hash != model_hash) continue;
        if (r.timestamp >= before) continue;
        if (std::find(out.begin(), out.end(), r.requester) == out.end())
            out.push_back(r.requester);
    }
    return out;
}

JournalCheck Vault::verify_journal() const { return verify_journal_records(journal_); }

std::vector<Id16> Vault::audit_query(const Hash32& model_hash, std::int64_t before) const {
    return audit_query_records(journal_, model_hash, before);
}

ledger::Block Vault::rollback(ledger::Chain& chain, std::uint64_t target_index,
                              const Id16& authorizer, std::int64_t now) {
    AccessPolicy::Entry entry = policy_.lookup(authorizer);
    if (!entry.rollback_allowed) {
        append_journal(authorizer, zero_hash32(), AuditAction::rollback, now);
        throw VaultError("partner not authorized to roll back");
    }
    if (target_index >= chain.size()) throw VaultError("rollback target out of range");
    const ledger::Block& target = chain.at(target_index);
    if (!has_model(target.model_hash))
        throw VaultError("rollback target model is not stored in the vault");

    ledger::Block b;
    b.index = chain.size();
    b.timestamp = std::max(now, chain.head().timestamp);
    b.prev_hash = chain.head().block_hash;
    b.model_hash = target.model_hash;
    b.contributor = authorizer;
    b.strengths = chain.head().strengths;  // contributions are not undone
    b.kind = ledger::BlockKind::rollback;
    b.rollback_target = target_index;
    b.block_hash = ledger::compute_block_hash(b);
    ledger::append_block(chain, b);
    append_journal(authorizer, target.model_hash, AuditAction::rollback, now);
    return b;
}

std::vector<Id16> Vault::id_conflicts(const std::vector<Id16>& ids) const {
    std::vector<Id16> out;
    for (const Id16& id : ids)
        if (registry_.count(id) > 0) out.push_back(id);
    return out;
}

RegisterResult Vault::register_data_ids(const std::vector<Id16>& ids,
                                        std::uint64_t block_index) {
    RegisterResult result;
    result.conflicts = id_conflicts(ids);
    if (!result.conflicts.empty()) return result;  // all-or-nothing
    for (const Id16& id : ids) registry_[id] = block_index;
    result.accepted = true;
    return result;
}

void Vault::flag_protected_ciphertext(const Hash32& payload_digest) {
    protected_ciphertexts_.insert(payload_digest);
}

bool Vault::is_protected_ciphertext(const Hash32& payload_digest) const {
    return protected_ciphertexts_.count(payload_digest) > 0;
}

void Vault::log_decrypt_request(const Id16& requester, const Hash32& payload_digest,
                                std::int64_t now) {
    append_journal(requester, payload_digest, AuditAction::decrypt_request, now);
}

void Vault::restore_journal(std::vector<AuditRecord> journal) { journal_ = std::move(journal); }

void Vault::restore_record(VaultRecord rec) { records_[rec.model_hash] = std::move(rec); }

void Vault::restore_registry_entry(const Id16& id, std::uint64_t block_index) {
    registry_[id] = block_index;
}

}  // namespace tclearn::vault

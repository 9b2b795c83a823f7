#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/ledger.hpp"
#include "tclearn/model.hpp"
#include "tclearn/paillier.hpp"

namespace tclearn::vault {

enum class EncryptionMode : std::uint8_t { none = 0, symmetric = 1, homomorphic = 2 };

std::string encryption_mode_name(EncryptionMode m);
EncryptionMode encryption_mode_from_name(const std::string& name);

enum class AuditAction : std::uint8_t {
    store = 0,
    fetch = 1,
    fetch_denied = 2,
    rollback = 3,
    decrypt_request = 4,
};

std::string audit_action_name(AuditAction a);
AuditAction audit_action_from_name(const std::string& name);

// One access-journal entry. Records form their own hash chain so any
// after-the-fact edit is detectable.
struct AuditRecord {
    std::uint64_t seq = 0;
    std::int64_t timestamp = 0;
    Id16 requester{};
    Hash32 model_hash{};
    AuditAction action = AuditAction::fetch;
    Hash32 prev_record_hash{};
    Hash32 record_hash{};

    Bytes hash_preimage() const;
};

Hash32 compute_record_hash(const AuditRecord& r);

std::string dump_audit_record(const AuditRecord& r);
AuditRecord parse_audit_record(const std::string& line);

struct VaultRecord {
    Hash32 model_hash{};
    Bytes encrypted_blob;
    std::uint64_t block_index = 0;
    std::int64_t stored_at = 0;
    EncryptionMode mode = EncryptionMode::none;
};

struct FetchQuota {
    std::uint64_t max_fetches = 0;
    std::int64_t window = 0;
};

struct AccessPolicy {
    struct Entry {
        bool allowed = false;
        bool rollback_allowed = false;
        std::optional<FetchQuota> quota;
    };
    std::map<Id16, Entry> entries;  // deny-by-default for unknown identities

    Entry lookup(const Id16& partner) const;
    void allow(const Id16& partner) { entries[partner].allowed = true; }
    void revoke(const Id16& partner) { entries[partner].allowed = false; }
    void allow_rollback(const Id16& partner) {
        entries[partner].allowed = true;
        entries[partner].rollback_allowed = true;
    }
};

struct FetchResult {
    bool allowed = false;
    Bytes blob;
    std::string denial_reason;
};

struct RegisterResult {
    bool accepted = false;
    std::vector<Id16> conflicts;
};

struct JournalCheck {
    bool ok = true;
    std::uint64_t bad_seq = 0;
};

// Standalone journal operations, usable on records read back from disk.
JournalCheck verify_journal_records(const std::vector<AuditRecord>& journal);
std::vector<Id16> audit_query_records(const std::vector<AuditRecord>& journal,
                                      const Hash32& model_hash, std::int64_t before);

// Supervisor-operated model store: encrypted blobs addressed by model hash,
// an append-only hash-chained access journal, the anonymized sample-id
// registry, and rollback authority.
class Vault {
  public:
    Vault(Bytes symmetric_key32, AccessPolicy policy);

    void set_he_key(crypto::HEKeyPair keypair);  // mode C storage
    const std::optional<crypto::HEKeyPair>& he_key() const { return he_key_; }

    // Blob layout per mode: plaintext canonical model, AES-256-GCM of it
    // (nonce from the model hash), or encrypted quantized weights.
    const VaultRecord& store_model(const model::ModelWeights& m, std::uint64_t block_index,
                                   EncryptionMode mode, std::int64_t now, const Id16& storer);

    FetchResult fetch_model(const Id16& requester, const Hash32& model_hash, std::int64_t now);

    bool has_model(const Hash32& model_hash) const;
    const VaultRecord& record_of(const Hash32& model_hash) const;

    // Decrypts a stored blob back to the exact certified model.
    model::ModelWeights decrypt_record(const Hash32& model_hash,
                                       std::uint64_t version = 0) const;
    Bytes decrypt_blob(const VaultRecord& rec) const;

    // Partners that successfully fetched this version before the cutoff,
    // deduplicated, ordered by first access. Refuses to answer from a
    // tampered journal.
    std::vector<Id16> audit_query(const Hash32& model_hash, std::int64_t before) const;

    ledger::Block rollback(ledger::Chain& chain, std::uint64_t target_index,
                           const Id16& authorizer, std::int64_t now);

    RegisterResult register_data_ids(const std::vector<Id16>& ids, std::uint64_t block_index);
    std::vector<Id16> id_conflicts(const std::vector<Id16>& ids) const;
    std::size_t registry_size() const { return registry_.size(); }

    // Supervisor decrypt guard: ciphertexts belonging to models or
    // gradients are flagged and never decrypted on request.
    void flag_protected_ciphertext(const Hash32& payload_digest);
    bool is_protected_ciphertext(const Hash32& payload_digest) const;
    void log_decrypt_request(const Id16& requester, const Hash32& payload_digest,
                             std::int64_t now);

    const std::vector<AuditRecord>& journal() const { return journal_; }
    JournalCheck verify_journal() const;

    const std::map<Hash32, VaultRecord>& records() const { return records_; }
    const std::map<Id16, std::uint64_t>& registry() const { return registry_; }
    AccessPolicy& policy() { return policy_; }
    const AccessPolicy& policy() const { return policy_; }

    // State restoration (journal/records/registry read back from disk).
    void restore_journal(std::vector<AuditRecord> journal);
    void restore_record(VaultRecord rec);
    void restore_registry_entry(const Id16& id, std::uint64_t block_index);

    // Test hook: mutate a journal record in place to exercise tamper checks.
    AuditRecord& mutable_journal_record(std::size_t i) { return journal_[i]; }

  private:
    void append_journal(const Id16& requester, const Hash32& model_hash, AuditAction action,
                        std::int64_t now);

    Bytes symmetric_key_;
    AccessPolicy policy_;
    std::optional<crypto::HEKeyPair> he_key_;
    std::map<Hash32, VaultRecord> records_;
    std::vector<AuditRecord> journal_;
    std::map<Id16, std::uint64_t> registry_;  // sample id -> introducing block
    std::set<Hash32> protected_ciphertexts_;
};

}  // namespace tclearn::vault

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "tclearn/vault.hpp"
#include "test_util.hpp"

using namespace tclearn;

namespace {

vault::AccessPolicy open_policy(std::size_t partners) {
    vault::AccessPolicy p;
    for (std::size_t i = 0; i < partners; ++i) p.allow(tt::test_id(static_cast<std::uint32_t>(i)));
    p.allow_rollback(tt::test_id(100));  // the supervisor slot
    return p;
}

vault::Vault make_vault(std::size_t partners = 4) {
    return vault::Vault(Rng(7).bytes(32), open_policy(partners));
}

model::ModelWeights sample_model(std::uint64_t seed) {
    return model::init_genesis_model(tt::logistic_arch(3), seed);
}

}  // namespace

TEST_CASE("stored models round-trip bit-exactly in every mode") {
    vault::Vault v = make_vault();
    crypto::HEKeyPair he = crypto::he_keygen(512, 12);
    v.set_he_key(he);

    SUBCASE("mode none stores the canonical plaintext") {
        model::ModelWeights m = sample_model(1);
        const vault::VaultRecord& rec =
            v.store_model(m, 1, vault::EncryptionMode::none, 10, tt::test_id(100));
        CHECK(rec.encrypted_blob == m.canonical_encoding());
        CHECK(v.decrypt_record(m.hash()).weights == m.weights);
    }
    SUBCASE("symmetric mode encrypts at rest") {
        model::ModelWeights m = sample_model(2);
        const vault::VaultRecord& rec =
            v.store_model(m, 1, vault::EncryptionMode::symmetric, 10, tt::test_id(100));
        CHECK(rec.encrypted_blob != m.canonical_encoding());
        CHECK(v.decrypt_record(m.hash()).weights == m.weights);
    }
    SUBCASE("homomorphic mode stores encrypted quantized weights") {
        model::ModelWeights m = sample_model(3);
        // grid-align so the quantized storage reproduces the hash exactly
        m.weights = crypto::dequantize_weights(crypto::quantize_weights(m.weights));
        v.store_model(m, 1, vault::EncryptionMode::homomorphic, 10, tt::test_id(100));
        model::ModelWeights back = v.decrypt_record(m.hash());
        CHECK(back.weights == m.weights);
        CHECK(back.hash() == m.hash());
    }
}

TEST_CASE("conflicting duplicate stores are refused") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(4);
    v.store_model(m, 3, vault::EncryptionMode::none, 10, tt::test_id(100));
    CHECK_NOTHROW(v.store_model(m, 3, vault::EncryptionMode::none, 11, tt::test_id(100)));
    CHECK_THROWS_AS(v.store_model(m, 4, vault::EncryptionMode::none, 12, tt::test_id(100)),
                    VaultError);
}

TEST_CASE("fetch honors the access policy and journals everything") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(5);
    Hash32 h = m.hash();
    v.store_model(m, 1, vault::EncryptionMode::none, 10, tt::test_id(100));
    std::size_t base_records = v.journal().size();

    SUBCASE("authorized fetch returns the blob with exactly one record") {
        vault::FetchResult r = v.fetch_model(tt::test_id(0), h, 20);
        CHECK(r.allowed);
        CHECK(r.blob == m.canonical_encoding());
        CHECK(v.journal().size() == base_records + 1);
        CHECK(v.journal().back().action == vault::AuditAction::fetch);
        CHECK(v.journal().back().requester == tt::test_id(0));
    }
    SUBCASE("revoked partner is denied and the denial journaled") {
        v.policy().revoke(tt::test_id(2));
        vault::FetchResult r = v.fetch_model(tt::test_id(2), h, 20);
        CHECK_FALSE(r.allowed);
        CHECK(v.journal().back().action == vault::AuditAction::fetch_denied);
    }
    SUBCASE("unknown identities are denied by default") {
        vault::FetchResult r = v.fetch_model(tt::test_id(42), h, 20);
        CHECK_FALSE(r.allowed);
    }
    SUBCASE("unknown model hash is an error with no record") {
        Hash32 bogus{};
        bogus[0] = 9;
        CHECK_THROWS_AS(v.fetch_model(tt::test_id(0), bogus, 20), VaultError);
        CHECK(v.journal().size() == base_records);
    }
}

TEST_CASE("fetch quotas cap accesses per window") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(6);
    Hash32 h = m.hash();
    v.store_model(m, 1, vault::EncryptionMode::none, 0, tt::test_id(100));
    v.policy().entries[tt::test_id(0)].quota = vault::FetchQuota{2, 100};

    CHECK(v.fetch_model(tt::test_id(0), h, 10).allowed);
    CHECK(v.fetch_model(tt::test_id(0), h, 20).allowed);
    vault::FetchResult third = v.fetch_model(tt::test_id(0), h, 30);
    CHECK_FALSE(third.allowed);
    CHECK(third.denial_reason == "fetch quota exhausted");
    // outside the window the quota refreshes
    CHECK(v.fetch_model(tt::test_id(0), h, 200).allowed);
}

TEST_CASE("audit queries attribute fetches before the cutoff in first-access order") {
    vault::Vault v = make_vault();
    model::ModelWeights m3 = sample_model(7);
    model::ModelWeights m4 = sample_model(8);
    v.store_model(m3, 3, vault::EncryptionMode::none, 0, tt::test_id(100));
    v.store_model(m4, 4, vault::EncryptionMode::none, 0, tt::test_id(100));

    v.fetch_model(tt::test_id(2), m3.hash(), 10);  // C first
    v.fetch_model(tt::test_id(0), m3.hash(), 20);  // then A
    v.fetch_model(tt::test_id(0), m3.hash(), 25);  // A again (dedup)
    v.fetch_model(tt::test_id(1), m4.hash(), 30);  // B fetches another version
    v.fetch_model(tt::test_id(1), m3.hash(), 90);  // B after the cutoff

    std::vector<Id16> who = v.audit_query(m3.hash(), 50);
    REQUIRE(who.size() == 2);
    CHECK(who[0] == tt::test_id(2));
    CHECK(who[1] == tt::test_id(0));

    CHECK(v.audit_query(m4.hash(), 10).empty());

    SUBCASE("denied fetches never count") {
        v.policy().revoke(tt::test_id(3));
        v.fetch_model(tt::test_id(3), m3.hash(), 40);
        std::vector<Id16> after = v.audit_query(m3.hash(), 50);
        CHECK(after.size() == 2);
    }
}

TEST_CASE("journal tampering is pinpointed") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(9);
    v.store_model(m, 1, vault::EncryptionMode::none, 0, tt::test_id(100));
    for (int i = 0; i < 6; ++i)
        v.fetch_model(tt::test_id(static_cast<std::uint32_t>(i % 3)), m.hash(), 10 + i);
    REQUIRE(v.verify_journal().ok);

    SUBCASE("mutated requester") {
        v.mutable_journal_record(3).requester = tt::test_id(9);
        vault::JournalCheck c = v.verify_journal();
        CHECK_FALSE(c.ok);
        CHECK(c.bad_seq == 3);
        CHECK_THROWS_AS(v.audit_query(m.hash(), 100), VaultError);
    }
    SUBCASE("mutated timestamp") {
        v.mutable_journal_record(5).timestamp += 7;
        vault::JournalCheck c = v.verify_journal();
        CHECK_FALSE(c.ok);
        CHECK(c.bad_seq == 5);
    }
    SUBCASE("any random single-record mutation breaks the chain at or before it") {
        Rng rng(31);
        for (int trial = 0; trial < 100; ++trial) {
            vault::Vault w = make_vault();
            w.store_model(m, 1, vault::EncryptionMode::none, 0, tt::test_id(100));
            for (int i = 0; i < 8; ++i)
                w.fetch_model(tt::test_id(static_cast<std::uint32_t>(rng.uniform_int(4))),
                              m.hash(), 10 + i);
            std::size_t seq = 1 + rng.uniform_int(w.journal().size() - 1);
            vault::AuditRecord& r = w.mutable_journal_record(seq);
            switch (rng.uniform_int(4)) {
                case 0: r.requester[0] ^= 1; break;
                case 1: r.timestamp += 1; break;
                case 2: r.action = vault::AuditAction::fetch_denied; break;
                default: r.record_hash[0] ^= 1; break;
            }
            vault::JournalCheck c = w.verify_journal();
            CHECK_FALSE(c.ok);
            CHECK(c.bad_seq <= seq);
        }
    }
}

TEST_CASE("journal completeness over random access sequences") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(10);
    v.store_model(m, 1, vault::EncryptionMode::none, 0, tt::test_id(100));
    v.policy().revoke(tt::test_id(3));

    Rng rng(77);
    std::size_t expected_records = v.journal().size();
    std::size_t successful = 0;
    for (int i = 0; i < 300; ++i) {
        Id16 who = tt::test_id(static_cast<std::uint32_t>(rng.uniform_int(4)));
        vault::FetchResult r = v.fetch_model(who, m.hash(), 100 + i);
        ++expected_records;
        if (r.allowed) ++successful;
    }
    CHECK(v.journal().size() == expected_records);
    std::size_t fetch_records = 0;
    for (const vault::AuditRecord& r : v.journal())
        if (r.action == vault::AuditAction::fetch) ++fetch_records;
    CHECK(fetch_records == successful);
    CHECK(v.verify_journal().ok);
}

TEST_CASE("audit records round-trip through the text format") {
    vault::Vault v = make_vault();
    model::ModelWeights m = sample_model(11);
    v.store_model(m, 1, vault::EncryptionMode::none, 0, tt::test_id(100));
    v.fetch_model(tt::test_id(1), m.hash(), 5);
    for (const vault::AuditRecord& r : v.journal()) {
        vault::AuditRecord back = vault::parse_audit_record(vault::dump_audit_record(r));
        CHECK(back.record_hash == r.record_hash);
        CHECK(vault::compute_record_hash(back) == r.record_hash);
    }
}

TEST_CASE("rollback appends a rollback block and restores the target model") {
    vault::Vault v = make_vault();
    std::vector<Id16> ids = tt::coalition(4);

    model::ModelWeights genesis = sample_model(20);
    ledger::Chain chain;
    chain.blocks.push_back(ledger::make_genesis(genesis, ids, 0));
    v.store_model(genesis, 0, vault::EncryptionMode::none, 0, tt::test_id(100));

    std::vector<model::ModelWeights> versions{genesis};
    for (std::uint64_t i = 1; i <= 6; ++i) {
        model::ModelWeights m = sample_model(20 + i);
        const ledger::Block& head = chain.head();
        ledger::Block b;
        b.index = i;
        b.timestamp = head.timestamp + 1;
        b.prev_hash = head.block_hash;
        b.model_hash = m.hash();
        b.contributor = ids[i % 4];
        b.strengths = ledger::update_strengths(head.strengths, ids[i % 4], 20);
        b.kind = ledger::BlockKind::increment;
        b.block_hash = ledger::compute_block_hash(b);
        ledger::append_block(chain, b);
        v.store_model(m, i, vault::EncryptionMode::none, static_cast<std::int64_t>(i), tt::test_id(100));
        versions.push_back(m);
    }

    SUBCASE("authorized rollback") {
        ledger::Block rb = v.rollback(chain, 3, tt::test_id(100), 50);
        CHECK(chain.size() == 8);
        CHECK(rb.kind == ledger::BlockKind::rollback);
        CHECK(rb.model_hash == chain.at(3).model_hash);
        CHECK(*rb.rollback_target == 3);
        CHECK(ledger::verify_chain(chain).ok);
        CHECK(v.journal().back().action == vault::AuditAction::rollback);
        // restored bytes match the stored version bit-for-bit
        model::ModelWeights restored = v.decrypt_record(rb.model_hash);
        CHECK(restored.weights == versions[3].weights);
    }
    SUBCASE("unauthorized partner is denied and journaled") {
        std::size_t len = chain.size();
        CHECK_THROWS_AS(v.rollback(chain, 3, tt::test_id(1), 50), VaultError);
        CHECK(chain.size() == len);
        CHECK(v.journal().back().action == vault::AuditAction::rollback);
    }
    SUBCASE("out-of-range target") {
        CHECK_THROWS_AS(v.rollback(chain, 99, tt::test_id(100), 50), VaultError);
    }
}

TEST_CASE("the data-id registry is all-or-nothing") {
    vault::Vault v = make_vault();
    model::Dataset d = model::make_blobs(10, 2, 1.0, 7);

    SUBCASE("fresh ids are accepted") {
        vault::RegisterResult r = v.register_data_ids(d.sample_ids, 1);
        CHECK(r.accepted);
        CHECK(v.registry_size() == 10);
    }
    SUBCASE("overlap names exactly the duplicates and changes nothing") {
        std::vector<Id16> first(d.sample_ids.begin(), d.sample_ids.begin() + 6);
        REQUIRE(v.register_data_ids(first, 1).accepted);
        std::map<Id16, std::uint64_t> before = v.registry();

        std::vector<Id16> overlapping(d.sample_ids.begin() + 4, d.sample_ids.end());
        vault::RegisterResult r = v.register_data_ids(overlapping, 2);
        CHECK_FALSE(r.accepted);
        REQUIRE(r.conflicts.size() == 2);
        CHECK(r.conflicts[0] == d.sample_ids[4]);
        CHECK(r.conflicts[1] == d.sample_ids[5]);
        CHECK(v.registry() == before);
    }
    SUBCASE("the empty registration is a no-op") {
        vault::RegisterResult r = v.register_data_ids({}, 1);
        CHECK(r.accepted);
        CHECK(v.registry_size() == 0);
    }
}

TEST_CASE("the decrypt guard flags and refuses protected ciphertexts") {
    vault::Vault v = make_vault();
    crypto::HEKeyPair he = crypto::he_keygen(512, 50);
    v.set_he_key(he);
    Rng rng(8);
    crypto::HECiphertext grad = crypto::he_encrypt(he.pub, crypto::BigInt(std::uint64_t{123}),
                                                   rng);
    Hash32 digest = crypto::sha256(as_view(grad.serialize()));

    CHECK_FALSE(v.is_protected_ciphertext(digest));
    v.flag_protected_ciphertext(digest);
    CHECK(v.is_protected_ciphertext(digest));

    std::size_t before = v.journal().size();
    v.log_decrypt_request(tt::test_id(1), digest, 99);
    CHECK(v.journal().size() == before + 1);
    CHECK(v.journal().back().action == vault::AuditAction::decrypt_request);
}

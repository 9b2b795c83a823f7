#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"

using namespace tclearn;

TEST_CASE("uniform strengths before any contribution") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(4));
    CHECK(t.total_samples == 0);
    for (const ledger::StrengthEntry& e : t.entries) CHECK(e.strength == doctest::Approx(0.25));
    CHECK(t.consistent());
}

TEST_CASE("first contribution dominates the strength formula") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(4));
    ledger::StrengthTable u = ledger::update_strengths(t, tt::test_id(1), 100);
    // S_1 = 1/4 + 100/100
    CHECK(u.entry_of(tt::test_id(1)).strength == doctest::Approx(1.25).epsilon(1e-12));
    for (std::uint32_t i : {0u, 2u, 3u})
        CHECK(u.entry_of(tt::test_id(i)).strength == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(u.total_samples == 100);
}

TEST_CASE("equal contributions give equal strengths") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(4));
    for (std::uint32_t i = 0; i < 4; ++i) t = ledger::update_strengths(t, tt::test_id(i), 25);
    for (const ledger::StrengthEntry& e : t.entries)
        CHECK(e.strength == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("strengths stay exact under long contribution sequences") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(7));
    Rng rng(404);
    for (int step = 0; step < 1000; ++step) {
        Id16 who = tt::test_id(static_cast<std::uint32_t>(rng.uniform_int(7)));
        t = ledger::update_strengths(t, who, 1 + rng.uniform_int(200));
        double sum = 0.0;
        for (const ledger::StrengthEntry& e : t.entries) {
            double expected = 1.0 / 7.0 + static_cast<double>(e.samples) /
                                              static_cast<double>(t.total_samples);
            CHECK(std::abs(e.strength - expected) <= 1e-12);
            sum += e.strength;
        }
        CHECK(std::abs(sum - 2.0) <= 1e-12);
    }
}

TEST_CASE("own contributions raise strength, others' lower it") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(3));
    t = ledger::update_strengths(t, tt::test_id(1), 30);
    t = ledger::update_strengths(t, tt::test_id(0), 50);
    double s0 = t.entry_of(tt::test_id(0)).strength;
    ledger::StrengthTable after_own = ledger::update_strengths(t, tt::test_id(0), 50);
    CHECK(after_own.entry_of(tt::test_id(0)).strength > s0);
    ledger::StrengthTable after_other = ledger::update_strengths(t, tt::test_id(1), 50);
    CHECK(after_other.entry_of(tt::test_id(0)).strength < s0);
}

TEST_CASE("strength updates validate their inputs") {
    ledger::StrengthTable t = ledger::StrengthTable::uniform(tt::coalition(3));
    CHECK_THROWS_AS(ledger::update_strengths(t, tt::test_id(9), 10), ValidationError);
    CHECK_THROWS_AS(ledger::update_strengths(t, tt::test_id(0), 0), ValidationError);
    CHECK_THROWS_AS(ledger::StrengthTable::uniform({}), ValidationError);
}

TEST_CASE("genesis block carries the conventions") {
    model::ModelWeights m = model::init_genesis_model(tt::logistic_arch(2), 1);
    ledger::Block g = ledger::make_genesis(m, tt::coalition(4), 1234);
    CHECK(g.index == 0);
    CHECK(g.prev_hash == zero_hash32());
    CHECK(g.model_hash == m.hash());
    CHECK(g.kind == ledger::BlockKind::genesis);
    CHECK(g.strengths.total_samples == 0);
    for (const ledger::StrengthEntry& e : g.strengths.entries)
        CHECK(e.strength == doctest::Approx(0.25));

    ledger::Block again = ledger::make_genesis(m, tt::coalition(4), 1234);
    CHECK(again.block_hash == g.block_hash);

    CHECK_THROWS_AS(ledger::make_genesis(m, {}, 0), ValidationError);
}

TEST_CASE("block hash changes with any field") {
    ledger::Chain chain = tt::build_chain(4, 3, 7);
    ledger::Block b = chain.at(2);
    Hash32 h = ledger::compute_block_hash(b);
    CHECK(h == b.block_hash);
    ledger::Block mutated = b;
    mutated.model_hash[0] ^= 0x01;
    CHECK(ledger::compute_block_hash(mutated) != h);
    mutated = b;
    mutated.timestamp += 1;
    CHECK(ledger::compute_block_hash(mutated) != h);
    mutated = b;
    mutated.strengths.entries[0].samples += 1;
    CHECK(ledger::compute_block_hash(mutated) != h);
}

TEST_CASE("golden block hash is stable across builds") {
    // fixed fixture frozen at first build; any canonical-encoding change
    // will trip this
    std::vector<Id16> ids = tt::coalition(3);
    ledger::StrengthTable strengths = ledger::StrengthTable::uniform(ids);
    strengths = ledger::update_strengths(strengths, ids[1], 48);
    ledger::Block b;
    b.index = 5;
    b.timestamp = 777;
    b.prev_hash = crypto::sha256(as_view(std::string_view("prev")));
    b.model_hash = crypto::sha256(as_view(std::string_view("model")));
    b.contributor = ids[1];
    b.strengths = strengths;
    b.kind = ledger::BlockKind::increment;
    b.block_hash = ledger::compute_block_hash(b);
    CHECK(to_hex(as_view(b.block_hash)) ==
          "92fdf85abe69efa0f80967f946358e659256ecd54e28b1eeaf8ce0a8e8147d62");
}

TEST_CASE("append validates linkage with distinct errors") {
    ledger::Chain chain = tt::build_chain(3, 2, 11);
    const ledger::Block head = chain.head();

    auto fresh = [&](auto mutate) {
        ledger::Block b;
        b.index = chain.size();
        b.timestamp = head.timestamp + 1;
        b.prev_hash = head.block_hash;
        b.model_hash = crypto::sha256(as_view(std::string_view("next")));
        b.contributor = tt::test_id(0);
        b.strengths = ledger::update_strengths(head.strengths, tt::test_id(0), 20);
        b.kind = ledger::BlockKind::increment;
        mutate(b);
        b.block_hash = ledger::compute_block_hash(b);
        return b;
    };

    {
        ledger::Chain c = chain;
        CHECK_NOTHROW(ledger::append_block(c, fresh([](ledger::Block&) {})));
        CHECK(c.size() == chain.size() + 1);
    }
    {
        ledger::Chain c = chain;
        ledger::Block b = fresh([&](ledger::Block& blk) { blk.index += 1; });
        try {
            ledger::append_block(c, b);
            FAIL("expected index gap");
        } catch (const ChainError& e) {
            CHECK(e.code == ChainErrorCode::index_gap);
        }
    }
    {
        ledger::Chain c = chain;
        ledger::Block b =
            fresh([&](ledger::Block& blk) { blk.prev_hash = chain.at(0).block_hash; });
        try {
            ledger::append_block(c, b);
            FAIL("expected fork");
        } catch (const ChainError& e) {
            CHECK(e.code == ChainErrorCode::fork);
        }
    }
    {
        ledger::Chain c = chain;
        ledger::Block b = fresh([&](ledger::Block& blk) { blk.timestamp = head.timestamp - 1; });
        try {
            ledger::append_block(c, b);
            FAIL("expected time regression");
        } catch (const ChainError& e) {
            CHECK(e.code == ChainErrorCode::time_regression);
        }
    }
    {
        ledger::Chain c = chain;
        ledger::Block b = fresh([](ledger::Block&) {});
        b.block_hash[4] ^= 0x10;
        try {
            ledger::append_block(c, b);
            FAIL("expected bad hash");
        } catch (const ChainError& e) {
            CHECK(e.code == ChainErrorCode::bad_block_hash);
        }
    }
}

TEST_CASE("verify_chain walks the whole chain") {
    ledger::Chain chain = tt::build_chain(5, 10, 3);
    CHECK(ledger::verify_chain(chain).ok);

    SUBCASE("tampered contributor is caught at its index") {
        chain.blocks[3].contributor = tt::test_id(9);
        ledger::VerifyResult r = ledger::verify_chain(chain);
        CHECK_FALSE(r.ok);
        CHECK(r.bad_index == 3);
    }
    SUBCASE("swapped blocks are caught at the first displaced index") {
        std::swap(chain.blocks[4], chain.blocks[5]);
        ledger::VerifyResult r = ledger::verify_chain(chain);
        CHECK_FALSE(r.ok);
        CHECK(r.bad_index == 4);
    }
    SUBCASE("empty chain verifies vacuously") {
        ledger::Chain empty;
        CHECK(ledger::verify_chain(empty).ok);
    }
}

TEST_CASE("any single-field mutation is detected at or before its index") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        ledger::Chain chain = tt::build_chain(3 + rng.uniform_int(4), 2 + rng.uniform_int(8),
                                              rng.next_u64());
        auto idx = static_cast<std::size_t>(rng.uniform_int(chain.size()));
        ledger::Block& b = chain.blocks[idx];
        switch (rng.uniform_int(8)) {
            case 0: b.index += 1 + rng.uniform_int(3); break;
            case 1: b.timestamp += 1 + static_cast<std::int64_t>(rng.uniform_int(100)); break;
            case 2: b.prev_hash[rng.uniform_int(32)] ^= 1 << rng.uniform_int(8); break;
            case 3: b.model_hash[rng.uniform_int(32)] ^= 1 << rng.uniform_int(8); break;
            case 4: b.contributor[rng.uniform_int(16)] ^= 1 << rng.uniform_int(8); break;
            case 5: b.strengths.entries[rng.uniform_int(b.strengths.entries.size())].samples += 1; break;
            case 6: b.kind = b.kind == ledger::BlockKind::rollback ? ledger::BlockKind::increment
                                                                   : ledger::BlockKind::rollback; break;
            default: b.block_hash[rng.uniform_int(32)] ^= 1 << rng.uniform_int(8); break;
        }
        ledger::VerifyResult r = ledger::verify_chain(chain);
        CHECK_FALSE(r.ok);
        CHECK(r.bad_index <= idx);
    }
}

TEST_CASE("dump, reparse and re-hash reproduce blocks bit-exactly") {
    ledger::Chain chain = tt::build_chain(4, 6, 19);
    std::string dump = ledger::dump_chain(chain);
    std::istringstream in(dump);
    ledger::Chain back = ledger::parse_chain(in);
    REQUIRE(back.size() == chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) {
        CHECK(back.blocks[i].block_hash == chain.blocks[i].block_hash);
        CHECK(ledger::compute_block_hash(back.blocks[i]) == chain.blocks[i].block_hash);
        CHECK(back.blocks[i].strengths.entries[0].strength ==
              chain.blocks[i].strengths.entries[0].strength);
    }
    CHECK(ledger::dump_chain(back) == dump);
    CHECK(ledger::verify_chain(back).ok);
}

TEST_CASE("parse rejects malformed block lines") {
    CHECK_THROWS_AS(ledger::parse_block("1 2 3"), ChainError);
    CHECK_THROWS_AS(ledger::parse_block(""), ChainError);
    ledger::Chain chain = tt::build_chain(3, 1, 5);
    std::string line = ledger::dump_block(chain.at(1));
    CHECK_THROWS_AS(ledger::parse_block(line.substr(0, line.size() / 2)), ChainError);
}

TEST_CASE("rollback blocks must reference an earlier matching model") {
    ledger::Chain chain = tt::build_chain(3, 5, 23);
    const ledger::Block& head = chain.head();
    ledger::Block rb;
    rb.index = chain.size();
    rb.timestamp = head.timestamp + 1;
    rb.prev_hash = head.block_hash;
    rb.model_hash = chain.at(2).model_hash;
    rb.contributor = tt::test_id(0);
    rb.strengths = head.strengths;
    rb.kind = ledger::BlockKind::rollback;
    rb.rollback_target = 2;
    rb.block_hash = ledger::compute_block_hash(rb);
    ledger::append_block(chain, rb);
    CHECK(ledger::verify_chain(chain).ok);

    SUBCASE("target model mismatch is flagged") {
        chain.blocks.back().model_hash = chain.at(3).model_hash;
        chain.blocks.back().block_hash = ledger::compute_block_hash(chain.blocks.back());
        ledger::VerifyResult r = ledger::verify_chain(chain);
        CHECK_FALSE(r.ok);
        CHECK(r.bad_index == chain.size() - 1);
    }
    SUBCASE("future target is flagged") {
        chain.blocks.back().rollback_target = 99;
        chain.blocks.back().block_hash = ledger::compute_block_hash(chain.blocks.back());
        CHECK_FALSE(ledger::verify_chain(chain).ok);
    }
}

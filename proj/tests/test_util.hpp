#pragma once

#include <cstdint>
#include <vector>

#include "tclearn/crypto.hpp"
#include "tclearn/fba.hpp"
#include "tclearn/hash.hpp"
#include "tclearn/ledger.hpp"
#include "tclearn/model.hpp"
#include "tclearn/rng.hpp"

namespace tt {

using namespace tclearn;

inline model::ArchDescriptor logistic_arch(std::uint32_t dim) {
    model::ArchDescriptor a;
    a.layer_sizes = {dim, 1};
    a.activation = model::Activation::sigmoid;
    a.loss = model::Loss::cross_entropy;
    return a;
}

inline Id16 test_id(std::uint32_t i) {
    Id16 id{};
    id[0] = static_cast<std::uint8_t>(i);
    id[1] = static_cast<std::uint8_t>(i >> 8);
    id[15] = 0xf0;
    return id;
}

// n samples, `ones` of them labeled 1, all features zero: a zero-weight
// logistic model predicts class 1 everywhere, so its accuracy is ones/n.
inline model::Dataset fraction_dataset(std::size_t n, std::size_t ones, std::uint64_t tag) {
    model::Dataset d;
    d.feature_dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
        d.features.push_back(0.0);
        d.features.push_back(0.0);
        d.labels.push_back(i < ones ? 1.0 : 0.0);
        Id16 id{};
        id[0] = static_cast<std::uint8_t>(i);
        id[1] = static_cast<std::uint8_t>(i >> 8);
        id[2] = static_cast<std::uint8_t>(tag);
        id[3] = static_cast<std::uint8_t>(tag >> 8);
        d.sample_ids.push_back(id);
    }
    return d;
}

inline std::vector<Id16> coalition(std::size_t n) {
    std::vector<Id16> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(test_id(static_cast<std::uint32_t>(i)));
    return ids;
}

// A deterministic chain of `blocks` increments over a coalition of n
// partners, with synthetic model hashes.
inline ledger::Chain build_chain(std::size_t n_partners, std::size_t blocks,
                                 std::uint64_t seed) {
    std::vector<Id16> ids = coalition(n_partners);
    model::ModelWeights genesis = model::init_genesis_model(logistic_arch(2), seed);
    ledger::Chain chain;
    chain.blocks.push_back(ledger::make_genesis(genesis, ids, 0));
    Rng rng(seed);
    for (std::size_t i = 1; i <= blocks; ++i) {
        const ledger::Block& head = chain.head();
        ledger::Block b;
        b.index = i;
        b.timestamp = head.timestamp + 1 + static_cast<std::int64_t>(rng.uniform_int(5));
        b.prev_hash = head.block_hash;
        Bytes fake = rng.bytes(40);
        b.model_hash = crypto::sha256(as_view(fake));
        b.contributor = ids[rng.uniform_int(ids.size())];
        b.strengths = ledger::update_strengths(head.strengths, b.contributor,
                                               16 + rng.uniform_int(64));
        b.kind = ledger::BlockKind::increment;
        b.block_hash = ledger::compute_block_hash(b);
        ledger::append_block(chain, b);
    }
    return chain;
}

}  // namespace tt

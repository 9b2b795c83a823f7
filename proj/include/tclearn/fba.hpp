#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/ledger.hpp"
#include "tclearn/model.hpp"

namespace tclearn::fba {

// Minimum agreeing validators out of k: at least two thirds.
std::size_t quorum(std::size_t k);

struct ValidatorSet {
    std::vector<Id16> members;
    std::uint64_t selection_seed = 0;
};

// Draws k distinct partners without replacement, each draw weighted by its
// strength relative to the remaining pool. Partners in `exclude` (e.g. the
// round's proposer) never enter the draw.
ValidatorSet select_validators(const ledger::StrengthTable& strengths, std::size_t k,
                               std::uint64_t seed, const std::vector<Id16>& exclude = {});

enum class VoteSubject : std::uint8_t { model_quality = 0, block_integrity = 1 };
enum class Verdict : std::uint8_t { accept = 0, reject = 1 };

enum class VoteReason : std::uint8_t {
    ok = 0,
    perf_below_threshold,
    hash_mismatch,
    eval_failure,
    bad_index,
    bad_prev_hash,
    bad_timestamp,
    bad_model_hash,
    bad_block_hash,
    bad_strengths,
    bad_contributor,
    bad_kind,
};

std::string vote_reason_name(VoteReason r);

struct Vote {
    Id16 voter{};
    VoteSubject subject = VoteSubject::model_quality;
    Verdict verdict = Verdict::accept;
    VoteReason reason = VoteReason::ok;
    double global_metric = 0.0;
    double local_metric = 0.0;
    Bytes signature;

    Bytes signing_payload() const;
};

Vote sign_vote(Vote v, ByteView sign_seed);
bool verify_vote(const Vote& v, ByteView public_key);

// Sample-count-weighted mean of the global and local results.
double merge_eval(const model::EvalReport& global, const model::EvalReport& local);

// The quality rule: accept iff the merged metric reaches lambda times the
// previous performance (non-strict). A candidate whose hash differs from
// the one announced to every validator is rejected outright.
Vote check_candidate(const model::ModelWeights& candidate, double prev_perf,
                     const model::Dataset& global_test, const model::Dataset& local_test,
                     double lambda, const Hash32& expected_model_hash, const Id16& voter,
                     ByteView sign_seed);

Vote verify_block_integrity(const ledger::Block& candidate_block, const ledger::Chain& chain,
                            const Hash32& expected_model_hash,
                            const ledger::StrengthTable& expected_strengths,
                            const Id16& expected_contributor, const Id16& voter,
                            ByteView sign_seed);

ledger::Block build_increment_block(const ledger::Chain& chain, const Hash32& model_hash,
                                    const Id16& contributor,
                                    const ledger::StrengthTable& strengths,
                                    std::int64_t timestamp);

// How a validator behaves when voting. Policies other than honest model
// byzantine members; forge_signature produces votes that fail verification
// and must be discarded as abstentions.
enum class VoterPolicy : std::uint8_t {
    honest = 0,
    always_accept,
    always_reject,
    random_vote,
    forge_signature,
};

struct ValidatorContext {
    Id16 id{};
    Bytes sign_seed;
    Bytes verify_key;
    const model::Dataset* local_test = nullptr;
    VoterPolicy policy = VoterPolicy::honest;
};

Vote apply_policy(Vote honest_vote, VoterPolicy policy, std::uint64_t policy_seed,
                  ByteView sign_seed);

struct Tally {
    std::size_t accepts = 0;
    std::size_t rejects = 0;
    std::size_t counted = 0;  // votes with valid signatures
};

Tally tally_votes(const std::vector<Vote>& votes,
                  const std::map<Id16, Bytes>& verify_keys);

// True when a quorum of counted reject votes pins the block on a model-hash
// substitution: the validated candidate is intact and only the general is at
// fault, so the round rotates the general instead of rejecting.
bool quorum_blames_equivocation(const std::vector<Vote>& votes,
                                const std::map<Id16, Bytes>& verify_keys, std::size_t quorum);

struct ConsensusRound {
    model::ModelWeights candidate;
    Id16 proposer{};
    ValidatorSet validators;
    double lambda = 0.95;
    std::size_t max_rotations = 3;
    std::uint64_t batch_size = 0;
    double prev_perf = 0.0;
    std::int64_t timestamp = 0;
};

enum class DecisionKind : std::uint8_t {
    committed = 0,
    rejected_model,
    rejected_block,
    aborted_max_rotations,
};

std::string decision_kind_name(DecisionKind k);

struct Decision {
    DecisionKind kind = DecisionKind::rejected_model;
    std::optional<ledger::Block> block;
    double merged_perf = 0.0;  // mean merged metric over counted quality votes
    std::size_t rotations = 0;
    std::vector<Vote> quality_votes;
    std::vector<Vote> integrity_votes;  // final general's round
    std::vector<Id16> generals_tried;
    std::string reason;
};

// One full consensus round: quality vote by every validator, then the
// general-led block integrity vote with rotation on a hung quorum. Commits
// append to `chain`. Deterministic given the seed.
Decision run_round(const ConsensusRound& round, ledger::Chain& chain,
                   const model::Dataset& global_test,
                   const std::vector<ValidatorContext>& validators, std::uint64_t rng_seed,
                   bool equivocating_general = false);

}  // namespace tclearn::fba

#include "tclearn/fba.hpp"

#include <algorithm>

#include "tclearn/crypto.hpp"
#include "tclearn/encoding.hpp"
#include "tclearn/rng.hpp"

namespace tclearn::fba {

std::size_t quorum(std::size_t k) { return (2 * k + 2) / 3; }

std::string vote_reason_name(VoteReason r) {
    switch (r) {
        case VoteReason::ok: return "ok";
        case VoteReason::perf_below_threshold: return "perf_below_threshold";
        case VoteReason::hash_mismatch: return "hash_mismatch";
        case VoteReason::eval_failure: return "eval_failure";
        case VoteReason::bad_index: return "bad_index";
        case VoteReason::bad_prev_hash: return "bad_prev_hash";
        case VoteReason::bad_timestamp: return "bad_timestamp";
        case VoteReason::bad_model_hash: return "bad_model_hash";
        case VoteReason::bad_block_hash: return "bad_block_hash";
        case VoteReason::bad_strengths: return "bad_strengths";
        case VoteReason::bad_contributor: return "bad_contributor";
        case VoteReason::bad_kind: return "bad_kind";
    }
    return "unknown";
}

std::string decision_kind_name(DecisionKind k) {
    switch (k) {
        case DecisionKind::committed: return "committed";
        case DecisionKind::rejected_model: return "rejected_model";
        case DecisionKind::rejected_block: return "rejected_block";
        case DecisionKind::aborted_max_rotations: return "aborted_max_rotations";
    }
    return "unknown";
}

ValidatorSet select_validators(const ledger::StrengthTable& strengths, std::size_t k,
                               std::uint64_t seed, const std::vector<Id16>& exclude) {
    struct Candidate {
        Id16 id;
        double weight;
    };
    std::vector<Candidate> pool;
    for (const ledger::StrengthEntry& e : strengths.entries) {
        if (std::find(exclude.begin(), exclude.end(), e.partner) != exclude.end()) continue;
        pool.push_back({e.partner, e.strength});
    }
    if (k < 1 || k > pool.size())
        throw ValidationError("validator count k out of range for the eligible coalition");

    ValidatorSet set;
    set.selection_seed = seed;
    Rng rng(derive_seed(seed, "validator-selection"));
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0.0;
        for (const Candidate& c : pool) total += c.weight;
        double r = rng.uniform() * total;
        std::size_t pick = pool.size() - 1;
        double cum = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            cum += pool[i].weight;
            if (r < cum) {
                pick = i;
                break;
            }
        }
        set.members.push_back(pool[pick].id);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return set;
}

Bytes Vote::signing_payload() const {
    CanonicalWriter w;
    w.raw(as_view(voter));
    w.u8(static_cast<std::uint8_t>(subject));
    w.u8(static_cast<std::uint8_t>(verdict));
    w.u8(static_cast<std::uint8_t>(reason));
    w.f64(global_metric);
    w.f64(local_metric);
    return w.take();
}

Vote sign_vote(Vote v, ByteView sign_seed) {
    v.signature = crypto::sign(as_view(v.signing_payload()), sign_seed);
    return v;
}

bool verify_vote(const Vote& v, ByteView public_key) {
    return crypto::verify(as_view(v.signing_payload()), as_view(v.signature), public_key);
}

double merge_eval(const model::EvalReport& global, const model::EvalReport& local) {
    double total = static_cast<double>(global.sample_count + local.sample_count);
    if (total == 0.0) return 0.0;
    return (global.metric * static_cast<double>(global.sample_count) +
            local.metric * static_cast<double>(local.sample_count)) /
           total;
}

Vote check_candidate(const model::ModelWeights& candidate, double prev_perf,
                     const model::Dataset& global_test, const model::Dataset& local_test,
                     double lambda, const Hash32& expected_model_hash, const Id16& voter,
                     ByteView sign_seed) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda outside [0, 1]");
    Vote v;
    v.voter = voter;
    v.subject = VoteSubject::model_quality;

    if (candidate.hash() != expected_model_hash) {
        // Every validator must be judging the identical model.
        v.verdict = Verdict::reject;
        v.reason = VoteReason::hash_mismatch;
        return sign_vote(std::move(v), sign_seed);
    }
    try {
        model::EvalReport g = model::evaluate(candidate, global_test, model::DatasetKind::global);
        model::EvalReport l = model::evaluate(candidate, local_test, model::DatasetKind::local);
        v.global_metric = g.metric;
        v.local_metric = l.metric;
        double merged = merge_eval(g, l);
        if (merged >= lambda * prev_perf) {
            v.verdict = Verdict::accept;
            v.reason = VoteReason::ok;
        } else {
            v.verdict = Verdict::reject;
            v.reason = VoteReason::perf_below_threshold;
        }
    } catch (const Error&) {
        v.verdict = Verdict::reject;
        v.reason = VoteReason::eval_failure;
    }
    return sign_vote(std::move(v), sign_seed);
}

namespace {

bool same_strengths(const ledger::StrengthTable& a, const ledger::StrengthTable& b) {
    if (a.total_samples != b.total_samples || a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].partner != b.entries[i].partner) return false;
        if (a.entries[i].samples != b.entries[i].samples) return false;
        if (a.entries[i].strength != b.entries[i].strength) return false;
    }
    return true;
}

}  // namespace

Vote verify_block_integrity(const ledger::Block& candidate_block, const ledger::Chain& chain,
                            const Hash32& expected_model_hash,
                            const ledger::StrengthTable& expected_strengths,
                            const Id16& expected_contributor, const Id16& voter,
                            ByteView sign_seed) {
    Vote v;
    v.voter = voter;
    v.subject = VoteSubject::block_integrity;
    VoteReason reason = VoteReason::ok;

    const ledger::Block& b = candidate_block;
    if (b.index != chain.size()) {
        reason = VoteReason::bad_index;
    } else if (b.prev_hash != (chain.empty() ? zero_hash32() : chain.head().block_hash)) {
        reason = VoteReason::bad_prev_hash;
    } else if (!chain.empty() && b.timestamp < chain.head().timestamp) {
        reason = VoteReason::bad_timestamp;
    } else if (b.model_hash != expected_model_hash) {
        reason = VoteReason::bad_model_hash;
    } else if (b.contributor != expected_contributor) {
        reason = VoteReason::bad_contributor;
    } else if (b.kind != ledger::BlockKind::increment || b.rollback_target.has_value()) {
        reason = VoteReason::bad_kind;
    } else if (!same_strengths(b.strengths, expected_strengths)) {
        reason = VoteReason::bad_strengths;
    } else if (b.block_hash != ledger::compute_block_hash(b)) {
        reason = VoteReason::bad_block_hash;
    }

    v.reason = reason;
    v.verdict = reason == VoteReason::ok ? Verdict::accept : Verdict::reject;
    return sign_vote(std::move(v), sign_seed);
}

ledger::Block build_increment_block(const ledger::Chain& chain, const Hash32& model_hash,
                                    const Id16& contributor,
                                    const ledger::StrengthTable& strengths,
                                    std::int64_t timestamp) {
    ledger::Block b;
    b.index = chain.size();
    b.timestamp = timestamp;
    b.prev_hash = chain.empty() ? zero_hash32() : chain.head().block_hash;
    b.model_hash = model_hash;
    b.contributor = contributor;
    b.strengths = strengths;
    b.kind = ledger::BlockKind::increment;
    b.block_hash = ledger::compute_block_hash(b);
    return b;
}

Vote apply_policy(Vote honest_vote, VoterPolicy policy, std::uint64_t policy_seed,
                  ByteView sign_seed) {
    switch (policy) {
        case VoterPolicy::honest:
            return honest_vote;
        case VoterPolicy::always_accept:
            honest_vote.verdict = Verdict::accept;
            honest_vote.reason = VoteReason::ok;
            return sign_vote(std::move(honest_vote), sign_seed);
        case VoterPolicy::always_reject:
            honest_vote.verdict = Verdict::reject;
            honest_vote.reason = VoteReason::eval_failure;
            return sign_vote(std::move(honest_vote), sign_seed);
        case VoterPolicy::random_vote: {
            Rng rng(derive_seed(policy_seed, "byzantine-random"));
            bool accept = rng.uniform() < 0.5;
            honest_vote.verdict = accept ? Verdict::accept : Verdict::reject;
            honest_vote.reason = accept ? VoteReason::ok : VoteReason::eval_failure;
            return sign_vote(std::move(honest_vote), sign_seed);
        }
        case VoterPolicy::forge_signature:
            if (honest_vote.signature.empty()) honest_vote.signature.resize(64, 0);
            honest_vote.signature[0] ^= 0x5a;
            return honest_vote;
    }
    throw ValidationError("unknown voter policy");
}

Tally tally_votes(const std::vector<Vote>& votes, const std::map<Id16, Bytes>& verify_keys) {
    Tally t;
    for (const Vote& v : votes) {
        auto it = verify_keys.find(v.voter);
        if (it == verify_keys.end()) continue;
        if (!verify_vote(v, as_view(it->second))) continue;  // abstention
        ++t.counted;
        if (v.verdict == Verdict::accept)
            ++t.accepts;
        else
            ++t.rejects;
    }
    return t;
}

bool quorum_blames_equivocation(const std::vector<Vote>& votes,
                                const std::map<Id16, Bytes>& verify_keys, std::size_t quorum) {
    std::size_t hash_rejects = 0;
    for (const Vote& v : votes) {
        auto it = verify_keys.find(v.voter);
        if (it == verify_keys.end() || !verify_vote(v, as_view(it->second))) continue;
        if (v.verdict == Verdict::reject && v.reason == VoteReason::bad_model_hash)
            ++hash_rejects;
    }
    return hash_rejects >= quorum;
}

Decision run_round(const ConsensusRound& round, ledger::Chain& chain,
                   const model::Dataset& global_test,
                   const std::vector<ValidatorContext>& validators, std::uint64_t rng_seed,
                   bool equivocating_general) {
    if (validators.size() != round.validators.members.size())
        throw ValidationError("validator contexts do not match the validator set");
    const std::size_t k = validators.size();
    const std::size_t q = quorum(k);
    const Hash32 expected_hash = round.candidate.hash();

    std::map<Id16, Bytes> keys;
    for (const ValidatorContext& v : validators) keys[v.id] = v.verify_key;

    Decision decision;

    // Phase 1: every validator judges the candidate model.
    for (std::size_t i = 0; i < k; ++i) {
        const ValidatorContext& v = validators[i];
        if (!v.local_test) throw ValidationError("validator missing local test set");
        Vote honest = check_candidate(round.candidate, round.prev_perf, global_test,
                                      *v.local_test, round.lambda, expected_hash, v.id,
                                      as_view(v.sign_seed));
        decision.quality_votes.push_back(apply_policy(std::move(honest), v.policy,
                                                      derive_seed(rng_seed, "policy-q", i),
                                                      as_view(v.sign_seed)));
    }
    {
        Tally t = tally_votes(decision.quality_votes, keys);
        double perf_sum = 0.0;
        std::size_t perf_n = 0;
        for (const Vote& v : decision.quality_votes) {
            auto it = keys.find(v.voter);
            if (it == keys.end() || !verify_vote(v, as_view(it->second))) continue;
            model::EvalReport g{v.global_metric, global_test.size(), model::DatasetKind::global};
            // weight by the voter's local sample count
            std::uint64_t local_n = 0;
            for (const ValidatorContext& c : validators)
                if (c.id == v.voter && c.local_test) local_n = c.local_test->size();
            model::EvalReport l{v.local_metric, local_n, model::DatasetKind::local};
            perf_sum += merge_eval(g, l);
            ++perf_n;
        }
        decision.merged_perf = perf_n > 0 ? perf_sum / static_cast<double>(perf_n) : 0.0;
        if (t.rejects >= q) {
            decision.kind = DecisionKind::rejected_model;
            decision.reason = "model quality rejected by quorum";
            return decision;
        }
    }

    // Phase 2: general-led block proposal with rotation.
    ledger::StrengthTable next_strengths =
        ledger::update_strengths(chain.head().strengths, round.proposer, round.batch_size);
    Rng general_rng(derive_seed(rng_seed, "general-pick"));
    std::vector<Id16> remaining = round.validators.members;
    std::size_t rotation_count = 0;

    while (true) {
        Id16 general = remaining[static_cast<std::size_t>(general_rng.uniform_int(remaining.size()))];
        decision.generals_tried.push_back(general);
        remaining.erase(std::find(remaining.begin(), remaining.end(), general));

        Hash32 proposed_hash = expected_hash;
        if (equivocating_general && decision.generals_tried.size() == 1) {
            proposed_hash[0] ^= 0xff;  // equivocation: block references a different model
        }
        ledger::Block block = build_increment_block(chain, proposed_hash, round.proposer,
                                                    next_strengths, round.timestamp);

        decision.integrity_votes.clear();
        for (std::size_t i = 0; i < k; ++i) {
            const ValidatorContext& v = validators[i];
            Vote honest = verify_block_integrity(block, chain, expected_hash, next_strengths,
                                                 round.proposer, v.id, as_view(v.sign_seed));
            decision.integrity_votes.push_back(
                apply_policy(std::move(honest), v.policy,
                             derive_seed(rng_seed, "policy-b", rotation_count * k + i),
                             as_view(v.sign_seed)));
        }
        Tally t = tally_votes(decision.integrity_votes, keys);
        if (t.accepts >= q) {
            ledger::append_block(chain, block);
            decision.kind = DecisionKind::committed;
            decision.block = std::move(block);
            decision.rotations = rotation_count;
            decision.reason = "committed";
            return decision;
        }
        if (t.rejects >= q &&
            !quorum_blames_equivocation(decision.integrity_votes, keys, q)) {
            decision.kind = DecisionKind::rejected_block;
            decision.rotations = rotation_count;
            decision.reason = "block integrity rejected by quorum";
            return decision;
        }
        // no accept quorum: a fresh general rebuilds the block
        ++rotation_count;
        if (rotation_count > round.max_rotations || remaining.empty()) {
            decision.kind = DecisionKind::aborted_max_rotations;
            decision.rotations = rotation_count - 1;
            decision.reason = "no quorum after maximum general rotations";
            return decision;
        }
    }
}

}  // namespace tclearn::fba

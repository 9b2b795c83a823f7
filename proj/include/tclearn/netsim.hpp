#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/crypto.hpp"
#include "tclearn/fba.hpp"
#include "tclearn/ledger.hpp"
#include "tclearn/model.hpp"
#include "tclearn/paillier.hpp"
#include "tclearn/vault.hpp"

namespace tclearn::netsim {

enum class Role : std::uint8_t { partner = 0, supervisor = 1 };

struct NodeId {
    Role role = Role::partner;
    Id16 id{};

    bool operator==(const NodeId&) const = default;
};

enum class MsgKind : std::uint8_t {
    gradient_submit = 0,
    model_fetch = 1,
    vote = 2,
    block_proposal = 3,
    sync = 4,
    decrypt_request = 5,
    decrypt_reply = 6,
};

std::string msg_kind_name(MsgKind k);

struct Message {
    NodeId from;
    NodeId to;
    MsgKind kind = MsgKind::sync;
    Bytes payload;
    std::int64_t sim_time = 0;
};

// Deterministic delivery: ordered by (sim_time, insertion seq), so messages
// scheduled for the same instant arrive first-in first-out.
class EventQueue {
  public:
    void push(Message m);
    Message pop();  // throws ValidationError when empty
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }

  private:
    struct Item {
        std::int64_t time;
        std::uint64_t seq;
        Message msg;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };
    std::priority_queue<Item, std::vector<Item>, Later> heap_;
    std::uint64_t next_seq_ = 0;
};

enum class ByzantinePolicy : std::uint8_t { always_accept = 0, always_reject = 1, random_vote = 2 };

std::string byzantine_policy_name(ByzantinePolicy p);
ByzantinePolicy byzantine_policy_from_name(const std::string& name);

struct FaultModel {
    std::set<std::uint32_t> corrupt_data_partners;  // train on label-flipped data
    double label_flip_rate = 1.0;
    std::map<std::uint32_t, ByzantinePolicy> byzantine_validators;
    bool equivocating_general = false;
    std::set<std::uint32_t> leaking_partners;  // emit a leak event after fetch
    // Re-submission of an already-contributed batch, for duplicate-data
    // rejection scenarios.
    std::optional<std::uint32_t> duplicate_data_partner;
    std::optional<std::uint32_t> duplicate_data_round;

    bool empty() const;
};

enum class Mode : std::uint8_t { A = 0, B = 1, C = 2 };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct ScenarioConfig {
    std::uint32_t partners = 4;
    std::uint32_t rounds = 10;
    Mode mode = Mode::A;
    double lambda = 0.95;
    std::uint32_t validators_k = 0;  // 0 selects max(3, ceil(N/2)), capped at N-1
    std::uint32_t max_rotations = 3;
    std::uint64_t min_batch_size = 16;
    std::uint64_t batch_size = 40;
    std::uint32_t epochs = 5;
    double learning_rate = 0.3;
    std::uint64_t seed = 1;
    std::uint64_t samples_per_partner = 0;  // 0 = sized from rounds and batch size
    std::uint64_t global_test_samples = 200;
    double local_test_fraction = 0.1;
    double class_separation = 1.5;
    std::uint32_t feature_dim = 2;
    std::vector<std::uint32_t> hidden_layers;  // empty = single-layer classifier
    std::uint32_t he_bits = 512;
    FaultModel faults;

    std::uint32_t effective_validators() const;
    std::uint64_t effective_samples_per_partner() const;
    void validate() const;

    static ScenarioConfig parse(std::istream& in);
    static ScenarioConfig load_file(const std::filesystem::path& path);
    std::string dump() const;
};

enum class RoundResult : std::uint8_t {
    committed = 0,
    rejected_model,
    rejected_block,
    aborted_max_rotations,
    refused_duplicate_data,
    refused_batch,
};

std::string round_result_name(RoundResult r);

struct RoundOutcome {
    std::uint32_t round = 0;
    Id16 contributor{};
    RoundResult result = RoundResult::committed;
    std::string reason;
    double merged_perf = 0.0;
    std::size_t rotations = 0;
    std::optional<std::uint64_t> block_index;
    std::vector<Id16> conflicts;  // duplicate sample ids, when refused
};

struct LeakEvent {
    Id16 partner{};
    Hash32 model_hash{};
    std::int64_t time = 0;
};

struct PredictionDemo {
    Id16 partner{};
    double score = 0.0;            // decoded from the supervisor-decrypted result
    double plaintext_score = 0.0;  // same dot product in the clear
    bool refused = false;
};

struct ScenarioReport {
    std::string config_echo;
    std::vector<RoundOutcome> rounds;
    ledger::Chain chain;
    std::vector<vault::AuditRecord> journal;
    double genesis_accuracy = 0.0;
    double final_accuracy = 0.0;
    std::vector<LeakEvent> leaks;
    std::optional<PredictionDemo> prediction;

    std::string rounds_table() const;
    std::string summary() const;
};

// Single-event-loop host for the coalition: partner nodes, the supervisor
// (vault, keys, round orchestration), and the FBA choreography as messages.
// Every run is a pure function of its ScenarioConfig.
class Simulation {
  public:
    explicit Simulation(ScenarioConfig cfg);

    void setup();  // datasets, identities, genesis block, vault
    RoundOutcome run_round();
    ScenarioReport report();
    ScenarioReport run_all();  // setup + all configured rounds + report

    // Message-level access.
    void inject(Message m);
    Message deliver_next();
    bool queue_empty() const { return queue_.empty(); }
    std::int64_t clock() const { return clock_; }
    const std::vector<Message>& trace() const { return trace_; }

    // Introspection.
    const ScenarioConfig& config() const { return cfg_; }
    const ledger::Chain& chain() const { return chain_; }
    const ledger::Chain& partner_chain(std::uint32_t p) const;
    vault::Vault& vault() { return vault_; }
    const vault::Vault& vault() const { return vault_; }
    const model::ModelWeights& current_model() const { return current_model_; }
    const model::Dataset& global_test() const { return global_test_; }
    const std::vector<Id16>& partner_ids() const { return partner_ids_; }
    const Id16& supervisor_id() const { return supervisor_id_; }
    Bytes partner_state_bytes(std::uint32_t p) const;  // retained model material
    bool partner_holds_he_private(std::uint32_t p) const;
    const model::Dataset& partner_local_test(std::uint32_t p) const;
    // The batch the partner would train on next, faults applied, without
    // consuming it.
    model::Dataset peek_training_batch(std::uint32_t p, std::uint32_t round) const;
    // A partner's c-th contribution batch, before any fault is applied.
    model::Dataset partner_chunk(std::uint32_t p, std::uint64_t chunk_index) const;
    std::uint32_t rounds_completed() const { return rounds_completed_; }
    const std::vector<RoundOutcome>& outcomes() const { return outcomes_; }
    double previous_performance() const { return prev_perf_; }
    const std::map<std::uint64_t, double>& performance_history() const { return perf_history_; }

    // Encrypted-prediction protocol (mode C): partner computes an encrypted
    // score and the supervisor decrypts it on request.
    PredictionDemo run_prediction_demo(std::uint32_t partner_index);

    // Direct supervisor operations, also used by the CLI.
    ledger::Block rollback_to(std::uint64_t target_index, const Id16& authorizer);

    // Stored-state round trip for `run --resume` and `rollback`.
    void save_state(const std::filesystem::path& out_dir) const;
    static Simulation load_state(const std::filesystem::path& out_dir);

    static Id16 partner_id_for(std::uint64_t seed, std::uint32_t index);
    static Id16 supervisor_id_for(std::uint64_t seed);

  private:
    struct PartnerState {
        Id16 id{};
        crypto::IdentityKeyPair keys;
        model::Dataset train_pool;
        model::Dataset local_test;
        std::uint32_t chunks_used = 0;
        ledger::Chain chain_replica;
        Bytes retained_plain_model;                           // modes A and B
        std::vector<crypto::HECiphertext> retained_encrypted_model;  // mode C
    };

    // Per-round orchestration state held by the supervisor.
    struct RoundContext {
        std::uint32_t round = 0;
        std::uint32_t contributor_index = 0;
        Id16 contributor{};
        std::vector<Id16> batch_ids;
        std::uint64_t batch_size = 0;
        model::ModelWeights candidate;
        Hash32 candidate_hash{};
        ledger::StrengthTable next_strengths;
        fba::ValidatorSet validators;
        std::vector<fba::Vote> quality_votes;
        std::vector<fba::Vote> integrity_votes;
        std::vector<Id16> generals_tried;
        std::size_t rotation_count = 0;
        ledger::Block proposed_block;
        double merged_perf = 0.0;
        RoundOutcome outcome;
        bool done = false;
    };

    void dispatch(const Message& m);
    void handle_supervisor(const Message& m);
    void handle_partner(PartnerState& p, const Message& m);

    void supervisor_on_model_fetch(const Message& m);
    void supervisor_on_gradient(const Message& m);
    void supervisor_on_vote(const Message& m);
    void supervisor_on_built_block(const Message& m);
    void supervisor_on_decrypt_request(const Message& m);
    void partner_on_fetch_reply(PartnerState& p, const Message& m);
    void partner_on_quality_request(PartnerState& p, const Message& m);
    void partner_on_build_order(PartnerState& p, const Message& m);
    void partner_on_integrity_request(PartnerState& p, const Message& m);
    void partner_on_sync(PartnerState& p, const Message& m);

    void start_quality_phase();
    void order_block_build();
    void finish_round(RoundResult result, std::string reason);
    void commit_block(const ledger::Block& block);

    void send(const NodeId& from, const NodeId& to, MsgKind kind, Bytes payload);
    void drain();

    PartnerState& partner_by_id(const Id16& id);
    std::uint32_t partner_index(const Id16& id) const;
    fba::VoterPolicy policy_for(std::uint32_t partner_index) const;
    model::Dataset next_training_chunk(PartnerState& p, std::uint32_t round) const;
    NodeId supervisor_node() const { return {Role::supervisor, supervisor_id_}; }
    NodeId partner_node(const Id16& id) const { return {Role::partner, id}; }

    ScenarioConfig cfg_;
    bool ready_ = false;

    std::vector<PartnerState> partners_;
    std::vector<Id16> partner_ids_;
    Id16 supervisor_id_{};
    crypto::IdentityKeyPair supervisor_keys_;

    model::Dataset global_test_;
    ledger::Chain chain_;
    vault::Vault vault_;
    model::ModelWeights current_model_;
    double prev_perf_ = 0.0;
    std::map<std::uint64_t, double> perf_history_;  // block index -> merged perf
    double genesis_accuracy_ = 0.0;

    std::optional<crypto::HEKeyPair> he_keys_;  // supervisor-only

    EventQueue queue_;
    std::int64_t clock_ = 0;
    std::vector<Message> trace_;
    std::uint64_t envelope_counter_ = 0;

    std::uint32_t rounds_completed_ = 0;
    std::vector<RoundOutcome> outcomes_;
    std::vector<LeakEvent> leaks_;
    std::optional<PredictionDemo> prediction_;
    std::optional<RoundContext> round_;
};

ScenarioReport run_scenario(const ScenarioConfig& cfg);

// Writes the report artifacts (chain dump, audit journal, per-round metrics,
// summary) plus resumable state into out_dir.
void write_scenario_outputs(Simulation& sim, const std::filesystem::path& out_dir);

}  // namespace tclearn::netsim

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tclearn/encoding.hpp"
#include "tclearn/hash.hpp"
#include "tclearn/netsim.hpp"

namespace tclearn::netsim {

namespace {

constexpr std::uint8_t kFetchRequest = 0;
constexpr std::uint8_t kFetchReply = 1;
constexpr std::uint8_t kPurposeTrain = 0;
constexpr std::uint8_t kPurposePredict = 1;

constexpr std::uint8_t kProposalQuality = 0;
constexpr std::uint8_t kProposalBuildOrder = 1;
constexpr std::uint8_t kProposalBuiltBlock = 2;
constexpr std::uint8_t kProposalIntegrity = 3;
constexpr std::uint8_t kProposalCommitOrder = 4;

constexpr std::size_t kDrainLimit = 1000000;

Bytes encode_vote(const fba::Vote& v, std::uint32_t round) {
    CanonicalWriter w;
    w.raw(as_view(v.voter));
    w.u8(static_cast<std::uint8_t>(v.subject));
    w.u8(static_cast<std::uint8_t>(v.verdict));
    w.u8(static_cast<std::uint8_t>(v.reason));
    w.f64(v.global_metric);
    w.f64(v.local_metric);
    w.bytes(as_view(v.signature));
    w.u32(round);
    return w.take();
}

fba::Vote decode_vote(ByteView payload) {
    CanonicalReader r(payload);
    fba::Vote v;
    v.voter = r.fixed<16>();
    v.subject = static_cast<fba::VoteSubject>(r.u8());
    v.verdict = static_cast<fba::Verdict>(r.u8());
    v.reason = static_cast<fba::VoteReason>(r.u8());
    v.global_metric = r.f64();
    v.local_metric = r.f64();
    v.signature = r.bytes();
    r.u32();  // round echo, unused on receive
    return v;
}

}  // namespace

void EventQueue::push(Message m) {
    heap_.push(Item{m.sim_time, next_seq_++, std::move(m)});
}

Message EventQueue::pop() {
    if (heap_.empty()) throw ValidationError("event queue is empty");
    Message m = heap_.top().msg;
    heap_.pop();
    return m;
}

Id16 Simulation::partner_id_for(std::uint64_t seed, std::uint32_t index) {
    CanonicalWriter w;
    w.u64(seed);
    w.str("partner-id");
    w.u64(index);
    Hash32 h = crypto::sha256(as_view(w.data()));
    Id16 id{};
    std::copy_n(h.begin(), id.size(), id.begin());
    return id;
}

Id16 Simulation::supervisor_id_for(std::uint64_t seed) {
    CanonicalWriter w;
    w.u64(seed);
    w.str("supervisor-id");
    Hash32 h = crypto::sha256(as_view(w.data()));
    Id16 id{};
    std::copy_n(h.begin(), id.size(), id.begin());
    return id;
}

Simulation::Simulation(ScenarioConfig cfg)
    : cfg_(std::move(cfg)),
      vault_(Rng(derive_seed(cfg_.seed, "vault-key")).bytes(32), vault::AccessPolicy{}) {
    cfg_.validate();
}

void Simulation::setup() {
    if (ready_) return;

    supervisor_id_ = supervisor_id_for(cfg_.seed);
    supervisor_keys_ = crypto::identity_from_seed(derive_seed(cfg_.seed, "supervisor-keys"));

    // Synthetic task: one master draw carved into the global test set and
    // per-partner pools.
    std::uint64_t per_partner = cfg_.effective_samples_per_partner();
    std::uint64_t total = cfg_.global_test_samples + cfg_.partners * per_partner;
    model::Dataset master = model::make_blobs(total, cfg_.feature_dim, cfg_.class_separation,
                                              derive_seed(cfg_.seed, "data"));
    std::vector<std::size_t> idx(cfg_.global_test_samples);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    global_test_ = master.subset(idx);

    vault::AccessPolicy policy;
    for (std::uint32_t p = 0; p < cfg_.partners; ++p) {
        PartnerState st;
        st.id = partner_id_for(cfg_.seed, p);
        st.keys = crypto::identity_from_seed(derive_seed(cfg_.seed, "partner-keys", p));
        std::vector<std::size_t> rows(per_partner);
        std::iota(rows.begin(), rows.end(),
                  static_cast<std::size_t>(cfg_.global_test_samples + p * per_partner));
        model::Dataset pool = master.subset(rows);
        auto [train, local] =
            model::split_local_test(pool, cfg_.local_test_fraction,
                                    derive_seed(cfg_.seed, "local-split", p));
        st.train_pool = std::move(train);
        st.local_test = std::move(local);
        policy.allow(st.id);
        partner_ids_.push_back(st.id);
        partners_.push_back(std::move(st));
    }
    policy.allow_rollback(supervisor_id_);
    vault_.policy() = policy;

    // Shared architecture pinned at genesis.
    model::ArchDescriptor arch;
    arch.layer_sizes.push_back(cfg_.feature_dim);
    for (std::uint32_t h : cfg_.hidden_layers) arch.layer_sizes.push_back(h);
    arch.layer_sizes.push_back(1);
    arch.activation = model::Activation::relu;
    arch.loss = model::Loss::cross_entropy;

    current_model_ = model::init_genesis_model(arch, derive_seed(cfg_.seed, "genesis"));
    if (cfg_.mode == Mode::C) {
        he_keys_ = crypto::he_keygen(cfg_.he_bits, derive_seed(cfg_.seed, "he-keys"));
        vault_.set_he_key(*he_keys_);
        // snap genesis onto the fixed-point grid so every certified model in
        // mode C is exactly representable by its encrypted storage
        current_model_.weights =
            crypto::dequantize_weights(crypto::quantize_weights(current_model_.weights));
    }
    current_model_.version = 0;

    ledger::Block genesis = ledger::make_genesis(current_model_, partner_ids_, 0);
    chain_.blocks.push_back(genesis);
    for (PartnerState& p : partners_) p.chain_replica = chain_;

    vault::EncryptionMode store_mode = cfg_.mode == Mode::A   ? vault::EncryptionMode::none
                                       : cfg_.mode == Mode::B ? vault::EncryptionMode::symmetric
                                                              : vault::EncryptionMode::homomorphic;
    vault_.store_model(current_model_, 0, store_mode, 0, supervisor_id_);

    genesis_accuracy_ = model::evaluate(current_model_, global_test_).metric;
    prev_perf_ = genesis_accuracy_;
    perf_history_[0] = genesis_accuracy_;
    ready_ = true;
}

Simulation::PartnerState& Simulation::partner_by_id(const Id16& id) {
    for (PartnerState& p : partners_)
        if (p.id == id) return p;
    throw ValidationError("unknown partner node");
}

std::uint32_t Simulation::partner_index(const Id16& id) const {
    for (std::uint32_t i = 0; i < partner_ids_.size(); ++i)
        if (partner_ids_[i] == id) return i;
    throw ValidationError("unknown partner id");
}

fba::VoterPolicy Simulation::policy_for(std::uint32_t partner_index) const {
    auto it = cfg_.faults.byzantine_validators.find(partner_index);
    if (it == cfg_.faults.byzantine_validators.end()) return fba::VoterPolicy::honest;
    switch (it->second) {
        case ByzantinePolicy::always_accept: return fba::VoterPolicy::always_accept;
        case ByzantinePolicy::always_reject: return fba::VoterPolicy::always_reject;
        case ByzantinePolicy::random_vote: return fba::VoterPolicy::random_vote;
    }
    return fba::VoterPolicy::honest;
}

const ledger::Chain& Simulation::partner_chain(std::uint32_t p) const {
    return partners_.at(p).chain_replica;
}

Bytes Simulation::partner_state_bytes(std::uint32_t p) const {
    const PartnerState& st = partners_.at(p);
    Bytes out = st.retained_plain_model;
    if (!st.retained_encrypted_model.empty()) {
        Bytes enc = crypto::serialize_ciphertext_vector(st.retained_encrypted_model);
        out.insert(out.end(), enc.begin(), enc.end());
    }
    return out;
}

bool Simulation::partner_holds_he_private(std::uint32_t) const {
    // HE private key material lives only in the supervisor's vault state.
    return false;
}

void Simulation::send(const NodeId& from, const NodeId& to, MsgKind kind, Bytes payload) {
    Message m;
    m.from = from;
    m.to = to;
    m.kind = kind;
    m.payload = std::move(payload);
    m.sim_time = clock_ + 1;  // every hop takes one tick
    queue_.push(std::move(m));
}

void Simulation::inject(Message m) { queue_.push(std::move(m)); }

Message Simulation::deliver_next() {
    Message m = queue_.pop();
    clock_ = m.sim_time;
    trace_.push_back(m);
    dispatch(m);
    return m;
}

void Simulation::drain() {
    std::size_t delivered = 0;
    while (!queue_.empty()) {
        deliver_next();
        if (++delivered > kDrainLimit) throw Error("simulation did not quiesce");
    }
}

void Simulation::dispatch(const Message& m) {
    if (m.to.role == Role::supervisor) {
        handle_supervisor(m);
    } else {
        handle_partner(partner_by_id(m.to.id), m);
    }
}

void Simulation::handle_supervisor(const Message& m) {
    switch (m.kind) {
        case MsgKind::model_fetch: supervisor_on_model_fetch(m); return;
        case MsgKind::gradient_submit: supervisor_on_gradient(m); return;
        case MsgKind::vote: supervisor_on_vote(m); return;
        case MsgKind::block_proposal: supervisor_on_built_block(m); return;
        case MsgKind::decrypt_request: supervisor_on_decrypt_request(m); return;
        case MsgKind::sync: {
            CanonicalReader r(as_view(m.payload));
            ledger::Block block = ledger::parse_block(r.str());
            commit_block(block);
            return;
        }
        default: throw ValidationError("unexpected message kind at supervisor");
    }
}

void Simulation::handle_partner(PartnerState& p, const Message& m) {
    switch (m.kind) {
        case MsgKind::model_fetch: partner_on_fetch_reply(p, m); return;
        case MsgKind::block_proposal: {
            CanonicalReader r(as_view(m.payload));
            std::uint8_t subkind = r.u8();
            if (subkind == kProposalQuality) return partner_on_quality_request(p, m);
            if (subkind == kProposalBuildOrder) return partner_on_build_order(p, m);
            if (subkind == kProposalIntegrity) return partner_on_integrity_request(p, m);
            if (subkind == kProposalCommitOrder) {
                CanonicalReader rr(as_view(m.payload));
                rr.u8();
                ledger::Block block = ledger::parse_block(rr.str());
                ledger::append_block(p.chain_replica, block);
                // the general appends and asks the whole consortium to sync
                CanonicalWriter w;
                w.str(ledger::dump_block(block));
                Bytes sync_payload = w.take();
                for (PartnerState& other : partners_)
                    if (!(other.id == p.id))
                        send(partner_node(p.id), partner_node(other.id), MsgKind::sync,
                             sync_payload);
                send(partner_node(p.id), supervisor_node(), MsgKind::sync, sync_payload);
                return;
            }
            throw ValidationError("unexpected block proposal subkind at partner");
        }
        case MsgKind::sync: partner_on_sync(p, m); return;
        case MsgKind::decrypt_reply: {
            // prediction demo: decode the supervisor-decrypted score
            if (!prediction_ || !(prediction_->partner == p.id)) return;
            CanonicalReader r(as_view(m.payload));
            std::uint8_t ok = r.u8();
            if (!ok) {
                prediction_->refused = true;
                return;
            }
            std::uint8_t negative = r.u8();
            crypto::BigInt value = crypto::BigInt::from_bytes(as_view(r.bytes()));
            if (negative) value = value.negated();
            std::int64_t qx_sum = r.i64();
            crypto::BigInt offset_total =
                crypto::BigInt(crypto::kQuantOffset) * crypto::BigInt(qx_sum);
            crypto::BigInt score_fixed = value - offset_total;
            prediction_->score = static_cast<double>(score_fixed.to_i64()) /
                                 std::pow(2.0, 2.0 * crypto::kQuantScaleBits);
            return;
        }
        default: throw ValidationError("unexpected message kind at partner");
    }
}

model::Dataset Simulation::next_training_chunk(PartnerState& p, std::uint32_t round) const {
    std::uint32_t index = partner_index(p.id);
    bool duplicate = cfg_.faults.duplicate_data_partner &&
                     *cfg_.faults.duplicate_data_partner == index &&
                     cfg_.faults.duplicate_data_round &&
                     *cfg_.faults.duplicate_data_round == round;

    std::uint64_t chunk = duplicate ? 0 : p.chunks_used;
    std::uint64_t start = chunk * cfg_.batch_size;
    if (start + cfg_.batch_size > p.train_pool.size())
        throw ConfigError("partner training pool exhausted");
    std::vector<std::size_t> rows(cfg_.batch_size);
    std::iota(rows.begin(), rows.end(), static_cast<std::size_t>(start));
    model::Dataset batch = p.train_pool.subset(rows);
    if (!duplicate) ++p.chunks_used;

    if (cfg_.faults.corrupt_data_partners.count(index) > 0) {
        Rng rng(derive_seed(derive_seed(cfg_.seed, "round", round), "corrupt"));
        for (double& label : batch.labels)
            if (rng.uniform() < cfg_.faults.label_flip_rate) label = label >= 0.5 ? 0.0 : 1.0;
    }
    return batch;
}

const model::Dataset& Simulation::partner_local_test(std::uint32_t p) const {
    return partners_.at(p).local_test;
}

model::Dataset Simulation::peek_training_batch(std::uint32_t p, std::uint32_t round) const {
    PartnerState copy = partners_.at(p);
    // the copy absorbs the chunk bump; faults apply exactly as in a live round
    return next_training_chunk(copy, round);
}

model::Dataset Simulation::partner_chunk(std::uint32_t p, std::uint64_t chunk_index) const {
    const PartnerState& st = partners_.at(p);
    std::uint64_t start = chunk_index * cfg_.batch_size;
    if (start + cfg_.batch_size > st.train_pool.size())
        throw ConfigError("partner training pool exhausted");
    std::vector<std::size_t> rows(cfg_.batch_size);
    std::iota(rows.begin(), rows.end(), static_cast<std::size_t>(start));
    return st.train_pool.subset(rows);
}

void Simulation::supervisor_on_model_fetch(const Message& m) {
    CanonicalReader r(as_view(m.payload));
    std::uint8_t dir = r.u8();
    if (dir != kFetchRequest) throw ValidationError("supervisor got a fetch reply");
    std::uint8_t purpose = r.u8();
    const Id16 requester = m.from.id;

    Hash32 current_hash = current_model_.hash();
    vault::FetchResult fetch = vault_.fetch_model(requester, current_hash, clock_);
    if (!fetch.allowed) {
        // denial reply: empty content
        CanonicalWriter w;
        w.u8(kFetchReply);
        w.u8(purpose);
        w.u64(current_model_.version);
        w.bytes({});
        send(supervisor_node(), m.from, MsgKind::model_fetch, w.take());
        return;
    }

    Bytes content;
    if (purpose == kPurposePredict) {
        if (cfg_.mode != Mode::C || !he_keys_)
            throw ValidationError("encrypted prediction requires mode C");
        const vault::VaultRecord& rec = vault_.record_of(current_hash);
        CanonicalReader blob(as_view(rec.encrypted_blob));
        blob.bytes();  // skip arch
        content = blob.raw(blob.remaining());
    } else {
        Bytes plaintext = current_model_.canonical_encoding();
        if (cfg_.mode == Mode::A) {
            content = plaintext;
        } else {
            const PartnerState& p = partner_by_id(requester);
            Rng rng(derive_seed(cfg_.seed, "envelope", envelope_counter_++));
            content = crypto::seal_envelope(as_view(plaintext),
                                            as_view(p.keys.box.public_key),
                                            as_view(supervisor_keys_.sign.private_seed), rng)
                          .serialize();
        }
    }
    CanonicalWriter w;
    w.u8(kFetchReply);
    w.u8(purpose);
    w.u64(current_model_.version);
    w.bytes(as_view(content));
    send(supervisor_node(), m.from, MsgKind::model_fetch, w.take());
}

void Simulation::partner_on_fetch_reply(PartnerState& p, const Message& m) {
    CanonicalReader r(as_view(m.payload));
    std::uint8_t dir = r.u8();
    if (dir != kFetchReply) throw ValidationError("partner got a fetch request");
    std::uint8_t purpose = r.u8();
    std::uint64_t version = r.u64();
    Bytes content = r.bytes();
    if (content.empty()) return;  // denied

    if (purpose == kPurposePredict) {
        p.retained_encrypted_model = crypto::parse_ciphertext_vector(as_view(content));
        // compute the encrypted score for the first local test sample
        const model::Dataset& L = p.local_test;
        std::vector<std::int64_t> qx;
        for (std::size_t f = 0; f < L.feature_dim; ++f)
            qx.push_back(crypto::quantize_signed(L.row(0)[f]));
        qx.push_back(crypto::quantize_signed(1.0));  // bias input
        crypto::HECiphertext score =
            crypto::encrypted_linear_predict(p.retained_encrypted_model, qx, he_keys_->pub);
        std::int64_t qx_sum = 0;
        for (std::int64_t v : qx) qx_sum += v;
        CanonicalWriter w;
        w.raw(as_view(score.serialize()));
        w.i64(qx_sum);
        send(partner_node(p.id), supervisor_node(), MsgKind::decrypt_request, w.take());
        return;
    }

    // training fetch
    Bytes model_bytes;
    if (cfg_.mode == Mode::A) {
        model_bytes = content;
    } else {
        crypto::Envelope env = crypto::Envelope::parse(as_view(content));
        model_bytes = crypto::open_envelope(env, as_view(p.keys.box.private_key),
                                            as_view(supervisor_keys_.sign.public_key));
    }
    model::ModelWeights base = model::parse_model(as_view(model_bytes), version);
    if (cfg_.mode != Mode::C) p.retained_plain_model = model_bytes;

    std::uint32_t index = partner_index(p.id);
    if (cfg_.faults.leaking_partners.count(index) > 0)
        leaks_.push_back({p.id, base.hash(), clock_});

    if (!round_ || round_->done || !(round_->contributor == p.id)) return;

    std::uint32_t round = round_->round;
    model::Dataset batch = next_training_chunk(p, round);
    std::uint64_t round_seed = derive_seed(cfg_.seed, "round", round);
    model::GradientUpdate g =
        model::train_local(base, batch, cfg_.epochs, cfg_.learning_rate,
                           derive_seed(round_seed, "train"), cfg_.min_batch_size, p.id);

    CanonicalWriter body;
    body.u32(round);
    body.u64(g.base_version);
    body.u64(g.batch_size);
    body.u32(static_cast<std::uint32_t>(batch.sample_ids.size()));
    for (const Id16& id : batch.sample_ids) body.raw(as_view(id));
    if (cfg_.mode == Mode::C) {
        crypto::QuantizedWeights q = crypto::quantize_weights(g.deltas);
        Rng he_rng(derive_seed(round_seed, "he-grad"));
        std::vector<crypto::HECiphertext> enc = crypto::encrypt_quantized(q, he_keys_->pub, he_rng);
        body.u8(1);
        body.bytes(as_view(crypto::serialize_ciphertext_vector(enc)));
    } else {
        body.u8(0);
        body.u64(g.deltas.size());
        for (double d : g.deltas) body.f64(d);
    }

    CanonicalWriter outer;
    if (cfg_.mode == Mode::A) {
        outer.u8(0);
        outer.bytes(as_view(body.data()));
        outer.bytes(as_view(crypto::sign(as_view(body.data()),
                                         as_view(p.keys.sign.private_seed))));
    } else {
        Rng rng(derive_seed(cfg_.seed, "envelope", envelope_counter_++));
        crypto::Envelope env =
            crypto::seal_envelope(as_view(body.data()),
                                  as_view(supervisor_keys_.box.public_key),
                                  as_view(p.keys.sign.private_seed), rng);
        outer.u8(1);
        outer.bytes(as_view(env.serialize()));
    }
    send(partner_node(p.id), supervisor_node(), MsgKind::gradient_submit, outer.take());
}

void Simulation::supervisor_on_gradient(const Message& m) {
    if (!round_ || round_->done) return;
    RoundContext& ctx = *round_;
    const Id16 contributor = m.from.id;
    const PartnerState& sender = partner_by_id(contributor);

    CanonicalReader outer(as_view(m.payload));
    std::uint8_t wrapped = outer.u8();
    Bytes body_bytes;
    if (wrapped == 0) {
        body_bytes = outer.bytes();
        Bytes sig = outer.bytes();
        if (!crypto::verify(as_view(body_bytes), as_view(sig),
                            as_view(sender.keys.sign.public_key)))
            return finish_round(RoundResult::refused_batch, "gradient signature invalid");
    } else {
        crypto::Envelope env = crypto::Envelope::parse(as_view(outer.bytes()));
        body_bytes = crypto::open_envelope(env, as_view(supervisor_keys_.box.private_key),
                                           as_view(sender.keys.sign.public_key));
    }

    CanonicalReader body(as_view(body_bytes));
    body.u32();  // round echo
    std::uint64_t base_version = body.u64();
    std::uint64_t batch_size = body.u64();
    std::uint32_t id_count = body.u32();
    ctx.batch_ids.clear();
    for (std::uint32_t i = 0; i < id_count; ++i) ctx.batch_ids.push_back(body.fixed<16>());
    ctx.batch_size = batch_size;

    // anonymized-id registry guards against duplicate training data
    std::vector<Id16> conflicts = vault_.id_conflicts(ctx.batch_ids);
    if (!conflicts.empty()) {
        ctx.outcome.conflicts = conflicts;
        return finish_round(RoundResult::refused_duplicate_data,
                            "batch shares sample ids with an earlier committed batch");
    }
    if (batch_size < cfg_.min_batch_size)
        return finish_round(RoundResult::refused_batch, "batch below minimum size");
    if (base_version != current_model_.version)
        return finish_round(RoundResult::refused_batch, "stale gradient base version");

    std::vector<double> deltas;
    std::uint8_t enc_kind = body.u8();
    if (enc_kind == 1) {
        if (!he_keys_) throw ValidationError("encrypted gradients need mode C");
        std::vector<crypto::HECiphertext> enc = crypto::parse_ciphertext_vector(
            as_view(body.bytes()));
        // gradients are confidential material: flag every ciphertext so the
        // decrypt guard refuses them later
        for (const crypto::HECiphertext& c : enc)
            vault_.flag_protected_ciphertext(crypto::sha256(as_view(c.serialize())));
        std::vector<crypto::HECiphertext> agg =
            crypto::encrypted_aggregate({enc}, he_keys_->pub);
        deltas.reserve(agg.size());
        for (const crypto::HECiphertext& c : agg) {
            crypto::BigInt v = crypto::he_decrypt(he_keys_->pub, he_keys_->priv, c);
            deltas.push_back(crypto::dequantize_sum(v, 1));
        }
    } else {
        std::uint64_t n = body.u64();
        deltas.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) deltas.push_back(body.f64());
    }

    model::GradientUpdate g;
    g.base_version = base_version;
    g.batch_size = batch_size;
    g.contributor = contributor;
    g.deltas = std::move(deltas);

    ctx.candidate = model::apply_gradients(current_model_, g);
    ctx.candidate_hash = ctx.candidate.hash();
    ctx.next_strengths =
        ledger::update_strengths(chain_.head().strengths, contributor, batch_size);

    std::uint64_t round_seed = derive_seed(cfg_.seed, "round", ctx.round);
    ctx.validators = fba::select_validators(chain_.head().strengths,
                                            cfg_.effective_validators(),
                                            derive_seed(round_seed, "validators"),
                                            {contributor});
    start_quality_phase();
}

void Simulation::start_quality_phase() {
    RoundContext& ctx = *round_;
    Bytes candidate_plain = ctx.candidate.canonical_encoding();
    for (const Id16& v : ctx.validators.members) {
        Bytes content;
        if (cfg_.mode == Mode::A) {
            content = candidate_plain;
        } else {
            const PartnerState& p = partner_by_id(v);
            Rng rng(derive_seed(cfg_.seed, "envelope", envelope_counter_++));
            content = crypto::seal_envelope(as_view(candidate_plain),
                                            as_view(p.keys.box.public_key),
                                            as_view(supervisor_keys_.sign.private_seed), rng)
                          .serialize();
        }
        CanonicalWriter w;
        w.u8(kProposalQuality);
        w.u32(ctx.round);
        w.raw(as_view(ctx.candidate_hash));
        w.f64(prev_perf_);
        w.f64(cfg_.lambda);
        w.u64(current_model_.version);
        w.bytes(as_view(content));
        send(supervisor_node(), partner_node(v), MsgKind::block_proposal, w.take());
    }
}

void Simulation::partner_on_quality_request(PartnerState& p, const Message& m) {
    CanonicalReader r(as_view(m.payload));
    r.u8();  // subkind
    std::uint32_t round = r.u32();
    Hash32 expected = r.fixed<32>();
    double prev_perf = r.f64();
    double lambda = r.f64();
    std::uint64_t version = r.u64();
    Bytes content = r.bytes();

    Bytes candidate_bytes;
    if (cfg_.mode == Mode::A) {
        candidate_bytes = content;
    } else {
        crypto::Envelope env = crypto::Envelope::parse(as_view(content));
        candidate_bytes = crypto::open_envelope(env, as_view(p.keys.box.private_key),
                                                as_view(supervisor_keys_.sign.public_key));
    }
    model::ModelWeights candidate = model::parse_model(as_view(candidate_bytes), version);
    if (cfg_.mode != Mode::C) p.retained_plain_model = candidate_bytes;

    fba::Vote vote = fba::check_candidate(candidate, prev_perf, global_test_, p.local_test,
                                          lambda, expected, p.id,
                                          as_view(p.keys.sign.private_seed));
    std::uint32_t index = partner_index(p.id);
    std::uint64_t round_seed = derive_seed(cfg_.seed, "round", round);
    vote = fba::apply_policy(std::move(vote), policy_for(index),
                             derive_seed(round_seed, "policy-q", index),
                             as_view(p.keys.sign.private_seed));
    send(partner_node(p.id), supervisor_node(), MsgKind::vote, encode_vote(vote, round));
}

void Simulation::supervisor_on_vote(const Message& m) {
    if (!round_ || round_->done) return;
    RoundContext& ctx = *round_;
    fba::Vote vote = decode_vote(as_view(m.payload));

    std::map<Id16, Bytes> keys;
    for (const Id16& v : ctx.validators.members)
        keys[v] = partner_by_id(v).keys.sign.public_key;

    const std::size_t k = ctx.validators.members.size();
    const std::size_t q = fba::quorum(k);

    if (vote.subject == fba::VoteSubject::model_quality) {
        ctx.quality_votes.push_back(std::move(vote));
        if (ctx.quality_votes.size() < k) return;

        fba::Tally tally = fba::tally_votes(ctx.quality_votes, keys);
        double perf_sum = 0.0;
        std::size_t perf_n = 0;
        for (const fba::Vote& v : ctx.quality_votes) {
            auto it = keys.find(v.voter);
            if (it == keys.end() || !fba::verify_vote(v, as_view(it->second))) continue;
            model::EvalReport gr{v.global_metric, global_test_.size(),
                                 model::DatasetKind::global};
            model::EvalReport lr{v.local_metric, partner_by_id(v.voter).local_test.size(),
                                 model::DatasetKind::local};
            perf_sum += fba::merge_eval(gr, lr);
            ++perf_n;
        }
        ctx.merged_perf = perf_n > 0 ? perf_sum / static_cast<double>(perf_n) : 0.0;
        if (tally.rejects >= q)
            return finish_round(RoundResult::rejected_model,
                                "model quality rejected by validator quorum");
        order_block_build();
        return;
    }

    // block integrity votes
    ctx.integrity_votes.push_back(std::move(vote));
    if (ctx.integrity_votes.size() < k) return;

    fba::Tally tally = fba::tally_votes(ctx.integrity_votes, keys);
    if (tally.accepts >= q) {
        // the general holds the accepted block; order the append + broadcast
        CanonicalWriter w;
        w.u8(kProposalCommitOrder);
        w.str(ledger::dump_block(ctx.proposed_block));
        send(supervisor_node(), partner_node(ctx.generals_tried.back()),
             MsgKind::block_proposal, w.take());
        return;
    }
    if (tally.rejects >= q &&
        !fba::quorum_blames_equivocation(ctx.integrity_votes, keys, q))
        return finish_round(RoundResult::rejected_block,
                            "block integrity rejected by validator quorum");

    ++ctx.rotation_count;
    if (ctx.rotation_count > cfg_.max_rotations) {
        ctx.rotation_count = ctx.generals_tried.size() - 1;  // switches performed
        return finish_round(RoundResult::aborted_max_rotations,
                            "no quorum after maximum general rotations");
    }
    order_block_build();
}

void Simulation::order_block_build() {
    RoundContext& ctx = *round_;
    std::vector<Id16> remaining;
    for (const Id16& v : ctx.validators.members)
        if (std::find(ctx.generals_tried.begin(), ctx.generals_tried.end(), v) ==
            ctx.generals_tried.end())
            remaining.push_back(v);
    if (remaining.empty())
        return finish_round(RoundResult::aborted_max_rotations,
                            "every validator already served as general");

    std::uint64_t round_seed = derive_seed(cfg_.seed, "round", ctx.round);
    Rng rng(derive_seed(round_seed, "general", ctx.rotation_count));
    Id16 general = remaining[static_cast<std::size_t>(rng.uniform_int(remaining.size()))];
    ctx.generals_tried.push_back(general);
    ctx.integrity_votes.clear();

    CanonicalWriter w;
    w.u8(kProposalBuildOrder);
    w.u32(ctx.round);
    w.raw(as_view(ctx.candidate_hash));
    w.raw(as_view(ctx.contributor));
    w.u64(ctx.batch_size);
    w.u64(ctx.rotation_count);
    send(supervisor_node(), partner_node(general), MsgKind::block_proposal, w.take());
}

void Simulation::partner_on_build_order(PartnerState& p, const Message& m) {
    CanonicalReader r(as_view(m.payload));
    r.u8();
    r.u32();  // round
    Hash32 model_hash = r.fixed<32>();
    Id16 contributor = r.fixed<16>();
    std::uint64_t batch_size = r.u64();
    std::uint64_t rotation = r.u64();

    if (cfg_.faults.equivocating_general && rotation == 0) {
        model_hash[0] ^= 0xff;  // reference a different model than validated
    }
    ledger::StrengthTable strengths =
        ledger::update_strengths(p.chain_replica.head().strengths, contributor, batch_size);
    ledger::Block block = fba::build_increment_block(p.chain_replica, model_hash, contributor,
                                                     strengths, clock_);
    CanonicalWriter w;
    w.u8(kProposalBuiltBlock);
    w.str(ledger::dump_block(block));
    send(partner_node(p.id), supervisor_node(), MsgKind::block_proposal, w.take());
}

void Simulation::supervisor_on_built_block(const Message& m) {
    if (!round_ || round_->done) return;
    RoundContext& ctx = *round_;
    CanonicalReader r(as_view(m.payload));
    std::uint8_t subkind = r.u8();
    if (subkind != kProposalBuiltBlock)
        throw ValidationError("unexpected block proposal subkind at supervisor");
    std::string line = r.str();
    ctx.proposed_block = ledger::parse_block(line);

    for (const Id16& v : ctx.validators.members) {
        CanonicalWriter w;
        w.u8(kProposalIntegrity);
        w.u32(ctx.round);
        w.str(line);
        w.raw(as_view(ctx.candidate_hash));
        w.raw(as_view(ctx.contributor));
        w.u64(ctx.batch_size);
        w.u64(ctx.rotation_count);
        send(supervisor_node(), partner_node(v), MsgKind::block_proposal, w.take());
    }
}

void Simulation::partner_on_integrity_request(PartnerState& p, const Message& m) {
    CanonicalReader r(as_view(m.payload));
    r.u8();
    std::uint32_t round = r.u32();
    ledger::Block block = ledger::parse_block(r.str());
    Hash32 expected = r.fixed<32>();
    Id16 contributor = r.fixed<16>();
    std::uint64_t batch_size = r.u64();
    std::uint64_t rotation = r.u64();

    ledger::StrengthTable expected_strengths =
        ledger::update_strengths(p.chain_replica.head().strengths, contributor, batch_size);
    fba::Vote vote = fba::verify_block_integrity(block, p.chain_replica, expected,
                                                 expected_strengths, contributor, p.id,
                                                 as_view(p.keys.sign.private_seed));
    std::uint32_t index = partner_index(p.id);
    std::uint64_t round_seed = derive_seed(cfg_.seed, "round", round);
    vote = fba::apply_policy(std::move(vote), policy_for(index),
                             derive_seed(round_seed, "policy-b", rotation * 64 + index),
                             as_view(p.keys.sign.private_seed));
    send(partner_node(p.id), supervisor_node(), MsgKind::vote, encode_vote(vote, round));
}

void Simulation::partner_on_sync(PartnerState& p, const Message& m) {
    CanonicalReader r(as_view(m.payload));
    ledger::Block block = ledger::parse_block(r.str());
    if (block.index < p.chain_replica.size()) return;  // already known
    ledger::append_block(p.chain_replica, block);
}

void Simulation::commit_block(const ledger::Block& block) {
    if (!round_ || round_->done) {
        // rollback sync or a replayed commit; the supervisor chain is
        // already up to date in those flows
        return;
    }
    RoundContext& ctx = *round_;
    ledger::append_block(chain_, block);

    vault::EncryptionMode store_mode = cfg_.mode == Mode::A   ? vault::EncryptionMode::none
                                       : cfg_.mode == Mode::B ? vault::EncryptionMode::symmetric
                                                              : vault::EncryptionMode::homomorphic;
    vault_.store_model(ctx.candidate, block.index, store_mode, clock_, supervisor_id_);
    vault::RegisterResult reg = vault_.register_data_ids(ctx.batch_ids, block.index);
    if (!reg.accepted) throw Error("registry conflict surfaced after the pre-check");

    current_model_ = ctx.candidate;
    current_model_.version = block.index;
    prev_perf_ = ctx.merged_perf;
    perf_history_[block.index] = ctx.merged_perf;

    ctx.outcome.block_index = block.index;
    finish_round(RoundResult::committed, "committed");
}

void Simulation::finish_round(RoundResult result, std::string reason) {
    RoundContext& ctx = *round_;
    ctx.outcome.round = ctx.round;
    ctx.outcome.contributor = ctx.contributor;
    ctx.outcome.result = result;
    ctx.outcome.reason = std::move(reason);
    ctx.outcome.merged_perf = ctx.merged_perf;
    ctx.outcome.rotations = ctx.rotation_count;
    ctx.done = true;
}

RoundOutcome Simulation::run_round() {
    setup();
    RoundContext ctx;
    ctx.round = rounds_completed_;
    ctx.contributor_index = rounds_completed_ % cfg_.partners;
    ctx.contributor = partner_ids_[ctx.contributor_index];
    round_ = std::move(ctx);

    CanonicalWriter w;
    w.u8(kFetchRequest);
    w.u8(kPurposeTrain);
    send(partner_node(round_->contributor), supervisor_node(), MsgKind::model_fetch, w.take());
    drain();

    if (!round_->done) throw Error("round did not reach a decision");
    RoundOutcome outcome = round_->outcome;
    outcomes_.push_back(outcome);
    ++rounds_completed_;
    round_.reset();
    return outcome;
}

void Simulation::supervisor_on_decrypt_request(const Message& m) {
    if (m.payload.size() < 9) {
        CanonicalWriter refuse;
        refuse.u8(0);
        vault_.log_decrypt_request(m.from.id, crypto::sha256(as_view(m.payload)), clock_);
        send(supervisor_node(), m.from, MsgKind::decrypt_reply, refuse.take());
        return;
    }
    CanonicalReader r(as_view(m.payload));
    std::size_t cipher_len = m.payload.size() - 8;
    Bytes cipher_bytes = r.raw(cipher_len);
    r.i64();  // qx_sum rides along for the reply

    Hash32 digest = crypto::sha256(as_view(cipher_bytes));
    vault_.log_decrypt_request(m.from.id, digest, clock_);

    CanonicalWriter w;
    if (vault_.is_protected_ciphertext(digest) || !he_keys_) {
        // models and gradients are never decrypted on request
        w.u8(0);
        send(supervisor_node(), m.from, MsgKind::decrypt_reply, w.take());
        return;
    }
    crypto::HECiphertext c = crypto::HECiphertext::parse(as_view(cipher_bytes));
    crypto::BigInt value = crypto::he_decrypt_centered(he_keys_->pub, he_keys_->priv, c);
    w.u8(1);
    bool negative = value.is_negative();
    w.u8(negative ? 1 : 0);
    w.bytes(as_view((negative ? value.negated() : value).to_bytes()));
    CanonicalReader echo(as_view(m.payload));
    echo.raw(cipher_len);
    w.i64(echo.i64());
    send(supervisor_node(), m.from, MsgKind::decrypt_reply, w.take());
}

PredictionDemo Simulation::run_prediction_demo(std::uint32_t partner_index) {
    setup();
    if (cfg_.mode != Mode::C)
        throw ValidationError("encrypted prediction demo requires mode C");
    PartnerState& p = partners_.at(partner_index);
    prediction_ = PredictionDemo{};
    prediction_->partner = p.id;

    // plaintext reference score on the same sample
    const model::Dataset& L = p.local_test;
    double plain = 0.0;
    for (std::size_t f = 0; f < L.feature_dim; ++f)
        plain += current_model_.weights[f] * L.row(0)[f];
    plain += current_model_.weights[L.feature_dim];  // bias
    prediction_->plaintext_score = plain;

    CanonicalWriter w;
    w.u8(kFetchRequest);
    w.u8(kPurposePredict);
    send(partner_node(p.id), supervisor_node(), MsgKind::model_fetch, w.take());
    drain();
    return *prediction_;
}

ledger::Block Simulation::rollback_to(std::uint64_t target_index, const Id16& authorizer) {
    setup();
    ledger::Block block = vault_.rollback(chain_, target_index, authorizer, clock_ + 1);
    clock_ += 1;
    current_model_ = vault_.decrypt_record(block.model_hash, block.index);
    current_model_.version = block.index;
    auto it = perf_history_.find(target_index);
    prev_perf_ = it != perf_history_.end() ? it->second : genesis_accuracy_;
    perf_history_[block.index] = prev_perf_;

    CanonicalWriter w;
    w.str(ledger::dump_block(block));
    Bytes payload = w.take();
    for (PartnerState& p : partners_)
        send(supervisor_node(), partner_node(p.id), MsgKind::sync, payload);
    drain();
    return block;
}

ScenarioReport Simulation::report() {
    setup();
    ScenarioReport r;
    r.config_echo = cfg_.dump();
    r.rounds = outcomes_;
    r.chain = chain_;
    r.journal = vault_.journal();
    r.genesis_accuracy = genesis_accuracy_;
    r.final_accuracy = model::evaluate(current_model_, global_test_).metric;
    r.leaks = leaks_;
    r.prediction = prediction_;
    return r;
}

ScenarioReport Simulation::run_all() {
    setup();
    for (std::uint32_t i = 0; i < cfg_.rounds; ++i) run_round();
    if (cfg_.mode == Mode::C) prediction_ = run_prediction_demo(0);
    return report();
}

ScenarioReport run_scenario(const ScenarioConfig& cfg) {
    Simulation sim(cfg);
    return sim.run_all();
}

}  // namespace tclearn::netsim

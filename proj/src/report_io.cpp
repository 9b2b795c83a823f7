#include <fstream>
#include <sstream>

#include "tclearn/hash.hpp"
#include "tclearn/netsim.hpp"

namespace tclearn::netsim {

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

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string outcome_line(const RoundOutcome& o) {
    std::ostringstream out;
    out << o.round << ' ' << to_hex(as_view(o.contributor)) << ' '
        << round_result_name(o.result) << ' ' << format_double(o.merged_perf) << ' '
        << o.rotations << ' ';
    if (o.block_index)
        out << *o.block_index;
    else
        out << '-';
    out << ' ';
    if (o.conflicts.empty()) {
        out << '-';
    } else {
        for (std::size_t i = 0; i < o.conflicts.size(); ++i)
            out << (i ? "," : "") << to_hex(as_view(o.conflicts[i]));
    }
    return out.str();
}

RoundResult round_result_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(RoundResult::refused_batch); ++i) {
        auto r = static_cast<RoundResult>(i);
        if (round_result_name(r) == name) return r;
    }
    throw Error("unknown round result '" + name + "'");
}

RoundOutcome parse_outcome_line(const std::string& line) {
    std::vector<std::string> f = split(line, ' ');
    if (f.size() != 7) throw Error("round table line needs 7 fields");
    RoundOutcome o;
    o.round = static_cast<std::uint32_t>(std::stoul(f[0]));
    o.contributor = id16_from_hex(f[1]);
    o.result = round_result_from_name(f[2]);
    o.reason = f[2];
    o.merged_perf = parse_double(f[3]);
    o.rotations = std::stoull(f[4]);
    if (f[5] != "-") o.block_index = std::stoull(f[5]);
    if (f[6] != "-")
        for (const std::string& c : split(f[6], ',')) o.conflicts.push_back(id16_from_hex(c));
    return o;
}

}  // namespace

std::string ScenarioReport::rounds_table() const {
    std::string out;
    for (const RoundOutcome& o : rounds) {
        out += outcome_line(o);
        out += '\n';
    }
    return out;
}

std::string ScenarioReport::summary() const {
    std::size_t committed = 0, rejected = 0, refused = 0, aborted = 0;
    for (const RoundOutcome& o : rounds) {
        switch (o.result) {
            case RoundResult::committed: ++committed; break;
            case RoundResult::rejected_model:
            case RoundResult::rejected_block: ++rejected; break;
            case RoundResult::refused_duplicate_data:
            case RoundResult::refused_batch: ++refused; break;
            case RoundResult::aborted_max_rotations: ++aborted; break;
        }
    }
    std::ostringstream out;
    out << "rounds_run = " << rounds.size() << "\n";
    out << "committed = " << committed << "\n";
    out << "rejected = " << rejected << "\n";
    out << "refused = " << refused << "\n";
    out << "aborted = " << aborted << "\n";
    out << "chain_length = " << chain.size() << "\n";
    if (!chain.empty()) out << "head_hash = " << to_hex(as_view(chain.head().block_hash)) << "\n";
    out << "journal_records = " << journal.size() << "\n";
    out << "genesis_accuracy = " << format_double(genesis_accuracy) << "\n";
    out << "final_accuracy = " << format_double(final_accuracy) << "\n";
    for (const LeakEvent& leak : leaks)
        out << "leak = " << to_hex(as_view(leak.partner)) << ":" << to_hex(as_view(leak.model_hash))
            << ":" << leak.time << "\n";
    if (prediction) {
        out << "prediction_partner = " << to_hex(as_view(prediction->partner)) << "\n";
        out << "prediction_score = " << format_double(prediction->score) << "\n";
        out << "prediction_plaintext_score = " << format_double(prediction->plaintext_score)
            << "\n";
        out << "prediction_refused = " << (prediction->refused ? "true" : "false") << "\n";
    }
    return out.str();
}

void Simulation::save_state(const std::filesystem::path& out_dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir / "vault");

    write_file(out_dir / "config.txt", cfg_.dump());
    write_file(out_dir / "chain.txt", ledger::dump_chain(chain_));

    std::string journal_text;
    for (const vault::AuditRecord& r : vault_.journal()) {
        journal_text += vault::dump_audit_record(r);
        journal_text += '\n';
    }
    write_file(out_dir / "audit.txt", journal_text);

    std::string rounds_text;
    for (const RoundOutcome& o : outcomes_) {
        rounds_text += outcome_line(o);
        rounds_text += '\n';
    }
    write_file(out_dir / "rounds.txt", rounds_text);

    write_file(out_dir / "model.txt", model::dump_model(current_model_));

    std::string index_text;
    for (const auto& [hash, rec] : vault_.records()) {
        index_text += to_hex(as_view(hash));
        index_text += ' ';
        index_text += std::to_string(rec.block_index);
        index_text += ' ';
        index_text += std::to_string(rec.stored_at);
        index_text += ' ';
        index_text += vault::encryption_mode_name(rec.mode);
        index_text += '\n';
        std::ofstream blob(out_dir / "vault" / (to_hex(as_view(hash)) + ".blob"),
                           std::ios::binary);
        blob.write(reinterpret_cast<const char*>(rec.encrypted_blob.data()),
                   static_cast<std::streamsize>(rec.encrypted_blob.size()));
    }
    write_file(out_dir / "vault" / "index.txt", index_text);

    std::string registry_text;
    for (const auto& [id, block] : vault_.registry()) {
        registry_text += to_hex(as_view(id));
        registry_text += ' ';
        registry_text += std::to_string(block);
        registry_text += '\n';
    }
    write_file(out_dir / "registry.txt", registry_text);

    std::string perf_text;
    for (const auto& [index, perf] : perf_history_) {
        perf_text += std::to_string(index);
        perf_text += ' ';
        perf_text += format_double(perf);
        perf_text += '\n';
    }
    write_file(out_dir / "perf.txt", perf_text);

    std::ostringstream meta;
    meta << "rounds_completed = " << rounds_completed_ << "\n";
    meta << "clock = " << clock_ << "\n";
    meta << "envelope_counter = " << envelope_counter_ << "\n";
    meta << "prev_perf = " << format_double(prev_perf_) << "\n";
    meta << "genesis_accuracy = " << format_double(genesis_accuracy_) << "\n";
    meta << "chunks_used = ";
    for (std::size_t i = 0; i < partners_.size(); ++i)
        meta << (i ? "," : "") << partners_[i].chunks_used;
    meta << "\n";
    write_file(out_dir / "meta.txt", meta.str());

    // summary and the final report artifacts
    ScenarioReport r;
    r.config_echo = cfg_.dump();
    r.rounds = outcomes_;
    r.chain = chain_;
    r.journal = vault_.journal();
    r.genesis_accuracy = genesis_accuracy_;
    r.final_accuracy =
        ready_ ? model::evaluate(current_model_, global_test_).metric : genesis_accuracy_;
    r.leaks = leaks_;
    r.prediction = prediction_;
    write_file(out_dir / "summary.txt", r.summary());
}

Simulation Simulation::load_state(const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    ScenarioConfig cfg = ScenarioConfig::load_file(out_dir / "config.txt");
    Simulation sim(cfg);
    sim.setup();

    {
        std::istringstream in(read_file(out_dir / "chain.txt"));
        sim.chain_ = ledger::parse_chain(in);
        ledger::VerifyResult v = ledger::verify_chain(sim.chain_);
        if (!v.ok)
            throw ChainError(ChainErrorCode::bad_reference,
                             "stored chain fails verification at index " +
                                 std::to_string(v.bad_index) + ": " + v.reason);
        for (PartnerState& p : sim.partners_) p.chain_replica = sim.chain_;
    }
    {
        std::vector<vault::AuditRecord> journal;
        std::istringstream in(read_file(out_dir / "audit.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            journal.push_back(vault::parse_audit_record(line));
        }
        sim.vault_.restore_journal(std::move(journal));
    }
    {
        std::istringstream in(read_file(out_dir / "vault" / "index.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f = split(line, ' ');
            if (f.size() != 4) throw Error("vault index line needs 4 fields");
            vault::VaultRecord rec;
            rec.model_hash = hash32_from_hex(f[0]);
            rec.block_index = std::stoull(f[1]);
            rec.stored_at = std::stoll(f[2]);
            rec.mode = vault::encryption_mode_from_name(f[3]);
            std::string blob = read_file(out_dir / "vault" / (f[0] + ".blob"));
            rec.encrypted_blob.assign(blob.begin(), blob.end());
            if (rec.mode == vault::EncryptionMode::homomorphic) {
                CanonicalReader r(as_view(rec.encrypted_blob));
                r.bytes();  // arch
                for (const crypto::HECiphertext& c :
                     crypto::parse_ciphertext_vector(as_view(r.raw(r.remaining()))))
                    sim.vault_.flag_protected_ciphertext(
                        crypto::sha256(as_view(c.serialize())));
            }
            sim.vault_.restore_record(std::move(rec));
        }
    }
    {
        std::istringstream in(read_file(out_dir / "registry.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f = split(line, ' ');
            if (f.size() != 2) throw Error("registry line needs 2 fields");
            sim.vault_.restore_registry_entry(id16_from_hex(f[0]), std::stoull(f[1]));
        }
    }
    {
        sim.perf_history_.clear();
        std::istringstream in(read_file(out_dir / "perf.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f = split(line, ' ');
            if (f.size() != 2) throw Error("perf line needs 2 fields");
            sim.perf_history_[std::stoull(f[0])] = parse_double(f[1]);
        }
    }
    {
        sim.outcomes_.clear();
        std::istringstream in(read_file(out_dir / "rounds.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            sim.outcomes_.push_back(parse_outcome_line(line));
        }
    }
    {
        std::istringstream in(read_file(out_dir / "meta.txt"));
        std::string line;
        while (std::getline(in, line)) {
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, line.find_first_of(" ="));
            std::string value = line.substr(eq + 1);
            std::size_t b = value.find_first_not_of(' ');
            value = b == std::string::npos ? "" : value.substr(b);
            if (key == "rounds_completed")
                sim.rounds_completed_ = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "clock") sim.clock_ = std::stoll(value);
            else if (key == "envelope_counter") sim.envelope_counter_ = std::stoull(value);
            else if (key == "prev_perf") sim.prev_perf_ = parse_double(value);
            else if (key == "genesis_accuracy") sim.genesis_accuracy_ = parse_double(value);
            else if (key == "chunks_used") {
                std::vector<std::string> parts = split(value, ',');
                for (std::size_t i = 0; i < parts.size() && i < sim.partners_.size(); ++i)
                    sim.partners_[i].chunks_used =
                        static_cast<std::uint32_t>(std::stoul(parts[i]));
            }
        }
    }

    std::uint64_t head_index = sim.chain_.head().index;
    sim.current_model_ =
        model::parse_model_dump(read_file(out_dir / "model.txt"), head_index);
    if (sim.current_model_.hash() != sim.chain_.head().model_hash)
        throw Error("stored model does not match the chain head");
    return sim;
}

void write_scenario_outputs(Simulation& sim, const std::filesystem::path& out_dir) {
    sim.save_state(out_dir);
}

}  // namespace tclearn::netsim

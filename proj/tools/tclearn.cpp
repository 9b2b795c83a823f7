// Command-line front door: run scenarios, verify chains, query the audit
// journal, roll the model back, dump artifacts.
//
// Exit codes: 0 success, 1 verification/protocol failure, 2 usage/config
// error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tclearn/netsim.hpp"

namespace fs = std::filesystem;
using namespace tclearn;

namespace {

constexpr int kOk = 0;
constexpr int kProtocolFailure = 1;
constexpr int kUsageError = 2;

std::string default_out_dir() {
    const char* env = std::getenv("TCLEARN_OUT");
    return env ? env : "";
}

std::vector<vault::AuditRecord> load_journal(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read journal " + path.string());
    std::vector<vault::AuditRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(vault::parse_audit_record(line));
    }
    return records;
}

Id16 resolve_authorizer(const std::string& name, std::uint64_t seed, std::uint32_t partners) {
    if (name == "supervisor") return netsim::Simulation::supervisor_id_for(seed);
    std::string idx = name;
    if (idx.rfind("partner", 0) == 0) idx = idx.substr(7);
    if (!idx.empty() && idx.find_first_not_of("0123456789") == std::string::npos) {
        auto i = static_cast<std::uint32_t>(std::stoul(idx));
        if (i < partners) return netsim::Simulation::partner_id_for(seed, i);
    }
    if (name.size() == 32) return id16_from_hex(name);
    throw ConfigError("authorizer must be 'supervisor', a partner index, or a 16-byte hex id");
}

struct RunOverrides {
    std::int64_t rounds = -1;
    std::int64_t seed = -1;
    std::string mode;
    double lambda = -1.0;
    std::int64_t partners = -1;
    std::int64_t batch_size = -1;
    std::int64_t epochs = -1;
    double learning_rate = -1.0;
    std::int64_t validators_k = -1;
};

void apply_overrides(netsim::ScenarioConfig& cfg, const RunOverrides& o) {
    if (o.rounds > 0) cfg.rounds = static_cast<std::uint32_t>(o.rounds);
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.mode.empty()) cfg.mode = netsim::mode_from_name(o.mode);
    if (o.lambda >= 0.0) cfg.lambda = o.lambda;
    if (o.partners > 0) cfg.partners = static_cast<std::uint32_t>(o.partners);
    if (o.batch_size > 0) cfg.batch_size = static_cast<std::uint64_t>(o.batch_size);
    if (o.epochs >= 0) cfg.epochs = static_cast<std::uint32_t>(o.epochs);
    if (o.learning_rate >= 0.0) cfg.learning_rate = o.learning_rate;
    if (o.validators_k >= 0) cfg.validators_k = static_cast<std::uint32_t>(o.validators_k);
}

int cmd_run(const std::string& config_path, const std::string& out_dir, bool resume,
            const RunOverrides& overrides) {
    if (out_dir.empty()) {
        std::cerr << "error: no output directory (use --out or TCLEARN_OUT)\n";
        return kUsageError;
    }
    try {
        if (resume) {
            netsim::Simulation sim = netsim::Simulation::load_state(out_dir);
            std::uint32_t extra = overrides.rounds > 0
                                      ? static_cast<std::uint32_t>(overrides.rounds)
                                      : 1;
            for (std::uint32_t i = 0; i < extra; ++i) {
                netsim::RoundOutcome o = sim.run_round();
                std::cout << "round " << o.round << ": " << netsim::round_result_name(o.result)
                          << "\n";
            }
            sim.save_state(out_dir);
            return kOk;
        }

        netsim::ScenarioConfig cfg = netsim::ScenarioConfig::load_file(config_path);
        apply_overrides(cfg, overrides);
        cfg.validate();

        netsim::Simulation sim(cfg);
        netsim::ScenarioReport report = sim.run_all();
        netsim::write_scenario_outputs(sim, out_dir);
        std::cout << report.summary();
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kProtocolFailure;
    }
}

int cmd_verify(const std::string& chain_path) {
    try {
        std::ifstream in(chain_path);
        if (!in) {
            std::cerr << "error: cannot read " << chain_path << "\n";
            return kUsageError;
        }
        ledger::Chain chain = ledger::parse_chain(in);
        ledger::VerifyResult result = ledger::verify_chain(chain);
        if (result.ok) {
            std::cout << "ok: " << chain.size() << " blocks\n";
            return kOk;
        }
        std::cout << "bad block at index " << result.bad_index << ": " << result.reason << "\n";
        return kProtocolFailure;
    } catch (const ChainError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
}

int cmd_audit(const std::string& journal_path, const std::string& model_hash_hex,
              std::int64_t before) {
    try {
        std::vector<vault::AuditRecord> journal = load_journal(journal_path);
        Hash32 hash = hash32_from_hex(model_hash_hex);
        std::vector<Id16> partners = vault::audit_query_records(journal, hash, before);
        for (const Id16& p : partners) std::cout << to_hex(as_view(p)) << "\n";
        return kOk;
    } catch (const VaultError& e) {
        std::cerr << "audit error: " << e.what() << " (seq " << e.bad_seq << ")\n";
        return kProtocolFailure;
    } catch (const ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
}

int cmd_rollback(const std::string& out_dir, std::uint64_t target,
                 const std::string& authorizer) {
    try {
        netsim::Simulation sim = netsim::Simulation::load_state(out_dir);
        Id16 auth = resolve_authorizer(authorizer, sim.config().seed, sim.config().partners);
        ledger::Block block = sim.rollback_to(target, auth);
        sim.save_state(out_dir);
        std::cout << "rolled back to block " << target << "; new head index " << block.index
                  << "\n";
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const VaultError& e) {
        std::cerr << "rollback denied: " << e.what() << "\n";
        return kProtocolFailure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kProtocolFailure;
    }
}

int cmd_dump_chain(const std::string& chain_path) {
    try {
        std::ifstream in(chain_path);
        if (!in) {
            std::cerr << "error: cannot read " << chain_path << "\n";
            return kUsageError;
        }
        ledger::Chain chain = ledger::parse_chain(in);
        std::cout << ledger::dump_chain(chain);
        return kOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TCLearn coalition-learning simulator and ledger tools"};
    app.require_subcommand(1);

    std::string config_path, out_dir = default_out_dir();
    bool resume = false;
    RunOverrides overrides;

    CLI::App* run = app.add_subcommand("run", "run a training/consensus scenario");
    run->add_option("--config", config_path, "scenario config file");
    run->add_option("--out", out_dir, "output directory for report and state");
    run->add_flag("--resume", resume, "continue from the stored state in --out");
    run->add_option("--rounds", overrides.rounds, "override round count (resume: extra rounds)");
    run->add_option("--seed", overrides.seed, "override config seed");
    run->add_option("--mode", overrides.mode, "override mode (A|B|C)");
    run->add_option("--lambda", overrides.lambda, "override acceptance threshold");
    run->add_option("--partners", overrides.partners, "override coalition size");
    run->add_option("--batch-size", overrides.batch_size, "override contribution batch size");
    run->add_option("--epochs", overrides.epochs, "override training epochs per round");
    run->add_option("--lr", overrides.learning_rate, "override learning rate");
    run->add_option("--validators-k", overrides.validators_k, "override validator count");

    std::string chain_path;
    CLI::App* verify = app.add_subcommand("verify", "verify a chain dump");
    verify->add_option("chain", chain_path, "chain dump file")->required();

    std::string journal_path, model_hash_hex;
    std::int64_t before = 0;
    CLI::App* audit = app.add_subcommand("audit", "list partners who fetched a model version");
    audit->add_option("--journal", journal_path, "audit journal file")->required();
    audit->add_option("--model-hash", model_hash_hex, "model hash (hex)")->required();
    audit->add_option("--before", before, "cutoff timestamp")->required();

    std::string rb_out = default_out_dir(), authorizer = "supervisor";
    std::uint64_t target = 0;
    CLI::App* rollback = app.add_subcommand("rollback", "restore the model to an earlier block");
    rollback->add_option("--out", rb_out, "stored scenario state directory");
    rollback->add_option("--target", target, "block index to restore")->required();
    rollback->add_option("--authorizer", authorizer, "supervisor or partner index");

    std::string dump_path;
    CLI::App* dump = app.add_subcommand("dump-chain", "print a stored chain dump");
    dump->add_option("chain", dump_path, "chain dump file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    if (run->parsed()) {
        if (!resume && config_path.empty()) {
            std::cerr << "error: run needs --config (or --resume)\n";
            return kUsageError;
        }
        return cmd_run(config_path, out_dir, resume, overrides);
    }
    if (verify->parsed()) return cmd_verify(chain_path);
    if (audit->parsed()) return cmd_audit(journal_path, model_hash_hex, before);
    if (rollback->parsed()) return cmd_rollback(rb_out, target, authorizer);
    if (dump->parsed()) return cmd_dump_chain(dump_path);
    return kUsageError;
}

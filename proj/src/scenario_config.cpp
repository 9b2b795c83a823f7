#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tclearn/netsim.hpp"

namespace tclearn::netsim {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t p = s.find(',', start);
        if (p == std::string::npos) p = s.size();
        std::string item = trim(s.substr(start, p - start));
        if (!item.empty()) out.push_back(item);
        start = p + 1;
    }
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("config key '" + key + "' needs a non-negative integer, got '" +
                          value + "'");
    return std::stoull(value);
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        return parse_double(value);
    } catch (const Error&) {
        throw ConfigError("config key '" + key + "' needs a real number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + key + "' needs true/false, got '" + value + "'");
}

}  // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::A: return "A";
        case Mode::B: return "B";
        case Mode::C: return "C";
    }
    throw ConfigError("unknown mode");
}

Mode mode_from_name(const std::string& name) {
    if (name == "A" || name == "a") return Mode::A;
    if (name == "B" || name == "b") return Mode::B;
    if (name == "C" || name == "c") return Mode::C;
    throw ConfigError("mode must be A, B or C, got '" + name + "'");
}

std::string byzantine_policy_name(ByzantinePolicy p) {
    switch (p) {
        case ByzantinePolicy::always_accept: return "always_accept";
        case ByzantinePolicy::always_reject: return "always_reject";
        case ByzantinePolicy::random_vote: return "random";
    }
    throw ConfigError("unknown byzantine policy");
}

ByzantinePolicy byzantine_policy_from_name(const std::string& name) {
    if (name == "always_accept") return ByzantinePolicy::always_accept;
    if (name == "always_reject") return ByzantinePolicy::always_reject;
    if (name == "random") return ByzantinePolicy::random_vote;
    throw ConfigError("unknown byzantine policy '" + name + "'");
}

bool FaultModel::empty() const {
    return corrupt_data_partners.empty() && byzantine_validators.empty() &&
           !equivocating_general && leaking_partners.empty() && !duplicate_data_partner &&
           !duplicate_data_round;
}

std::uint32_t ScenarioConfig::effective_validators() const {
    if (validators_k != 0) return validators_k;
    std::uint32_t k = std::max<std::uint32_t>(3, (partners + 1) / 2);
    // the proposer never validates its own candidate
    return std::min(k, partners - 1);
}

std::uint64_t ScenarioConfig::effective_samples_per_partner() const {
    if (samples_per_partner != 0) return samples_per_partner;
    std::uint64_t chunks = (rounds + partners - 1) / partners;
    auto training_needed = static_cast<double>(chunks * batch_size);
    auto pool = static_cast<std::uint64_t>(training_needed / (1.0 - local_test_fraction)) + 4;
    return pool;
}

void ScenarioConfig::validate() const {
    if (partners < 2) throw ConfigError("at least 2 partners required");
    if (rounds < 1) throw ConfigError("at least 1 round required");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (batch_size < min_batch_size)
        throw ConfigError("batch_size below min_batch_size");
    if (!(local_test_fraction > 0.0 && local_test_fraction < 0.5))
        throw ConfigError("local_test_fraction must lie in (0, 0.5)");
    if (global_test_samples < 2) throw ConfigError("global test set too small");
    std::uint32_t k = effective_validators();
    if (k < 1 || k > partners - 1)
        throw ConfigError("validators_k must lie in [1, partners-1]");
    if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
    if (he_bits < 512) throw ConfigError("he_bits must be at least 512");
    if (mode == Mode::C && !hidden_layers.empty())
        throw ConfigError("mode C needs the linear classifier (no hidden layers): encrypted "
                          "prediction works on a linear score");

    std::uint64_t chunks = (rounds + partners - 1) / partners;
    std::uint64_t pool = effective_samples_per_partner();
    auto local = static_cast<std::uint64_t>(
        std::llround(local_test_fraction * static_cast<double>(pool)));
    if (local < 1) local = 1;
    if (pool - local < chunks * batch_size)
        throw ConfigError("samples_per_partner too small for the configured rounds");

    for (std::uint32_t p : faults.corrupt_data_partners)
        if (p >= partners) throw ConfigError("corrupt_data partner index out of range");
    for (const auto& [p, policy] : faults.byzantine_validators)
        if (p >= partners) throw ConfigError("byzantine partner index out of range");
    for (std::uint32_t p : faults.leaking_partners)
        if (p >= partners) throw ConfigError("leaking partner index out of range");
    if (faults.duplicate_data_partner && *faults.duplicate_data_partner >= partners)
        throw ConfigError("duplicate_data partner index out of range");
    if (faults.duplicate_data_partner.has_value() != faults.duplicate_data_round.has_value())
        throw ConfigError("duplicate_data_partner and duplicate_data_round go together");
    if (faults.duplicate_data_round && *faults.duplicate_data_round >= rounds)
        throw ConfigError("duplicate_data_round out of range");
    if (!(faults.label_flip_rate >= 0.0 && faults.label_flip_rate <= 1.0))
        throw ConfigError("label_flip_rate must lie in [0, 1]");
}

ScenarioConfig ScenarioConfig::parse(std::istream& in) {
    ScenarioConfig cfg;
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section != "scenario" && section != "faults")
                throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line is not key = value: '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));

        if (section == "faults") {
            if (key == "corrupt_data_partners") {
                for (const std::string& s : split_list(value))
                    cfg.faults.corrupt_data_partners.insert(
                        static_cast<std::uint32_t>(parse_uint(key, s)));
            } else if (key == "label_flip_rate") {
                cfg.faults.label_flip_rate = parse_real(key, value);
            } else if (key == "byzantine_validators") {
                for (const std::string& s : split_list(value)) {
                    std::size_t colon = s.find(':');
                    if (colon == std::string::npos)
                        throw ConfigError("byzantine entry needs index:policy, got '" + s + "'");
                    auto idx = static_cast<std::uint32_t>(
                        parse_uint(key, trim(s.substr(0, colon))));
                    cfg.faults.byzantine_validators[idx] =
                        byzantine_policy_from_name(trim(s.substr(colon + 1)));
                }
            } else if (key == "equivocating_general") {
                cfg.faults.equivocating_general = parse_bool(key, value);
            } else if (key == "leaking_partners") {
                for (const std::string& s : split_list(value))
                    cfg.faults.leaking_partners.insert(
                        static_cast<std::uint32_t>(parse_uint(key, s)));
            } else if (key == "duplicate_data_partner") {
                cfg.faults.duplicate_data_partner =
                    static_cast<std::uint32_t>(parse_uint(key, value));
            } else if (key == "duplicate_data_round") {
                cfg.faults.duplicate_data_round =
                    static_cast<std::uint32_t>(parse_uint(key, value));
            } else {
                throw ConfigError("unknown fault key '" + key + "'");
            }
            continue;
        }

        if (key == "partners") cfg.partners = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "rounds") cfg.rounds = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "mode") cfg.mode = mode_from_name(value);
        else if (key == "lambda") cfg.lambda = parse_real(key, value);
        else if (key == "validators_k")
            cfg.validators_k = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "max_rotations")
            cfg.max_rotations = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "min_batch_size") cfg.min_batch_size = parse_uint(key, value);
        else if (key == "batch_size") cfg.batch_size = parse_uint(key, value);
        else if (key == "epochs") cfg.epochs = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "learning_rate" || key == "lr") cfg.learning_rate = parse_real(key, value);
        else if (key == "seed") cfg.seed = parse_uint(key, value);
        else if (key == "samples_per_partner") cfg.samples_per_partner = parse_uint(key, value);
        else if (key == "global_test_samples") cfg.global_test_samples = parse_uint(key, value);
        else if (key == "local_test_fraction") cfg.local_test_fraction = parse_real(key, value);
        else if (key == "class_separation") cfg.class_separation = parse_real(key, value);
        else if (key == "feature_dim")
            cfg.feature_dim = static_cast<std::uint32_t>(parse_uint(key, value));
        else if (key == "hidden_layers") {
            cfg.hidden_layers.clear();
            for (const std::string& s : split_list(value))
                cfg.hidden_layers.push_back(static_cast<std::uint32_t>(parse_uint(key, s)));
        } else if (key == "he_bits")
            cfg.he_bits = static_cast<std::uint32_t>(parse_uint(key, value));
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig ScenarioConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse(in);
}

std::string ScenarioConfig::dump() const {
    std::ostringstream out;
    out << "[scenario]\n";
    out << "partners = " << partners << "\n";
    out << "rounds = " << rounds << "\n";
    out << "mode = " << mode_name(mode) << "\n";
    out << "lambda = " << format_double(lambda) << "\n";
    out << "validators_k = " << validators_k << "\n";
    out << "max_rotations = " << max_rotations << "\n";
    out << "min_batch_size = " << min_batch_size << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "epochs = " << epochs << "\n";
    out << "learning_rate = " << format_double(learning_rate) << "\n";
    out << "seed = " << seed << "\n";
    out << "samples_per_partner = " << samples_per_partner << "\n";
    out << "global_test_samples = " << global_test_samples << "\n";
    out << "local_test_fraction = " << format_double(local_test_fraction) << "\n";
    out << "class_separation = " << format_double(class_separation) << "\n";
    out << "feature_dim = " << feature_dim << "\n";
    if (!hidden_layers.empty()) {
        out << "hidden_layers = ";
        for (std::size_t i = 0; i < hidden_layers.size(); ++i)
            out << (i ? "," : "") << hidden_layers[i];
        out << "\n";
    }
    out << "he_bits = " << he_bits << "\n";
    if (!faults.empty()) {
        out << "\n[faults]\n";
        if (!faults.corrupt_data_partners.empty()) {
            out << "corrupt_data_partners = ";
            bool first = true;
            for (std::uint32_t p : faults.corrupt_data_partners) {
                out << (first ? "" : ",") << p;
                first = false;
            }
            out << "\n";
            out << "label_flip_rate = " << format_double(faults.label_flip_rate) << "\n";
        }
        if (!faults.byzantine_validators.empty()) {
            out << "byzantine_validators = ";
            bool first = true;
            for (const auto& [idx, policy] : faults.byzantine_validators) {
                out << (first ? "" : ",") << idx << ":" << byzantine_policy_name(policy);
                first = false;
            }
            out << "\n";
        }
        if (faults.equivocating_general) out << "equivocating_general = true\n";
        if (!faults.leaking_partners.empty()) {
            out << "leaking_partners = ";
            bool first = true;
            for (std::uint32_t p : faults.leaking_partners) {
                out << (first ? "" : ",") << p;
                first = false;
            }
            out << "\n";
        }
        if (faults.duplicate_data_partner)
            out << "duplicate_data_partner = " << *faults.duplicate_data_partner << "\n";
        if (faults.duplicate_data_round)
            out << "duplicate_data_round = " << *faults.duplicate_data_round << "\n";
    }
    return out.str();
}

std::string msg_kind_name(MsgKind k) {
    switch (k) {
        case MsgKind::gradient_submit: return "gradient_submit";
        case MsgKind::model_fetch: return "model_fetch";
        case MsgKind::vote: return "vote";
        case MsgKind::block_proposal: return "block_proposal";
        case MsgKind::sync: return "sync";
        case MsgKind::decrypt_request: return "decrypt_request";
        case MsgKind::decrypt_reply: return "decrypt_reply";
    }
    return "unknown";
}

std::string round_result_name(RoundResult r) {
    switch (r) {
        case RoundResult::committed: return "committed";
        case RoundResult::rejected_model: return "rejected_model";
        case RoundResult::rejected_block: return "rejected_block";
        case RoundResult::aborted_max_rotations: return "aborted_max_rotations";
        case RoundResult::refused_duplicate_data: return "refused_duplicate_data";
        case RoundResult::refused_batch: return "refused_batch";
    }
    return "unknown";
}

}  // namespace tclearn::netsim

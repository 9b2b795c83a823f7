// Python bindings for the core operations: scenario runs, chain and journal
// verification, hashing, signatures, envelopes, and the additive
// homomorphic scheme. Big integers cross the boundary as big-endian bytes.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "tclearn/crypto.hpp"
#include "tclearn/hash.hpp"
#include "tclearn/ledger.hpp"
#include "tclearn/netsim.hpp"
#include "tclearn/paillier.hpp"
#include "tclearn/vault.hpp"

namespace py = pybind11;
using namespace tclearn;

namespace {

Bytes to_bytes(const py::bytes& b) {
    std::string s = b;
    return Bytes(s.begin(), s.end());
}

py::bytes from_bytes(ByteView b) {
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

struct PyHEKeys {
    crypto::HEKeyPair kp;
};

py::dict summary_dict(const netsim::ScenarioReport& r) {
    py::dict d;
    std::size_t committed = 0;
    for (const netsim::RoundOutcome& o : r.rounds)
        if (o.result == netsim::RoundResult::committed) ++committed;
    d["rounds_run"] = r.rounds.size();
    d["committed"] = committed;
    d["chain_length"] = r.chain.size();
    d["head_hash"] = r.chain.empty() ? "" : to_hex(as_view(r.chain.head().block_hash));
    d["genesis_accuracy"] = r.genesis_accuracy;
    d["final_accuracy"] = r.final_accuracy;
    d["journal_records"] = r.journal.size();
    py::list rounds;
    for (const netsim::RoundOutcome& o : r.rounds) {
        py::dict ro;
        ro["round"] = o.round;
        ro["contributor"] = to_hex(as_view(o.contributor));
        ro["result"] = netsim::round_result_name(o.result);
        ro["merged_perf"] = o.merged_perf;
        ro["rotations"] = o.rotations;
        if (o.block_index) ro["block_index"] = *o.block_index;
        rounds.append(ro);
    }
    d["rounds"] = rounds;
    if (r.prediction) {
        py::dict p;
        p["score"] = r.prediction->score;
        p["plaintext_score"] = r.prediction->plaintext_score;
        p["refused"] = r.prediction->refused;
        d["prediction"] = p;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Coalition learning with ledger-certified increments";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<ValidationError>(m, "ValidationError");
    py::register_exception<CryptoError>(m, "CryptoError");

    m.def("sha256", [](const py::bytes& data) {
        return from_bytes(as_view(crypto::sha256(as_view(to_bytes(data)))));
    });

    // identity + envelope layer
    py::class_<crypto::IdentityKeyPair>(m, "IdentityKeyPair")
        .def_property_readonly("sign_public",
                               [](const crypto::IdentityKeyPair& k) {
                                   return from_bytes(as_view(k.sign.public_key));
                               })
        .def_property_readonly("box_public", [](const crypto::IdentityKeyPair& k) {
            return from_bytes(as_view(k.box.public_key));
        });
    m.def("identity_from_seed", &crypto::identity_from_seed);
    m.def("sign", [](const py::bytes& msg, const crypto::IdentityKeyPair& k) {
        return from_bytes(as_view(crypto::sign(as_view(to_bytes(msg)),
                                               as_view(k.sign.private_seed))));
    });
    m.def("verify", [](const py::bytes& msg, const py::bytes& sig, const py::bytes& pub) {
        return crypto::verify(as_view(to_bytes(msg)), as_view(to_bytes(sig)),
                              as_view(to_bytes(pub)));
    });
    m.def(
        "seal_envelope",
        [](const py::bytes& plaintext, const crypto::IdentityKeyPair& recipient,
           const crypto::IdentityKeyPair& sender, std::uint64_t seed) {
            Rng rng(seed);
            return from_bytes(as_view(
                crypto::seal_envelope(as_view(to_bytes(plaintext)),
                                      as_view(recipient.box.public_key),
                                      as_view(sender.sign.private_seed), rng)
                    .serialize()));
        },
        py::arg("plaintext"), py::arg("recipient"), py::arg("sender"), py::arg("seed") = 0);
    m.def("open_envelope",
          [](const py::bytes& wire, const crypto::IdentityKeyPair& recipient,
             const crypto::IdentityKeyPair& sender) {
              crypto::Envelope env = crypto::Envelope::parse(as_view(to_bytes(wire)));
              return from_bytes(as_view(crypto::open_envelope(
                  env, as_view(recipient.box.private_key), as_view(sender.sign.public_key))));
          });

    // additive homomorphic scheme; plaintexts and ciphertexts as big-endian bytes
    py::class_<PyHEKeys>(m, "HEKeys")
        .def_property_readonly("n", [](const PyHEKeys& k) {
            return from_bytes(as_view(k.kp.pub.n.to_bytes()));
        });
    m.def("he_keygen",
          [](unsigned bits, std::uint64_t seed) { return PyHEKeys{crypto::he_keygen(bits, seed)}; });
    m.def("he_encrypt", [](const PyHEKeys& k, const py::bytes& m_be, std::uint64_t seed) {
        Rng rng(seed);
        crypto::HECiphertext c =
            crypto::he_encrypt(k.kp.pub, crypto::BigInt::from_bytes(as_view(to_bytes(m_be))), rng);
        return from_bytes(as_view(c.serialize()));
    });
    m.def("he_decrypt", [](const PyHEKeys& k, const py::bytes& ct) {
        crypto::HECiphertext c = crypto::HECiphertext::parse(as_view(to_bytes(ct)));
        return from_bytes(as_view(crypto::he_decrypt(k.kp.pub, k.kp.priv, c).to_bytes()));
    });
    m.def("he_add", [](const PyHEKeys& k, const py::bytes& a, const py::bytes& b) {
        crypto::HECiphertext ca = crypto::HECiphertext::parse(as_view(to_bytes(a)));
        crypto::HECiphertext cb = crypto::HECiphertext::parse(as_view(to_bytes(b)));
        return from_bytes(as_view(crypto::he_add(ca, cb, k.kp.pub).serialize()));
    });
    m.def("he_scale", [](const PyHEKeys& k, const py::bytes& a, std::int64_t scalar) {
        crypto::HECiphertext ca = crypto::HECiphertext::parse(as_view(to_bytes(a)));
        return from_bytes(as_view(crypto::he_scale(ca, crypto::BigInt(scalar), k.kp.pub).serialize()));
    });
    m.def("quantize", &crypto::quantize_signed);
    m.def("dequantize", &crypto::dequantize_signed);

    // scenario engine
    m.def(
        "run_scenario",
        [](const std::string& config_text, const std::optional<std::string>& out_dir) {
            std::istringstream in(config_text);
            netsim::ScenarioConfig cfg = netsim::ScenarioConfig::parse(in);
            netsim::Simulation sim(cfg);
            netsim::ScenarioReport r = sim.run_all();
            if (out_dir) sim.save_state(*out_dir);
            return summary_dict(r);
        },
        py::arg("config_text"), py::arg("out_dir") = std::nullopt);

    m.def("run_scenario_file",
          [](const std::string& config_path, const std::string& out_dir) {
              netsim::ScenarioConfig cfg = netsim::ScenarioConfig::load_file(config_path);
              netsim::Simulation sim(cfg);
              netsim::ScenarioReport r = sim.run_all();
              sim.save_state(out_dir);
              return summary_dict(r);
          });

    m.def("verify_chain_file", [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read " + path);
        ledger::Chain chain = ledger::parse_chain(in);
        ledger::VerifyResult r = ledger::verify_chain(chain);
        py::dict d;
        d["ok"] = r.ok;
        d["blocks"] = chain.size();
        if (!r.ok) {
            d["bad_index"] = r.bad_index;
            d["reason"] = r.reason;
        }
        return d;
    });

    m.def("audit_query_file",
          [](const std::string& journal_path, const std::string& model_hash_hex,
             std::int64_t before) {
              std::ifstream in(journal_path);
              if (!in) throw ConfigError("cannot read " + journal_path);
              std::vector<vault::AuditRecord> journal;
              std::string line;
              while (std::getline(in, line)) {
                  if (line.empty()) continue;
                  journal.push_back(vault::parse_audit_record(line));
              }
              std::vector<std::string> out;
              for (const Id16& id : vault::audit_query_records(
                       journal, hash32_from_hex(model_hash_hex), before))
                  out.push_back(to_hex(as_view(id)));
              return out;
          });
}

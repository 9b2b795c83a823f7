"""Smoke tests for the python module."""

import textwrap

import pytest

import tclearn

CONFIG = textwrap.dedent(
    """
    [scenario]
    partners = 4
    rounds = 4
    mode = A
    lambda = 0.95
    seed = 11
    batch_size = 40
    epochs = 4
    learning_rate = 0.3
    """
)


def test_sha256_known_vector():
    assert (
        tclearn.sha256(b"").hex()
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_signatures_round_trip():
    alice = tclearn.identity_from_seed(1)
    mallory = tclearn.identity_from_seed(2)
    sig = tclearn.sign(b"hello", alice)
    assert tclearn.verify(b"hello", sig, alice.sign_public)
    assert not tclearn.verify(b"hullo", sig, alice.sign_public)
    assert not tclearn.verify(b"hello", sig, mallory.sign_public)


def test_envelope_round_trip():
    alice = tclearn.identity_from_seed(3)
    bob = tclearn.identity_from_seed(4)
    wire = tclearn.seal_envelope(b"secret weights", bob, alice, seed=9)
    assert tclearn.open_envelope(wire, bob, alice) == b"secret weights"
    with pytest.raises(tclearn.CryptoError):
        tclearn.open_envelope(wire, alice, alice)


def test_homomorphic_addition():
    keys = tclearn.he_keygen(512, 42)
    ea = tclearn.he_encrypt(keys, 1234, seed=1)
    eb = tclearn.he_encrypt(keys, 8766, seed=2)
    assert tclearn.he_decrypt(keys, tclearn.he_add(keys, ea, eb)) == 10000
    scaled = tclearn.he_scale(keys, ea, 3)
    assert tclearn.he_decrypt(keys, scaled) == 3702


def test_quantization_round_trip():
    q = tclearn.quantize(1.5)
    assert abs(tclearn.dequantize(q) - 1.5) <= 2**-16


def test_scenario_runs_and_verifies(tmp_path):
    out = tmp_path / "out"
    report = tclearn.run_scenario(CONFIG, str(out))
    assert report["rounds_run"] == 4
    assert report["committed"] == 4
    assert report["chain_length"] == 5
    assert report["final_accuracy"] >= report["genesis_accuracy"]

    check = tclearn.verify_chain_file(str(out / "chain.txt"))
    assert check["ok"]
    assert check["blocks"] == 5


def test_scenario_determinism(tmp_path):
    a = tclearn.run_scenario(CONFIG)
    b = tclearn.run_scenario(CONFIG)
    assert a["head_hash"] == b["head_hash"]
    assert a["final_accuracy"] == b["final_accuracy"]


def test_bad_config_raises():
    with pytest.raises(tclearn.ConfigError):
        tclearn.run_scenario("partners = 1\n")


def test_audit_query(tmp_path):
    out = tmp_path / "out"
    tclearn.run_scenario(CONFIG, str(out))
    chain_line = (out / "chain.txt").read_text().splitlines()[0]
    genesis_model_hash = chain_line.split(" ")[3]
    fetchers = tclearn.audit_query_file(str(out / "audit.txt"), genesis_model_hash, 10**9)
    assert len(fetchers) >= 1  # round 0's contributor fetched the genesis model

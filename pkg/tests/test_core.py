from __future__ import annotations

import json

import numpy as np
import pytest

from feddct.core import (
    IID, ConfigError, RngStreams, SimConfig, Strategy, UnknownStream, derive_stream, load_config, validate,
)


def test_defaults_are_valid():
    cfg = validate(SimConfig())
    assert cfg.tier_size == 10
    assert cfg.strategy is Strategy.FEDDCT


@pytest.mark.parametrize("changes, field", [
    ({"num_tiers": 7}, "num_clients"),
    ({"tau": 11}, "tau"),
    ({"beta": 1.0}, "beta"),
    ({"omega_s": 0.0}, "omega_s"),
    ({"mu": 1.5}, "mu"),
    ({"noniid_fraction": 0.0}, "noniid_fraction"),
    ({"noniid_fraction": "skewed"}, "noniid_fraction"),
    ({"straggler_delay_range_s": (60.0, 30.0)}, "straggler_delay_range_s"),
    ({"base_delay_means_s": (5.0, 10.0, 15.0)}, "base_delay_means_s"),
    ({"base_delay_means_s": ()}, "base_delay_means_s"),
    ({"target_accuracy": 0.0}, "target_accuracy"),
    ({"rounds": 0}, "rounds"),
    ({"seed": -1}, "seed"),
    ({"kappa": 1.5}, "kappa"),
])
def test_invalid_fields_are_named(changes, field):
    with pytest.raises(ConfigError) as info:
        SimConfig().replace(**changes)
    assert info.value.field == field


def test_tau_message_mentions_tier_size():
    with pytest.raises(ConfigError, match="exceeds tier size"):
        SimConfig().replace(tau=11)


def test_straggler_range_above_omega_is_allowed():
    assert SimConfig().replace(straggler_delay_range_s=(40.0, 60.0)).omega_s == 30.0


def test_iid_flag():
    assert SimConfig(noniid_fraction=IID).is_iid
    assert not SimConfig().is_iid


def test_json_round_trip(tmp_path):
    cfg = SimConfig(strategy=Strategy.TIFL, mu=0.2, noniid_fraction=IID, seed=9)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    assert load_config(path).digest() == cfg.digest()


def test_partial_json_takes_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"strategy": "FedAvg", "seed": 4}))
    cfg = load_config(path)
    assert cfg == SimConfig(strategy=Strategy.FEDAVG, seed=4)


@pytest.mark.parametrize("text, field", [
    ("{not json", "<root>"),
    ('{"bogus": 1}', "bogus"),
    ('{"strategy": "FedProx"}', "strategy"),
    ("[1, 2]", "<root>"),
])
def test_bad_json(tmp_path, text, field):
    path = tmp_path / "c.json"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == field


def test_digest_changes_with_any_field():
    assert SimConfig().digest() != SimConfig(seed=1).digest()
    assert SimConfig().digest() == SimConfig().digest()


def test_stream_determinism_and_independence():
    a = derive_stream(42, "latency").random(100)
    assert np.array_equal(a, derive_stream(42, "latency").random(100))
    assert not np.array_equal(a, derive_stream(42, "selection").random(100))
    assert not np.array_equal(a, derive_stream(43, "latency").random(100))
    assert not np.array_equal(derive_stream(42, "latency", 1, 2).random(10), derive_stream(42, "latency", 2, 1).random(10))


def test_streams_do_not_perturb_each_other():
    streams = RngStreams(7)
    ref = streams.get("selection", 3).random(5)
    streams.get("latency", 3).random(1000)
    assert np.array_equal(ref, streams.selection(3).random(5))


def test_unknown_stream():
    with pytest.raises(UnknownStream):
        derive_stream(0, "weather")

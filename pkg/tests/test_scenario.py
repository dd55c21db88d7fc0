from __future__ import annotations

import json

import pytest

from xferenergy.netsim import LTE_POWER, WIFI_POWER, DEFAULT_IO_DRAIN_MBPS
from xferenergy.plan import TransferPlan
from xferenergy.scenario import builtin_scenarios, load_scenario, scenario_from_dict


def test_builtins_load():
    names = builtin_scenarios()
    assert {"sydney", "sydney-lte", "frankfurt", "chameleon"} <= set(names)
    for name in names:
        scen = load_scenario(name)
        assert scen.network.link_capacity_mbps > 0 and scen.rate_hz > 0
    assert load_scenario("sydney").power == WIFI_POWER
    assert load_scenario("sydney-lte").power == LTE_POWER


def test_yaml_and_json_files_agree(tmp_path):
    tree = {
        "network": {"link_capacity_mbps": 40, "rtt_s": 0.1, "tcp_buffer_bytes": 65536, "io_drain_mbps": {1024: 5, 4096: 8}},
        "power": {"profile": "lte", "tail_duration_s": 3.0},
        "plan": {"concurrency": 4, "parallelism": 2},
        "dataset": {"name": "IMAGE", "scale": 0.5},
        "rate_hz": 5,
    }
    (tmp_path / "s.json").write_text(json.dumps(tree))
    (tmp_path / "s.yaml").write_text(
        "network:\n  link_capacity_mbps: 40\n  rtt_s: 0.1\n  tcp_buffer_bytes: 65536\n"
        "  io_drain_mbps: {1024: 5, 4096: 8}\n"
        "power: {profile: lte, tail_duration_s: 3.0}\n"
        "plan: {concurrency: 4, parallelism: 2}\n"
        "dataset: {name: IMAGE, scale: 0.5}\n"
        "rate_hz: 5\n"
    )
    a, b = load_scenario(tmp_path / "s.json"), load_scenario(str(tmp_path / "s.yaml"))
    assert a == b
    assert a.power.tail_duration_s == 3.0 and a.power.p_radio_active_w == LTE_POWER.p_radio_active_w
    assert a.plan == TransferPlan(4, 2)
    assert a.network.io_drain(2048) == 5.0


def test_defaults_and_errors():
    scen = scenario_from_dict({"network": {"link_capacity_mbps": 10, "rtt_s": 0.05, "tcp_buffer_bytes": 1e6}})
    assert scen.power == WIFI_POWER
    assert scen.network.io_drain_mbps == DEFAULT_IO_DRAIN_MBPS
    with pytest.raises(ValueError):
        scenario_from_dict({"power": "wifi"})
    with pytest.raises(FileNotFoundError):
        load_scenario("atlantis")
    with pytest.raises(KeyError):
        scenario_from_dict({"network": {"link_capacity_mbps": 10, "rtt_s": 0.05, "tcp_buffer_bytes": 1e6}, "power": "5g"})

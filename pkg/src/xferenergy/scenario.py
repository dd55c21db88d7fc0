"""Scenario files: network, power, default plan and dataset in one YAML/JSON tree."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .netsim import BUILTIN_POWER, DEFAULT_IO_DRAIN_MBPS, DEFAULT_RATE_HZ, DevicePowerModel, NetworkConfig
from .plan import TransferPlan


@dataclass(frozen=True)
class DatasetRef:
    name: str = "HTML"
    scale: float = 1.0
    seed: int = 7


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkConfig
    power: DevicePowerModel
    plan: TransferPlan = field(default_factory=TransferPlan)
    dataset: DatasetRef = field(default_factory=DatasetRef)
    rate_hz: float = DEFAULT_RATE_HZ


def builtin_scenarios() -> list[str]:
    files = resources.files("xferenergy").joinpath("scenarios").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".yaml"))


def _power(node: Any) -> DevicePowerModel:
    if node is None:
        return BUILTIN_POWER["wifi"]
    if isinstance(node, str):
        return BUILTIN_POWER[node.lower()]
    node = dict(node)
    base = BUILTIN_POWER[str(node.pop("profile", node.get("radio_kind", "wifi"))).lower()]
    merged = {**base.__dict__, **node}
    return DevicePowerModel(**merged)


def _network(node: dict) -> NetworkConfig:
    node = dict(node)
    drain = node.pop("io_drain_mbps", None)
    table = DEFAULT_IO_DRAIN_MBPS if drain is None else tuple((int(k), float(v)) for k, v in drain.items())
    return NetworkConfig(io_drain_mbps=table, **node)


def scenario_from_dict(tree: dict, name: str = "custom") -> Scenario:
    if "network" not in tree:
        raise ValueError("scenario needs a 'network' block")
    return Scenario(
        name=tree.get("name", name),
        network=_network(tree["network"]),
        power=_power(tree.get("power")),
        plan=TransferPlan(**tree.get("plan", {})),
        dataset=DatasetRef(**tree.get("dataset", {})),
        rate_hz=float(tree.get("rate_hz", DEFAULT_RATE_HZ)),
    )


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a file path, or by builtin name (e.g. ``sydney``)."""
    path = Path(ref)
    if path.suffix in (".yaml", ".yml", ".json") and path.exists():
        text = path.read_text(encoding="utf-8")
        tree = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        return scenario_from_dict(tree, path.stem)
    res = resources.files("xferenergy").joinpath("scenarios", f"{ref}.yaml")
    if not res.is_file():
        raise FileNotFoundError(f"no scenario file {ref!r} and no builtin of that name ({builtin_scenarios()})")
    return scenario_from_dict(yaml.safe_load(res.read_text(encoding="utf-8")), str(ref))

"""Experiment configuration: one JSON document plus dotted-path overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterable

from .engine import AdeleParams, EnergyModel, SimConfig
from .optimizer import AmosaConfig, load_archive, pick_solution
from .selection import ElevatorAssignment
from .topology import Topology, load_topology
from .traffic import TrafficSource

DEFAULTS: dict[str, Any] = {
    "topology": "p_s1",
    "traffic": "uniform",
    "pir": 0.01,
    "packet_length": [10, 30],
    "policy": "adele",
    "policies": ["nearest", "cda", "adele"],
    "rates": [0.001, 0.02, 0.04, 0.06, 0.08],
    "adele": {"a": 0.2, "xi": 0.05, "threshold": 0.5, "no_skip": False},
    "warmup": 10_000,
    "cycles": 100_000,
    "drain": 20_000,
    "seed": 1,
    "energy": {"e_router": 0.8, "e_link": 0.4, "e_tsv": 0.2},
    "amosa": {"t_initial": 100.0, "t_final": 0.01, "cooling_ratio": 0.95, "iterations_per_temp": 200,
              "hard_limit": 20, "soft_limit": 60, "subset_size_range": None, "seed": 0},
    "strategy": "min_variance",
    "assignment": None,
    "placement": {"dims": [4, 4, 4], "elevators": 3},
    "jobs": 1,
}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ValueError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(raw)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        user = json.loads(Path(path).read_text())
        _merge(cfg, user)
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def _merge(base: dict, extra: dict) -> None:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def topology_of(cfg: dict) -> Topology:
    return load_topology(cfg["topology"])


def traffic_of(cfg: dict, rate: float | None = None) -> TrafficSource:
    return TrafficSource.parse(cfg["traffic"], cfg["pir"] if rate is None else rate, tuple(cfg["packet_length"]))


def amosa_of(cfg: dict) -> AmosaConfig:
    a = dict(cfg["amosa"])
    if a.get("subset_size_range") is not None:
        a["subset_size_range"] = tuple(a["subset_size_range"])
    return AmosaConfig(**a)


def assignment_from_ref(ref: Any, strategy: str) -> ElevatorAssignment:
    """Explicit subsets, an assignment.json file, or an archive.json file."""
    if isinstance(ref, list):
        return ElevatorAssignment(ref)
    doc = json.loads(Path(ref).read_text())
    if isinstance(doc, dict) and "subsets" in doc:
        return ElevatorAssignment(doc["subsets"])
    if isinstance(doc, list) and doc and isinstance(doc[0], dict):
        return pick_solution(load_archive(ref), strategy).assignment
    return ElevatorAssignment(doc)


def sim_config(cfg: dict, policy: str, assignment: ElevatorAssignment | None, rate: float | None = None,
               seed: int | None = None) -> SimConfig:
    return SimConfig(
        topology=topology_of(cfg),
        traffic=traffic_of(cfg, rate),
        policy=policy,
        assignment=assignment if policy in ("rr", "adele") else None,
        adele=AdeleParams(**cfg["adele"]),
        warmup_cycles=int(cfg["warmup"]),
        measure_cycles=int(cfg["cycles"]),
        drain_cycles=int(cfg["drain"]),
        seed=int(cfg["seed"] if seed is None else seed),
        energy=EnergyModel(**cfg["energy"]),
    )


def with_rate(sim: SimConfig, rate: float) -> SimConfig:
    return replace(sim, traffic=replace(sim.traffic, injection_rate=rate))

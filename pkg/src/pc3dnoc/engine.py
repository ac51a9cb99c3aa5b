"""Cycle-level wormhole simulation of a partially connected 3D mesh.

Routers have a one-cycle pipeline, two VCs per port (one per virtual
network) with 4-flit buffers, credit-checked forwarding and round-robin
output arbitration. Per-packet latency runs from packet creation to the
cycle its tail is ejected, inclusive; a contention-free packet therefore
takes ``hops + length`` cycles.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernel
from .routing import OPPOSITE, neighbor_table, route_table
from .selection import DEFAULT_A, DEFAULT_THRESHOLD, DEFAULT_XI, POLICIES, ElevatorAssignment
from .topology import Topology, nearest_elevator
from .traffic import TrafficSource, generate_schedule

log = logging.getLogger(__name__)

BUFFER_DEPTH = 4
_POLICY_CODE = {"nearest": _kernel.POLICY_NEAREST, "rr": _kernel.POLICY_RR,
                "adele": _kernel.POLICY_ADELE, "cda": _kernel.POLICY_CDA}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyModel:
    e_router: float = 0.8
    e_link: float = 0.4
    e_tsv: float = 0.2

    def __post_init__(self):
        if min(self.e_router, self.e_link, self.e_tsv) < 0:
            raise ValueError("energy coefficients must be nonnegative")

    def packet_energy(self, length: int, h_hops: int, v_hops: int) -> float:
        return length * ((h_hops + v_hops + 1) * self.e_router + h_hops * self.e_link + v_hops * self.e_tsv)


@dataclass(frozen=True)
class AdeleParams:
    a: float = DEFAULT_A
    xi: float = DEFAULT_XI
    threshold: float = DEFAULT_THRESHOLD
    no_skip: bool = False  # forces every skip probability to 0 (testing aid)


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    traffic: TrafficSource
    policy: str = "nearest"
    assignment: ElevatorAssignment | None = None
    adele: AdeleParams = AdeleParams()
    warmup_cycles: int = 10_000
    measure_cycles: int = 100_000
    drain_cycles: int = 20_000
    seed: int = 1
    energy: EnergyModel = EnergyModel()
    check_invariants: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.measure_cycles <= 0:
            raise ValueError("measure_cycles must be positive")
        if self.warmup_cycles < 0 or self.drain_cycles < 0:
            raise ValueError("warmup/drain cycles must be nonnegative")
        needs = self.policy in ("rr", "adele")
        if needs and self.assignment is None:
            raise ValueError(f"policy {self.policy!r} needs an elevator assignment")
        if not needs and self.assignment is not None:
            raise ValueError(f"policy {self.policy!r} does not take an elevator assignment")
        if self.assignment is not None:
            self.assignment.validate(self.topology)

    def describe(self) -> dict:
        """Fully resolved, JSON-serialisable view of the configuration."""
        return {
            "topology": self.topology.to_dict(),
            "traffic": {"kind": self.traffic.kind, "injection_rate": self.traffic.injection_rate,
                        "packet_length_range": list(self.traffic.packet_length_range),
                        "trace_path": self.traffic.trace_path},
            "policy": self.policy,
            "assignment": None if self.assignment is None else self.assignment.to_json(),
            "adele": asdict(self.adele),
            "warmup_cycles": self.warmup_cycles,
            "measure_cycles": self.measure_cycles,
            "drain_cycles": self.drain_cycles,
            "seed": self.seed,
            "energy": asdict(self.energy),
        }


@dataclass
class SimMetrics:
    avg_latency: float
    injected: int
    delivered: int
    delivered_flits: int
    throughput: float  # accepted flits / node / cycle over the window
    energy_total: float
    energy_per_flit: float
    elevator_flits: list[int]
    elevator_packets: list[int]
    router_flits: list[int]
    minimal_path_fraction: float
    cycles_run: int
    violations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class SimResult:
    """Metrics plus the raw per-packet and per-cycle traces of one run."""

    config: SimConfig
    metrics: SimMetrics
    packet_src: np.ndarray
    packet_dst: np.ndarray
    packet_len: np.ndarray
    packet_created: np.ndarray
    packet_elevator: np.ndarray
    packet_head_left: np.ndarray
    packet_delivered: np.ndarray
    packet_h_hops: np.ndarray
    packet_v_hops: np.ndarray
    cycle_injected_flits: np.ndarray
    cycle_delivered_packets: np.ndarray

    def latencies(self, measured_only: bool = True) -> np.ndarray:
        done = self.packet_delivered >= 0
        if measured_only:
            done &= self._measured_mask()
        return self.packet_delivered[done] - self.packet_created[done] + 1

    def _measured_mask(self) -> np.ndarray:
        w = self.config.warmup_cycles
        return (self.packet_created >= w) & (self.packet_created < w + self.config.measure_cycles)


_STATIC_CACHE: dict = {}


def _static_tables(topology: Topology):
    key = (topology.dims, topology.elevators)
    if key not in _STATIC_CACHE:
        el = np.asarray(topology.elevators, dtype=np.int64).reshape(-1, 2)
        elev_of_node = np.full(topology.N, -1, dtype=np.int64)
        nearest = np.zeros(topology.N, dtype=np.int64)
        for r in range(topology.N):
            c = topology.coord(r)
            e = topology.elevator_at(c.x, c.y)
            elev_of_node[r] = -1 if e is None else e
            nearest[r] = nearest_elevator(topology, c)
        _STATIC_CACHE[key] = (
            topology.coords_array().astype(np.int64),
            neighbor_table(topology),
            np.array([int(p) for p in OPPOSITE], dtype=np.int64),
            route_table(topology),
            elev_of_node,
            el,
            nearest,
        )
    return _STATIC_CACHE[key]


def run(config: SimConfig) -> SimResult:
    topo = config.topology
    coords, nbr, opposite, rtab, elev_of_node, el, nearest = _static_tables(topo)
    total = config.warmup_cycles + config.measure_cycles + config.drain_cycles
    rng = np.random.default_rng(config.seed)
    sched = generate_schedule(config.traffic, topo, total, rng)
    order = np.argsort(sched.src, kind="stable")
    node_start = np.searchsorted(sched.src[order], np.arange(topo.N + 1)).astype(np.int64)

    if config.assignment is not None:
        members, sizes = config.assignment.padded()
    else:
        members, sizes = np.zeros((topo.N, 1), np.int64), np.ones(topo.N, np.int64)
    ad = config.adele
    xi = 1.0 if ad.no_skip else ad.xi
    kernel_seed = int(np.random.SeedSequence(config.seed).generate_state(1, np.uint64)[0])

    out = _kernel.simulate_kernel(
        coords, nbr, opposite, rtab, elev_of_node, el, topo.layer_size, topo.X,
        _POLICY_CODE[config.policy], nearest, members, sizes, float(ad.a), float(xi), float(ad.threshold),
        sched.src, sched.dst, sched.length, sched.cycle, node_start, order.astype(np.int64),
        config.warmup_cycles, config.measure_cycles, config.drain_cycles, BUFFER_DEPTH,
        np.uint64(kernel_seed), config.check_invariants,
    )
    (status, cycles_run, pkt_elev, _start, t_head, deliver, h, v, minimal,
     router_flits, elev_flits, elev_packets, cyc_inj, cyc_del, violations, _costs) = out
    if status == _kernel.ERR_ROUTE:
        raise SimulationError(f"routing produced a missing link (cycle {cycles_run})")
    if status == _kernel.ERR_OWNERSHIP:
        raise SimulationError(f"wormhole ownership corrupted (cycle {cycles_run})")

    w0, w1 = config.warmup_cycles, config.warmup_cycles + config.measure_cycles
    measured = (sched.cycle >= w0) & (sched.cycle < w1)
    done = measured & (deliver >= 0)
    lat = deliver[done] - sched.cycle[done] + 1
    lengths = sched.length[done]
    em = config.energy
    energy = float(np.sum(lengths * ((h[done] + v[done] + 1) * em.e_router + h[done] * em.e_link
                                     + v[done] * em.e_tsv)))
    n_flits = int(lengths.sum())
    inter = measured & (sched.src // topo.layer_size != sched.dst // topo.layer_size) & (pkt_elev >= 0)
    metrics = SimMetrics(
        avg_latency=float(lat.mean()) if len(lat) else 0.0,
        injected=int(measured.sum()),
        delivered=int(done.sum()),
        delivered_flits=n_flits,
        throughput=float(np.sum(sched.length[(deliver >= w0) & (deliver < w1)])) / (topo.N * config.measure_cycles),
        energy_total=energy,
        energy_per_flit=energy / n_flits if n_flits else 0.0,
        elevator_flits=[int(x) for x in elev_flits],
        elevator_packets=[int(x) for x in elev_packets],
        router_flits=[int(x) for x in router_flits],
        minimal_path_fraction=float(minimal[inter].mean()) if inter.any() else 0.0,
        cycles_run=int(cycles_run),
        violations={"conservation": int(violations[0]), "order": int(violations[1]),
                    "credit": int(violations[2]), "ownership": int(violations[3])},
    )
    return SimResult(config, metrics, sched.src, sched.dst, sched.length, sched.cycle, pkt_elev,
                     t_head, deliver, h, v, cyc_inj[:cycles_run], cyc_del[:cycles_run])


def simulate(config: SimConfig) -> SimMetrics:
    return run(config).metrics


# ---------------------------------------------------------------------------
# experiments


@dataclass
class SweepResult:
    rates: list[float]
    metrics: list[SimMetrics]
    zero_load_latency: float
    saturation_rate: float | None

    def rows(self) -> list[dict]:
        return [{"rate": r, "avg_latency": m.avg_latency, "energy_per_flit": m.energy_per_flit,
                 "throughput": m.throughput, "delivered": m.delivered, "injected": m.injected}
                for r, m in zip(self.rates, self.metrics)]


SATURATION_FACTOR = 10.0


def saturation_rate(rates: Sequence[float], latencies: Sequence[float], zero_load: float) -> float | None:
    """First rate whose latency exceeds ten times the zero-load latency."""
    for r, lat in zip(rates, latencies):
        if lat > SATURATION_FACTOR * zero_load:
            return r
    return None


def latency_sweep(config: SimConfig, injection_rates: Sequence[float], runner=None,
                  stop_at_saturation: bool = False) -> SweepResult:
    """Independent runs per rate (seed offset by the rate's index).

    With ``stop_at_saturation`` the rates are run in order and the sweep ends
    at the first saturated one; ``runner`` is ignored in that mode.
    """
    rates = [float(r) for r in injection_rates]
    if not rates or any(r <= 0 for r in rates) or rates != sorted(rates):
        raise ValueError("injection rates must be positive and ascending")
    configs = [replace(config, traffic=replace(config.traffic, injection_rate=r), seed=config.seed + i)
               for i, r in enumerate(rates)]
    if stop_at_saturation:
        metrics = [simulate(configs[0])]
        for cfg in configs[1:]:
            if metrics[-1].avg_latency > SATURATION_FACTOR * metrics[0].avg_latency:
                break
            metrics.append(simulate(cfg))
        rates = rates[:len(metrics)]
    else:
        metrics = list((runner or map)(simulate, configs))
    zero = metrics[0].avg_latency
    return SweepResult(rates, metrics, zero, saturation_rate(rates, [m.avg_latency for m in metrics], zero))


def load_distribution(metrics: SimMetrics, topology: Topology) -> dict:
    """Per-router forwarded flits, elevator routers normalised to the rest.

    Returns ``{"normalized": bool, "router_load": [...], "elevator_load": {e: [...]}}``
    where ``elevator_load[e]`` lists the (normalised) loads of the routers on
    elevator column ``e`` from the bottom layer up.
    """
    loads = np.asarray(metrics.router_flits, dtype=np.float64)
    c = topology.coords_array()
    on_column = np.array([topology.elevator_at(int(x), int(y)) is not None for x, y, _ in c])
    base = loads[~on_column]
    ref = float(base.mean()) if base.size else 0.0
    normalized = ref > 0
    scaled = loads / ref if normalized else loads
    per_elev = {}
    for e, (x, y) in enumerate(topology.elevators):
        ids = [topology.node_id((x, y, z)) for z in range(topology.L)]
        per_elev[e] = [float(scaled[i]) for i in ids]
    return {"normalized": normalized, "reference_load": ref,
            "router_load": [float(v) for v in scaled], "elevator_load": per_elev}


def max_elevator_load(metrics: SimMetrics, topology: Topology) -> float:
    """Largest normalised load among routers that sit on an elevator column."""
    dist = load_distribution(metrics, topology)
    return max(max(v) for v in dist["elevator_load"].values())


def elevator_load_variance(metrics: SimMetrics) -> float:
    """Population variance of per-elevator vertical flit traversals."""
    f = np.asarray(metrics.elevator_flits, dtype=np.float64)
    return float(np.mean((f - f.mean()) ** 2))

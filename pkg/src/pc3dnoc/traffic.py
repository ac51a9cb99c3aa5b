"""Traffic sources: synthetic uniform / shuffle patterns and trace replay.

Injection is a Bernoulli process per node per cycle. A packet is generated
with probability ``injection_rate / mean_packet_length`` so the offered load
is ``injection_rate`` flits per node per cycle.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .topology import Topology

KINDS = ("uniform", "shuffle", "trace")


class TraceExhausted(Exception):
    """Every record of a trace has been replayed."""


class PacketDescriptor(NamedTuple):
    dst: int
    length: int
    cycle: int


class TraceRecord(NamedTuple):
    src: int
    dst: int
    length: int
    cycle: int


@dataclass(frozen=True)
class TrafficSource:
    kind: str = "uniform"
    injection_rate: float = 0.01
    packet_length_range: tuple[int, int] = (10, 30)
    trace_path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown traffic kind {self.kind!r}")
        lo, hi = self.packet_length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad packet length range {self.packet_length_range}")
        if self.kind == "trace":
            if self.trace_path is None:
                raise ValueError("trace traffic needs trace_path")
        elif not self.injection_rate >= 0:
            raise ValueError("injection_rate must be nonnegative")

    @property
    def mean_packet_length(self) -> float:
        lo, hi = self.packet_length_range
        return (lo + hi) / 2

    @property
    def packet_probability(self) -> float:
        return min(1.0, self.injection_rate / self.mean_packet_length)

    @classmethod
    def parse(cls, spec: str, pir: float = 0.01, packet_length_range=(10, 30)) -> "TrafficSource":
        """Build from a CLI string: ``uniform``, ``shuffle`` or ``trace:<path>``."""
        if spec.startswith("trace:"):
            return cls("trace", pir, tuple(packet_length_range), spec[len("trace:"):])
        return cls(spec, pir, tuple(packet_length_range))

    def label(self) -> str:
        return f"trace:{self.trace_path}" if self.kind == "trace" else self.kind


def shuffle_destination(src: int, n_nodes: int) -> int:
    """Rotate the ``ceil(log2 N)``-bit node id left by one bit.

    Returns -1 when the rotation maps a node onto itself or outside the
    network (only possible when N is not a power of two).
    """
    bits = max(1, math.ceil(math.log2(n_nodes)))
    mask = (1 << bits) - 1
    dst = ((src << 1) | (src >> (bits - 1))) & mask
    if dst == src or dst >= n_nodes:
        return -1
    return dst


def read_trace(path: str | Path) -> list[TraceRecord]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"src", "dst", "length", "cycle"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: trace header lacks {sorted(missing)}")
            records = [
                TraceRecord(int(r["src"]), int(r["dst"]), int(r["length"]), int(r["cycle"]))
                for r in reader
            ]
    except OSError as exc:
        raise ValueError(f"cannot read trace {path}: {exc}") from exc
    for prev, cur in zip(records, records[1:]):
        if cur.cycle < prev.cycle:
            raise ValueError(f"{path}: cycles must be nondecreasing ({prev.cycle} then {cur.cycle})")
    return records


def write_trace(path: str | Path, records) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "length", "cycle"])
        for r in records:
            w.writerow([r[0], r[1], r[2], r[3]])


class TrafficGenerator:
    """Per-simulation packet generator; one call per node per cycle."""

    def __init__(self, source: TrafficSource, topology: Topology):
        self.source = source
        self.n_nodes = topology.N
        self._pending: dict[int, deque] | None = None
        self._remaining = 0
        if source.kind == "trace":
            self._pending = {}
            for rec in read_trace(source.trace_path):
                _check_record(rec, self.n_nodes)
                self._pending.setdefault(rec.src, deque()).append(rec)
                self._remaining += 1

    def next_packet(self, node: int, cycle: int, rng: np.random.Generator) -> PacketDescriptor | None:
        src = self.source
        if src.kind == "trace":
            if self._remaining == 0:
                raise TraceExhausted()
            queue = self._pending.get(node)
            if queue and queue[0].cycle <= cycle:
                rec = queue.popleft()
                self._remaining -= 1
                return PacketDescriptor(rec.dst, rec.length, rec.cycle)
            return None

        if rng.random() >= src.packet_probability:
            return None
        lo, hi = src.packet_length_range
        if src.kind == "uniform":
            dst = int(rng.integers(0, self.n_nodes - 1))
            if dst >= node:
                dst += 1
        else:
            dst = shuffle_destination(node, self.n_nodes)
            if dst < 0:
                return None
        length = int(rng.integers(lo, hi + 1))
        return PacketDescriptor(dst, length, cycle)


def next_packet(source: TrafficSource, node: int, cycle: int, rng: np.random.Generator,
                topology: Topology) -> PacketDescriptor | None:
    """Stateless convenience wrapper for the synthetic kinds."""
    if source.kind == "trace":
        raise ValueError("trace replay is stateful; use TrafficGenerator")
    return TrafficGenerator(source, topology).next_packet(node, cycle, rng)


def _check_record(rec: TraceRecord, n_nodes: int) -> None:
    if not (0 <= rec.src < n_nodes and 0 <= rec.dst < n_nodes):
        raise ValueError(f"trace record {rec} references a router outside [0, {n_nodes})")
    if rec.src == rec.dst:
        raise ValueError(f"trace record {rec} has src == dst")
    if rec.length < 2:
        raise ValueError(f"trace record {rec} is shorter than 2 flits")


@dataclass
class Schedule:
    """Packets sorted by (creation cycle, source)."""

    src: np.ndarray
    dst: np.ndarray
    length: np.ndarray
    cycle: np.ndarray

    def __len__(self) -> int:
        return len(self.src)


def generate_schedule(source: TrafficSource, topology: Topology, n_cycles: int,
                      rng: np.random.Generator) -> Schedule:
    """Whole-run packet schedule for cycles ``[0, n_cycles)``.

    Synthetic kinds use geometric inter-arrival gaps, which is the same
    Bernoulli-per-cycle process as repeated :meth:`TrafficGenerator.next_packet`
    calls but vectorised.
    """
    N = topology.N
    if source.kind == "trace":
        recs = [r for r in read_trace(source.trace_path) if r.cycle < n_cycles]
        for r in recs:
            _check_record(r, N)
        recs.sort(key=lambda r: (r.cycle, r.src))
        arr = np.array(recs, dtype=np.int64).reshape(-1, 4)
        return Schedule(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy())

    p = source.packet_probability
    cycles, srcs = [], []
    for node in range(N):
        t = _arrival_times(p, n_cycles, rng)
        cycles.append(t)
        srcs.append(np.full(len(t), node, dtype=np.int64))
    cycle = np.concatenate(cycles) if cycles else np.zeros(0, np.int64)
    src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
    order = np.lexsort((src, cycle))
    cycle, src = cycle[order], src[order]

    lo, hi = source.packet_length_range
    if source.kind == "uniform":
        dst = rng.integers(0, N - 1, size=len(src))
        dst = dst + (dst >= src)
    else:
        table = np.array([shuffle_destination(i, N) for i in range(N)], dtype=np.int64)
        dst = table[src]
        keep = dst >= 0
        cycle, src, dst = cycle[keep], src[keep], dst[keep]
    length = rng.integers(lo, hi + 1, size=len(src))
    return Schedule(src.astype(np.int64), dst.astype(np.int64), length.astype(np.int64), cycle.astype(np.int64))


def _arrival_times(p: float, n_cycles: int, rng: np.random.Generator) -> np.ndarray:
    if p <= 0 or n_cycles <= 0:
        return np.zeros(0, dtype=np.int64)
    chunk = int(n_cycles * p * 1.1) + 16
    times = []
    last = -1
    while True:
        gaps = rng.geometric(p, size=chunk)
        t = last + np.cumsum(gaps)
        times.append(t)
        last = int(t[-1])
        if last >= n_cycles:
            break
    t = np.concatenate(times)
    return t[t < n_cycles].astype(np.int64)


def frequency_matrix(source: TrafficSource, topology: Topology) -> np.ndarray:
    """Pairwise flow weights f_ij (zero diagonal)."""
    N = topology.N
    f = np.zeros((N, N), dtype=np.float64)
    if source.kind == "uniform":
        f[:] = 1.0
        np.fill_diagonal(f, 0.0)
    elif source.kind == "shuffle":
        for i in range(N):
            j = shuffle_destination(i, N)
            if j >= 0:
                f[i, j] = 1.0
    else:
        counts = Counter()
        for rec in read_trace(source.trace_path):
            _check_record(rec, N)
            counts[(rec.src, rec.dst)] += 1
        for (i, j), n in counts.items():
            f[i, j] = n
    return f


def validate_traffic_matrix(f: np.ndarray, topology: Topology) -> None:
    N = topology.N
    if f.shape != (N, N):
        raise ValueError(f"traffic matrix shape {f.shape} does not match {N} routers")
    if np.any(f < 0):
        raise ValueError("traffic matrix has negative entries")
    if np.any(np.diag(f) != 0):
        raise ValueError("traffic matrix diagonal must be zero")
    z = topology.coords_array()[:, 2]
    if not np.any(f[z[:, None] != z[None, :]] > 0):
        raise ValueError("traffic matrix has no inter-layer flow")

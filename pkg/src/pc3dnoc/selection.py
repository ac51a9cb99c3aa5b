"""Elevator-selection policies.

``adele`` keeps, per source router, a smoothed blocking cost for each
elevator in its subset and walks the subset round-robin, skipping expensive
elevators with a probability that grows with their share of the total cost.
When every cost is below a threshold it simply takes the elevator on the
shortest source-elevator-destination path.

The scalar kernels below are numba-compiled so that the simulation engine
calls exactly the same code as the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .topology import Topology, elevator_path_distance, nearest_elevator

POLICIES = ("nearest", "rr", "adele", "cda")
DEFAULT_A = 0.2
DEFAULT_XI = 0.05
DEFAULT_THRESHOLD = 0.5
DRAW_CAP_FACTOR = 10


class ElevatorAssignment:
    """Per-router elevator subsets A_i (each sorted, non-empty, unique)."""

    __slots__ = ("subsets",)

    def __init__(self, subsets: Sequence[Sequence[int]]):
        self.subsets = tuple(tuple(sorted(int(e) for e in s)) for s in subsets)

    def __len__(self) -> int:
        return len(self.subsets)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.subsets[i]

    def __iter__(self):
        return iter(self.subsets)

    def __eq__(self, other) -> bool:
        return isinstance(other, ElevatorAssignment) and self.subsets == other.subsets

    def __hash__(self) -> int:
        return hash(self.subsets)

    def __repr__(self) -> str:
        return f"ElevatorAssignment({list(map(list, self.subsets))})"

    def validate(self, topology: Topology) -> None:
        if len(self.subsets) != topology.N:
            raise ValueError(f"assignment covers {len(self.subsets)} routers, topology has {topology.N}")
        for i, s in enumerate(self.subsets):
            if not s:
                raise ValueError(f"router {i} has an empty elevator subset")
            if len(set(s)) != len(s):
                raise ValueError(f"router {i} subset {s} repeats an elevator")
            if s[0] < 0 or s[-1] >= topology.E:
                raise ValueError(f"router {i} subset {s} references a missing elevator")

    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.subsets], dtype=np.int64)

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """(members[N, max_size] padded with -1, sizes[N]) for array code."""
        sizes = self.sizes()
        out = np.full((len(self.subsets), int(sizes.max())), -1, dtype=np.int64)
        for i, s in enumerate(self.subsets):
            out[i, :len(s)] = s
        return out, sizes

    def to_json(self) -> list:
        return [list(s) for s in self.subsets]

    @classmethod
    def nearest(cls, topology: Topology) -> "ElevatorAssignment":
        """Elevator-First singletons: every router uses its closest elevator."""
        return cls([(nearest_elevator(topology, topology.coord(i)),) for i in range(topology.N)])

    @classmethod
    def full(cls, topology: Topology) -> "ElevatorAssignment":
        return cls([tuple(range(topology.E))] * topology.N)


class SelectionCostSample(NamedTuple):
    t_head: int
    t_tail: int
    l_p: int


@njit(cache=True)
def latency_cost(t_head, t_tail, l_p):
    return (t_tail - t_head - l_p) / l_p


@njit(cache=True)
def smoothed_cost(old, sample, a):
    return a * sample + (1.0 - a) * old


@njit(cache=True)
def relative_costs(costs):
    n = costs.shape[0]
    out = np.empty(n)
    total = 0.0
    for k in range(n):
        total += costs[k]
    if total <= 0.0:
        for k in range(n):
            out[k] = 1.0 / n
    else:
        for k in range(n):
            out[k] = costs[k] / total
    return out


@njit(cache=True)
def skip_probability_value(c_rel, n, xi):
    if c_rel >= 2.0 / n:
        return 1.0 - xi
    if c_rel >= 1.0 / n:
        return n * (c_rel - 1.0 / n) * (1.0 - xi)
    return 0.0


@njit(cache=True)
def adele_pick(members, costs, dists, ptr, uniforms, xi, threshold):
    """Core of the adaptive choice.

    ``members``/``costs``/``dists`` are aligned over the subset; ``uniforms``
    holds the pre-drawn skip variates (``DRAW_CAP_FACTOR * n`` of them).
    Returns (position in subset, new rr pointer, used_minimal_path).
    """
    n = members.shape[0]
    if n == 1:
        return 0, 0, False
    cmax = costs[0]
    for k in range(1, n):
        if costs[k] > cmax:
            cmax = costs[k]
    if cmax < threshold:
        best = 0
        for k in range(1, n):
            if dists[k] < dists[best] or (dists[k] == dists[best] and members[k] < members[best]):
                best = k
        return best, ptr, True
    rel = relative_costs(costs)
    for d in range(uniforms.shape[0]):
        k = ptr
        ptr = (ptr + 1) % n
        if uniforms[d] >= skip_probability_value(rel[k], n, xi):
            return k, ptr, False
    # draw cap reached: plain round-robin
    k = ptr
    return k, (ptr + 1) % n, False


@njit(cache=True)
def cda_pick(sx, sy, layer_base, X, elev_xy, occupancy):
    """Elevator with the least buffered flits along the XY path from the source.

    ``occupancy`` is indexed by router id; the path includes both endpoints.
    Ties go to the shorter path, then the lower elevator id.
    """
    best = -1
    best_occ = 0
    best_len = 0
    for e in range(elev_xy.shape[0]):
        ex = elev_xy[e, 0]
        ey = elev_xy[e, 1]
        x = sx
        y = sy
        total = occupancy[layer_base + y * X + x]
        while x != ex:
            x += 1 if ex > x else -1
            total += occupancy[layer_base + y * X + x]
        while y != ey:
            y += 1 if ey > y else -1
            total += occupancy[layer_base + y * X + x]
        length = abs(ex - sx) + abs(ey - sy)
        if best < 0 or total < best_occ or (total == best_occ and length < best_len):
            best = e
            best_occ = total
            best_len = length
    return best


@dataclass
class SelectorState:
    """Selection state of one source router."""

    members: list[int]
    a: float = DEFAULT_A
    xi: float = DEFAULT_XI
    minimal_threshold: float = DEFAULT_THRESHOLD
    rr_pointer: int = 0
    costs: np.ndarray = field(default=None)

    def __post_init__(self):
        self.members = [int(m) for m in self.members]
        if not self.members:
            raise ValueError("elevator subset must be non-empty")
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"duplicate elevators in subset {self.members}")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"smoothing coefficient a={self.a} outside [0, 1]")
        if not 0.0 <= self.xi < 1.0:
            raise ValueError(f"xi={self.xi} outside [0, 1)")
        if self.costs is None:
            self.costs = np.zeros(len(self.members))
        else:
            self.costs = np.asarray(self.costs, dtype=np.float64)
            if self.costs.shape != (len(self.members),) or np.any(self.costs < 0):
                raise ValueError("costs must be one nonnegative value per subset member")

    def position(self, k: int) -> int:
        try:
            return self.members.index(k)
        except ValueError:
            raise ValueError(f"elevator {k} is not in subset {self.members}") from None


def selection_latency(sample: SelectionCostSample) -> float:
    t_head, t_tail, l_p = sample
    if l_p <= 0 or t_tail < t_head + l_p:
        raise ValueError(f"inconsistent cost sample {sample}")
    return latency_cost(t_head, t_tail, l_p)


def update_cost(state: SelectorState, k: int, T: float) -> float:
    pos = state.position(k)
    state.costs[pos] = smoothed_cost(state.costs[pos], T, state.a)
    return float(state.costs[pos])


def relative_cost(state: SelectorState, k: int) -> float:
    return float(relative_costs(state.costs)[state.position(k)])


def skip_probability(state: SelectorState, k: int) -> float:
    return float(skip_probability_value(relative_cost(state, k), len(state.members), state.xi))


def select_adele(state: SelectorState, src: Sequence[int], dst: Sequence[int],
                 topology: Topology, rng: np.random.Generator) -> int:
    n = len(state.members)
    members = np.asarray(state.members, dtype=np.int64)
    dists = np.array([elevator_path_distance(topology, src, dst, e) for e in state.members], dtype=np.int64)
    uniforms = rng.random(DRAW_CAP_FACTOR * n)
    pos, state.rr_pointer, _ = adele_pick(members, state.costs, dists, state.rr_pointer,
                                          uniforms, state.xi, state.minimal_threshold)
    return state.members[pos]


def select_rr(state: SelectorState) -> int:
    k = state.members[state.rr_pointer]
    state.rr_pointer = (state.rr_pointer + 1) % len(state.members)
    return k


def select_nearest(src: Sequence[int], topology: Topology) -> int:
    return nearest_elevator(topology, src)


def select_cda(src: Sequence[int], topology: Topology, occupancy: np.ndarray) -> int:
    """``occupancy[r]`` is the number of flits buffered at router ``r``."""
    elev = np.asarray(topology.elevators, dtype=np.int64).reshape(-1, 2)
    base = src[2] * topology.layer_size
    return int(cda_pick(src[0], src[1], base, topology.X, elev, np.asarray(occupancy, dtype=np.int64)))

"""Offline search for per-router elevator subsets.

Two objectives are minimised:

* the population variance of the expected per-elevator load, assuming each
  router spreads its inter-layer flows evenly over its subset, and
* the mean source-elevator-destination hop count over all ordered
  inter-layer router pairs, again averaged uniformly over each subset.

The search is archived multi-objective simulated annealing (AMOSA).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .selection import ElevatorAssignment
from .topology import Topology, build_topology, distance_tensor, nearest_elevator

log = logging.getLogger(__name__)

STRATEGIES = ("min_variance", "min_distance", "knee")


@dataclass(frozen=True)
class ObjectiveVector:
    variance: float
    avg_distance: float

    def dominates(self, other: "ObjectiveVector") -> bool:
        return (self.variance <= other.variance and self.avg_distance <= other.avg_distance
                and (self.variance < other.variance or self.avg_distance < other.avg_distance))

    def as_tuple(self) -> tuple[float, float]:
        return (self.variance, self.avg_distance)


@dataclass(frozen=True)
class ArchiveSolution:
    assignment: ElevatorAssignment
    objectives: ObjectiveVector

    def to_json(self) -> dict:
        return {"objectives": asdict(self.objectives), "subsets": self.assignment.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "ArchiveSolution":
        return cls(ElevatorAssignment(doc["subsets"]), ObjectiveVector(**doc["objectives"]))


@dataclass(frozen=True)
class AmosaConfig:
    t_initial: float = 100.0
    t_final: float = 0.01
    cooling_ratio: float = 0.95
    iterations_per_temp: int = 200
    hard_limit: int = 20
    soft_limit: int = 60
    subset_size_range: tuple[int, int] | None = None  # None -> (1, E)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.t_final < self.t_initial:
            raise ValueError("need 0 < t_final < t_initial")
        if not 0 < self.cooling_ratio < 1:
            raise ValueError("cooling_ratio must lie in (0, 1)")
        if self.iterations_per_temp < 1:
            raise ValueError("iterations_per_temp must be positive")
        if not 1 <= self.hard_limit <= self.soft_limit:
            raise ValueError("need 1 <= hard_limit <= soft_limit")

    def size_range(self, topology: Topology) -> tuple[int, int]:
        lo, hi = self.subset_size_range or (1, topology.E)
        if not 1 <= lo <= hi <= topology.E:
            raise ValueError(f"subset_size_range {(lo, hi)} invalid for {topology.E} elevators")
        return lo, hi


# ---------------------------------------------------------------------------
# objectives


def _inter_layer_mask(topology: Topology) -> np.ndarray:
    z = topology.coords_array()[:, 2]
    return z[:, None] != z[None, :]


def inter_layer_pairs(topology: Topology) -> int:
    """Number of ordered router pairs on different layers, N * N(L-1)/L."""
    return topology.N * (topology.N - topology.layer_size)


def _check_traffic(traffic: np.ndarray, topology: Topology) -> np.ndarray:
    traffic = np.asarray(traffic, dtype=np.float64)
    if traffic.shape != (topology.N, topology.N):
        raise ValueError(f"traffic matrix shape {traffic.shape} does not match {topology.N} routers")
    return traffic


def membership(assignment: ElevatorAssignment, topology: Topology) -> np.ndarray:
    M = np.zeros((topology.N, topology.E), dtype=bool)
    for i, s in enumerate(assignment):
        M[i, list(s)] = True
    return M


def elevator_utilization(assignment: ElevatorAssignment, traffic: np.ndarray, topology: Topology) -> np.ndarray:
    """Expected load per elevator.

    Router i sends ``sum_j f_ij`` over inter-layer destinations and splits it
    evenly across its subset; same-layer flows never touch an elevator.
    """
    traffic = _check_traffic(traffic, topology)
    assignment.validate(topology)
    return ObjectiveModel(topology, traffic).utilization(membership(assignment, topology))


def utilization_variance(U: Sequence[float]) -> float:
    U = np.asarray(U, dtype=np.float64)
    return float(np.mean((U - U.mean()) ** 2))


def average_distance(assignment: ElevatorAssignment, topology: Topology) -> float:
    assignment.validate(topology)
    return ObjectiveModel(topology).avg_distance(membership(assignment, topology))


class ObjectiveModel:
    """Precomputed per-router terms so that an evaluation is O(N*E)."""

    def __init__(self, topology: Topology, traffic: np.ndarray | None = None):
        self.topology = topology
        inter = _inter_layer_mask(topology)
        if traffic is None:
            traffic = inter.astype(np.float64)
        traffic = _check_traffic(traffic, topology)
        self.outflow = np.where(inter, traffic, 0.0).sum(axis=1)
        self.dist_sum = distance_tensor(topology).sum(axis=1).astype(np.float64)  # (N, E)
        self.norm = float(inter_layer_pairs(topology))

    def utilization(self, M: np.ndarray) -> np.ndarray:
        share = self.outflow / M.sum(axis=1)
        return share @ M

    def avg_distance(self, M: np.ndarray) -> float:
        per_router = (self.dist_sum * M).sum(axis=1) / M.sum(axis=1)
        return float(per_router.sum() / self.norm)

    def evaluate(self, M: np.ndarray) -> ObjectiveVector:
        return ObjectiveVector(utilization_variance(self.utilization(M)), self.avg_distance(M))


# ---------------------------------------------------------------------------
# search


def perturb(M: np.ndarray, size_range: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """One add / remove / swap move on a random router's subset."""
    N, E = M.shape
    lo, hi = size_range
    out = M.copy()
    if E == 1 or lo == hi == E:
        return out
    while True:
        i = int(rng.integers(N))
        move = int(rng.integers(3))
        row = out[i]
        size = int(row.sum())
        members = np.flatnonzero(row)
        others = np.flatnonzero(~row)
        if move == 0 and size < hi and len(others):
            row[others[rng.integers(len(others))]] = True
        elif move == 1 and size > lo:
            row[members[rng.integers(len(members))]] = False
        elif move == 2 and len(others):
            row[members[rng.integers(len(members))]] = False
            row[others[rng.integers(len(others))]] = True
        else:
            continue
        return out


def perturb_assignment(assignment: ElevatorAssignment, topology: Topology, config: AmosaConfig,
                       rng: np.random.Generator) -> ElevatorAssignment:
    M = perturb(membership(assignment, topology), config.size_range(topology), rng)
    return _to_assignment(M)


def _to_assignment(M: np.ndarray) -> ElevatorAssignment:
    return ElevatorAssignment([tuple(np.flatnonzero(row)) for row in M])


def baseline_membership(topology: Topology, min_size: int = 1) -> np.ndarray:
    """Nearest-elevator singletons, padded with the next-closest columns up to ``min_size``."""
    M = np.zeros((topology.N, topology.E), dtype=bool)
    el = np.asarray(topology.elevators)
    for i in range(topology.N):
        c = topology.coord(i)
        M[i, nearest_elevator(topology, c)] = True
        if min_size > 1:
            d = np.abs(el[:, 0] - c.x) + np.abs(el[:, 1] - c.y)
            for e in np.lexsort((np.arange(topology.E), d)):
                if M[i].sum() >= min_size:
                    break
                M[i, e] = True
    return M


class _Point:
    __slots__ = ("M", "f")

    def __init__(self, M, f):
        self.M = M
        self.f = f


def _dominates(a, b) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def _domination_amount(a, b, ranges) -> float:
    amount = 1.0
    for k in range(2):
        if a[k] != b[k] and ranges[k] > 0:
            amount *= abs(a[k] - b[k]) / ranges[k]
    return amount


def _accept(prob: float, rng: np.random.Generator) -> bool:
    return rng.random() < prob


def _sigmoid_reject(delta: float, temp: float) -> float:
    x = delta / temp
    if x > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def check_archive(archive: Sequence) -> None:
    """Raise if any member dominates another."""
    fs = [p.f if isinstance(p, _Point) else p.objectives.as_tuple() for p in archive]
    for a in range(len(fs)):
        for b in range(len(fs)):
            if a != b and _dominates(fs[a], fs[b]):
                raise AssertionError(f"archive member {a} {fs[a]} dominates member {b} {fs[b]}")


def _add_to_archive(archive: list, p: _Point) -> None:
    archive[:] = [q for q in archive if not _dominates(p.f, q.f)]
    if not any(q.f == p.f for q in archive):
        archive.append(p)


def cluster_archive(archive: list, limit: int) -> list:
    """Keep ``limit`` members spread over the front by farthest-point selection.

    Both extreme members (lowest variance, lowest distance) always survive.
    """
    if len(archive) <= limit:
        return list(archive)
    F = np.array([p.f for p in archive], dtype=np.float64)
    span = F.max(axis=0) - F.min(axis=0)
    span[span == 0] = 1.0
    G = (F - F.min(axis=0)) / span
    chosen = [int(np.lexsort((F[:, 1], F[:, 0]))[0])]
    min_d = int(np.lexsort((F[:, 0], F[:, 1]))[0])
    if min_d not in chosen and limit > 1:
        chosen.append(min_d)
    dist = np.min(np.linalg.norm(G[:, None, :] - G[chosen][None, :, :], axis=2), axis=1)
    while len(chosen) < limit:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(G - G[nxt], axis=1))
    return [archive[i] for i in sorted(chosen)]


def amosa_optimize(topology: Topology, traffic: np.ndarray | None = None,
                   config: AmosaConfig = AmosaConfig(), check_invariants: bool = False) -> list[ArchiveSolution]:
    """Archived multi-objective simulated annealing over elevator subsets.

    Starts from the nearest-elevator assignment, so the archive always holds
    a point at least as good as that baseline in both objectives. Returns
    the archive sorted by variance (ascending).
    """
    model = ObjectiveModel(topology, traffic)
    size_range = config.size_range(topology)
    rng = np.random.default_rng(config.seed)

    def point(M):
        return _Point(M, model.evaluate(M).as_tuple())

    current = point(baseline_membership(topology, size_range[0]))
    archive = [current]
    temp = config.t_initial
    n_temps = 0
    while temp > config.t_final:
        for _ in range(config.iterations_per_temp):
            new = point(perturb(current.M, size_range, rng))
            current, archive = _amosa_step(current, new, archive, temp, config, rng)
            if check_invariants:
                check_archive(archive)
        temp *= config.cooling_ratio
        n_temps += 1
    log.info("amosa: %d temperatures, archive of %d", n_temps, len(archive))
    archive = cluster_archive(archive, config.hard_limit) if len(archive) > config.hard_limit else archive
    # objectives are recomputed from scratch for reporting
    result = [ArchiveSolution(_to_assignment(p.M), model.evaluate(p.M)) for p in archive]
    result.sort(key=lambda s: (s.objectives.variance, s.objectives.avg_distance))
    return result


def _amosa_step(current: _Point, new: _Point, archive: list, temp: float, config: AmosaConfig,
                rng: np.random.Generator):
    F = [p.f for p in archive] + [current.f, new.f]
    ranges = (max(f[0] for f in F) - min(f[0] for f in F), max(f[1] for f in F) - min(f[1] for f in F))
    dominating_new = [q for q in archive if _dominates(q.f, new.f)]
    k = len(dominating_new)

    if _dominates(current.f, new.f):
        total = sum(_domination_amount(q.f, new.f, ranges) for q in dominating_new)
        total += _domination_amount(current.f, new.f, ranges)
        if _accept(_sigmoid_reject(total / (k + 1), temp), rng):
            current = new
    elif not _dominates(new.f, current.f):
        if k >= 1:
            delta = sum(_domination_amount(q.f, new.f, ranges) for q in dominating_new) / k
            if _accept(_sigmoid_reject(delta, temp), rng):
                current = new
        else:
            _add_to_archive(archive, new)
            current = new
    else:
        if k >= 1:
            amounts = [_domination_amount(q.f, new.f, ranges) for q in dominating_new]
            j = int(np.argmin(amounts))
            if _accept(1.0 / (1.0 + math.exp(-amounts[j])), rng):
                current = dominating_new[j]
            else:
                current = new
        else:
            _add_to_archive(archive, new)
            current = new
    if len(archive) > config.soft_limit:
        archive = cluster_archive(archive, config.hard_limit)
    return current, archive


def pick_solution(archive: Sequence[ArchiveSolution], strategy: str = "min_variance") -> ArchiveSolution:
    if not archive:
        raise ValueError("cannot pick from an empty archive")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "min_variance":
        return min(archive, key=lambda s: (s.objectives.variance, s.objectives.avg_distance))
    if strategy == "min_distance":
        return min(archive, key=lambda s: (s.objectives.avg_distance, s.objectives.variance))
    F = np.array([s.objectives.as_tuple() for s in archive])
    span = F.max(axis=0) - F.min(axis=0)
    span[span == 0] = 1.0
    score = np.linalg.norm((F.max(axis=0) - F) / span, axis=1)
    return archive[int(np.argmax(score))]


def save_archive(archive: Sequence[ArchiveSolution], path: str | Path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in archive], indent=1))


def load_archive(path: str | Path) -> list[ArchiveSolution]:
    return [ArchiveSolution.from_json(d) for d in json.loads(Path(path).read_text())]


# ---------------------------------------------------------------------------
# placement helper


def optimize_placement(dims: Sequence[int], n_elevators: int, traffic: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Choose elevator columns minimising the average inter-layer distance.

    Each inter-layer pair is charged the distance over its best elevator.
    Greedy insertion followed by best-improvement single swaps; ties resolve
    to the lowest column index so the result is deterministic.
    """
    X, Y, L = (int(d) for d in dims)
    cols = [(x, y) for y in range(Y) for x in range(X)]
    if not 1 <= n_elevators <= len(cols):
        raise ValueError(f"cannot place {n_elevators} elevators on a {X}x{Y} grid")
    if n_elevators == len(cols):
        return cols
    topo = build_topology((X, Y, L), [(0, 0)])
    c = topo.coords_array()
    inter = _inter_layer_mask(topo)
    f = inter.astype(np.float64) if traffic is None else np.where(inter, np.asarray(traffic, float), 0.0)
    # fold layer pairs into column-to-column weights
    S = X * Y
    onehot = np.zeros((topo.N, S))
    onehot[np.arange(topo.N), c[:, 1] * X + c[:, 0]] = 1.0
    W = onehot.T @ f @ onehot
    P = np.array(cols)
    h = np.abs(P[:, None, 0] - P[None, :, 0]) + np.abs(P[:, None, 1] - P[None, :, 1])
    # via[p, q, e]: horizontal hops from column p to column e, then e to q
    via = h[:, None, :] + h[None, :, :]

    def cost(sel):
        return float((W * via[:, :, sel].min(axis=2)).sum())

    chosen: list[int] = []
    for _ in range(n_elevators):
        best = min((cost(chosen + [s]), s) for s in range(S) if s not in chosen)
        chosen.append(best[1])
    current = cost(chosen)
    improved = True
    while improved:
        improved = False
        best_move = None
        for a in range(len(chosen)):
            for s in range(S):
                if s in chosen:
                    continue
                trial = chosen.copy()
                trial[a] = s
                v = cost(trial)
                if v < current - 1e-9 and (best_move is None or v < best_move[0]):
                    best_move = (v, trial)
        if best_move is not None:
            current, chosen = best_move[0], best_move[1]
            improved = True
    return [cols[s] for s in sorted(chosen)]

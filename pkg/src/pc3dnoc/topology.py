"""3D mesh with partial vertical connectivity.

Routers sit on an X x Y grid replicated over L layers. Only a few (x, y)
columns carry vertical links ("elevators"); every elevator spans all layers.
Router ids are assigned layer-major, then row-major: ``id = z*X*Y + y*X + x``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PRESET_NAMES = ("p_s1", "p_s2", "p_s3", "p_m")


class TopologyError(ValueError):
    pass


class Coord(NamedTuple):
    x: int
    y: int
    z: int


@dataclass(frozen=True)
class Topology:
    dims: tuple[int, int, int]
    elevators: tuple[tuple[int, int], ...]
    _column_to_elevator: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X, Y, L = self.dims
        if X < 1 or Y < 1:
            raise TopologyError(f"grid must be at least 1x1, got {X}x{Y}")
        if L < 2:
            raise TopologyError(f"need at least 2 layers, got {L}")
        if not self.elevators:
            raise TopologyError("at least one elevator is required")
        seen = {}
        for idx, (x, y) in enumerate(self.elevators):
            if not (0 <= x < X and 0 <= y < Y):
                raise TopologyError(f"elevator {idx} at {(x, y)} lies outside the {X}x{Y} grid")
            if (x, y) in seen:
                raise TopologyError(f"duplicate elevator position {(x, y)}")
            seen[(x, y)] = idx
        object.__setattr__(self, "_column_to_elevator", seen)

    @property
    def X(self) -> int:
        return self.dims[0]

    @property
    def Y(self) -> int:
        return self.dims[1]

    @property
    def L(self) -> int:
        return self.dims[2]

    @property
    def N(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def E(self) -> int:
        return len(self.elevators)

    @property
    def layer_size(self) -> int:
        return self.dims[0] * self.dims[1]

    def node_id(self, c: Coord | Sequence[int]) -> int:
        x, y, z = c
        return z * self.layer_size + y * self.X + x

    def coord(self, node: int) -> Coord:
        if not 0 <= node < self.N:
            raise TopologyError(f"router id {node} out of range [0, {self.N})")
        z, rem = divmod(node, self.layer_size)
        y, x = divmod(rem, self.X)
        return Coord(x, y, z)

    def contains(self, c: Coord | Sequence[int]) -> bool:
        x, y, z = c
        return 0 <= x < self.X and 0 <= y < self.Y and 0 <= z < self.L

    def elevator_at(self, x: int, y: int) -> int | None:
        """Elevator index whose column is (x, y), or None."""
        return self._column_to_elevator.get((x, y))

    def check_elevator(self, e: int) -> None:
        if not 0 <= e < self.E:
            raise TopologyError(f"invalid elevator id {e} (topology has {self.E})")

    def coords_array(self) -> np.ndarray:
        """(N, 3) integer array of router coordinates indexed by router id."""
        ids = np.arange(self.N)
        z, rem = np.divmod(ids, self.layer_size)
        y, x = np.divmod(rem, self.X)
        return np.stack([x, y, z], axis=1)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "elevators": [list(p) for p in self.elevators]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        return build_topology(doc["dims"], doc["elevators"])


def build_topology(dims: Sequence[int], elevator_positions: Iterable[Sequence[int]]) -> Topology:
    if len(dims) != 3:
        raise TopologyError(f"dims must be (X, Y, L), got {dims!r}")
    positions = tuple((int(p[0]), int(p[1])) for p in elevator_positions)
    return Topology(tuple(int(d) for d in dims), positions)


def manhattan(a: Sequence[int], b: Sequence[int]) -> int:
    """Intra-layer Manhattan distance; the z components are ignored.

    Callers add the vertical distance ``abs(a.z - b.z)`` themselves.
    """
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def elevator_path_distance(topology: Topology, src: Sequence[int], dst: Sequence[int], e: int) -> int:
    """Hop count src -> elevator column -> dst; 0 for same-layer pairs."""
    topology.check_elevator(e)
    if src[2] == dst[2]:
        return 0
    ex, ey = topology.elevators[e]
    col = (ex, ey)
    return manhattan(src, col) + abs(src[2] - dst[2]) + manhattan(col, dst)


def nearest_elevator(topology: Topology, node: Sequence[int]) -> int:
    best, best_d = 0, None
    for idx, col in enumerate(topology.elevators):
        d = manhattan(node, col)
        if best_d is None or d < best_d:
            best, best_d = idx, d
    return best


def distance_tensor(topology: Topology) -> np.ndarray:
    """D[i, j, e] for every router pair and elevator, as int64."""
    c = topology.coords_array()
    el = np.asarray(topology.elevators, dtype=np.int64).reshape(-1, 2)
    # (N, E) horizontal distance from every router to every column
    to_col = np.abs(c[:, None, 0] - el[None, :, 0]) + np.abs(c[:, None, 1] - el[None, :, 1])
    dz = np.abs(c[:, None, 2] - c[None, :, 2])
    D = to_col[:, None, :] + dz[:, :, None] + to_col[None, :, :]
    D[dz == 0] = 0
    return D


def load_preset(name: str) -> Topology:
    name = name.lower()
    if name not in PRESET_NAMES:
        raise TopologyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("pc3dnoc.presets").joinpath(f"{name}.json").read_text()
    return Topology.from_dict(json.loads(text))


def load_topology(ref: str | dict | Topology) -> Topology:
    """Resolve a preset name, a JSON file path, or an inline dict."""
    if isinstance(ref, Topology):
        return ref
    if isinstance(ref, dict):
        return Topology.from_dict(ref)
    if ref.lower() in PRESET_NAMES:
        return load_preset(ref)
    path = Path(ref)
    if not path.exists():
        raise TopologyError(f"topology {ref!r} is neither a preset nor an existing file")
    return Topology.from_dict(json.loads(path.read_text()))

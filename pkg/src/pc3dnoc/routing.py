"""Elevator-First routing.

Inter-layer packets go XY to their assigned elevator column, ride it to the
destination layer, then go XY to the destination. Two virtual networks keep
the channel-dependency graph acyclic: VN0 carries intra-layer traffic and
everything up to and including upward hops, VN1 carries a packet from its
first downward hop onwards.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .topology import Coord, Topology


class Port(enum.IntEnum):
    LOCAL = 0
    EAST = 1   # +x
    WEST = 2   # -x
    NORTH = 3  # +y
    SOUTH = 4  # -y
    UP = 5     # +z
    DOWN = 6   # -z


N_PORTS = len(Port)
OPPOSITE = (Port.LOCAL, Port.WEST, Port.EAST, Port.SOUTH, Port.NORTH, Port.DOWN, Port.UP)
_STEP = {
    Port.EAST: (1, 0, 0), Port.WEST: (-1, 0, 0),
    Port.NORTH: (0, 1, 0), Port.SOUTH: (0, -1, 0),
    Port.UP: (0, 0, 1), Port.DOWN: (0, 0, -1),
}


class Phase(enum.Enum):
    TO_ELEVATOR = "to_elevator"
    VERTICAL = "vertical"
    TO_DESTINATION = "to_destination"


class RoutingError(RuntimeError):
    """Route state inconsistent with the packet's position."""


class RouteDecision(NamedTuple):
    output_port: Port
    virtual_network: int


@dataclass(frozen=True)
class PacketRouteState:
    assigned_elevator: int | None
    src_layer: int
    phase: Phase = Phase.TO_ELEVATOR


def initial_state(src: Sequence[int], dst: Sequence[int], elevator: int | None) -> PacketRouteState:
    if src[2] == dst[2]:
        return PacketRouteState(None, src[2], Phase.TO_DESTINATION)
    if elevator is None:
        raise RoutingError("inter-layer packet needs an elevator")
    return PacketRouteState(elevator, src[2], Phase.TO_ELEVATOR)


def _xy_port(cx: int, cy: int, tx: int, ty: int) -> Port | None:
    if tx > cx:
        return Port.EAST
    if tx < cx:
        return Port.WEST
    if ty > cy:
        return Port.NORTH
    if ty < cy:
        return Port.SOUTH
    return None


def _vn(state: PacketRouteState, current: Sequence[int], port: Port) -> int:
    return 1 if port == Port.DOWN or current[2] < state.src_layer else 0


def effective_phase(current: Sequence[int], dst: Sequence[int], state: PacketRouteState,
                    topology: Topology) -> Phase:
    """Phase after applying any transition due at ``current``."""
    phase = state.phase
    x, y, z = current
    if phase is Phase.TO_ELEVATOR:
        if z != state.src_layer:
            raise RoutingError(f"to_elevator packet left its source layer at {tuple(current)}")
        ex, ey = topology.elevators[state.assigned_elevator]
        if (x, y) == (ex, ey):
            phase = Phase.VERTICAL
    if phase is Phase.VERTICAL:
        ex, ey = topology.elevators[state.assigned_elevator]
        if (x, y) != (ex, ey):
            raise RoutingError(f"vertical phase off elevator column at {tuple(current)}")
        if z == dst[2]:
            phase = Phase.TO_DESTINATION
    elif phase is Phase.TO_DESTINATION and z != dst[2]:
        raise RoutingError(f"to_destination packet at {tuple(current)} is not on layer {dst[2]}")
    return phase


def route(current: Sequence[int], dst: Sequence[int], state: PacketRouteState,
          topology: Topology) -> RouteDecision:
    phase = effective_phase(current, dst, state, topology)
    x, y, z = current
    if phase is Phase.TO_DESTINATION:
        port = _xy_port(x, y, dst[0], dst[1]) or Port.LOCAL
    elif phase is Phase.VERTICAL:
        port = Port.UP if dst[2] > z else Port.DOWN
    else:
        ex, ey = topology.elevators[state.assigned_elevator]
        port = _xy_port(x, y, ex, ey)
    return RouteDecision(port, _vn(state, current, port))


def advance(current: Sequence[int], dst: Sequence[int], state: PacketRouteState,
            topology: Topology, decision: RouteDecision) -> tuple[Coord, PacketRouteState]:
    """Position and state after taking ``decision`` at ``current``."""
    phase = effective_phase(current, dst, state, topology)
    dx, dy, dz = _STEP[decision.output_port]
    nxt = Coord(current[0] + dx, current[1] + dy, current[2] + dz)
    if phase is Phase.VERTICAL and nxt[2] == dst[2]:
        phase = Phase.TO_DESTINATION
    return nxt, replace(state, phase=phase)


class Hop(NamedTuple):
    router: Coord
    port: Port
    vn: int


def route_path(topology: Topology, src: Sequence[int], dst: Sequence[int],
               elevator: int | None) -> list[Hop]:
    """Every output decision from src to dst, ending with the LOCAL ejection."""
    state = initial_state(src, dst, elevator)
    cur = Coord(*src)
    hops = []
    limit = topology.X + topology.Y + topology.L + 2 * (topology.X + topology.Y)
    while True:
        dec = route(cur, dst, state, topology)
        hops.append(Hop(cur, dec.output_port, dec.virtual_network))
        if dec.output_port == Port.LOCAL:
            return hops
        cur, state = advance(cur, dst, state, topology, dec)
        if not topology.contains(cur) or len(hops) > limit:
            raise RoutingError(f"route from {tuple(src)} to {tuple(dst)} escaped the mesh")


def route_table(topology: Topology) -> np.ndarray:
    """Output port for every (current router, destination, elevator) triple.

    The port depends only on position: off the destination layer a packet
    heads for its elevator column and then rides it; on the destination
    layer it goes XY to the destination.
    """
    c = topology.coords_array()
    el = np.asarray(topology.elevators, dtype=np.int64).reshape(-1, 2)
    cx = c[:, 0][:, None, None]
    cy = c[:, 1][:, None, None]
    cz = c[:, 2][:, None, None]
    dx = c[:, 0][None, :, None]
    dy = c[:, 1][None, :, None]
    dz = c[:, 2][None, :, None]
    ex = el[:, 0][None, None, :]
    ey = el[:, 1][None, None, :]

    same = cz == dz
    tx = np.where(same, dx, ex)
    ty = np.where(same, dy, ey)
    port = np.full(np.broadcast_shapes(cx.shape, dx.shape, ex.shape), int(Port.LOCAL), dtype=np.int8)
    port = np.where(ty < cy, int(Port.SOUTH), port)
    port = np.where(ty > cy, int(Port.NORTH), port)
    port = np.where(tx < cx, int(Port.WEST), port)
    port = np.where(tx > cx, int(Port.EAST), port)
    at_column = (~same) & (tx == cx) & (ty == cy)
    port = np.where(at_column & (dz > cz), int(Port.UP), port)
    port = np.where(at_column & (dz < cz), int(Port.DOWN), port)
    return port.astype(np.int8)


def neighbor_table(topology: Topology) -> np.ndarray:
    """``nbr[r, p]`` = router reached through port ``p`` of ``r``, or -1."""
    N = topology.N
    nbr = np.full((N, N_PORTS), -1, dtype=np.int64)
    for r in range(N):
        x, y, z = topology.coord(r)
        for p, (ddx, ddy, ddz) in _STEP.items():
            nx, ny, nz = x + ddx, y + ddy, z + ddz
            if not topology.contains((nx, ny, nz)):
                continue
            if ddz and topology.elevator_at(x, y) is None:
                continue
            nbr[r, p] = topology.node_id((nx, ny, nz))
    return nbr


# ---------------------------------------------------------------------------
# channel-dependency graph


Channel = tuple  # (router id, port, vn)


@dataclass
class CDGReport:
    n_channels: int
    n_dependencies: int
    cycles: dict = field(default_factory=dict)  # vn -> one cycle as a channel list
    global_cycle: list | None = None

    @property
    def acyclic(self) -> bool:
        return not self.cycles and self.global_cycle is None


def find_cycle(edges: Iterable[tuple]) -> list | None:
    """Return one directed cycle (as a node list) or None."""
    adj = defaultdict(set)
    for u, v in edges:
        adj[u].add(v)
        adj.setdefault(v, set())
    WHITE, GREY, BLACK = 0, 1, 2
    color = {u: WHITE for u in adj}
    for root in sorted(adj, key=repr):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(adj[root], key=repr)))]
        path = [root]
        color[root] = GREY
        while stack:
            u, it = stack[-1]
            for v in it:
                if color[v] == GREY:
                    return path[path.index(v):] + [v]
                if color[v] == WHITE:
                    color[v] = GREY
                    stack.append((v, iter(sorted(adj[v], key=repr))))
                    path.append(v)
                    break
            else:
                color[u] = BLACK
                stack.pop()
                path.pop()
    return None


def channel_dependencies(topology: Topology, assignment) -> set:
    """Dependencies (c1, c2) induced by every (src, dst, elevator in A_src)."""
    deps = set()
    for s in range(topology.N):
        src = topology.coord(s)
        for d in range(topology.N):
            if d == s:
                continue
            dst = topology.coord(d)
            elevs = [None] if src.z == dst.z else list(assignment[s])
            for e in elevs:
                hops = route_path(topology, src, dst, e)
                chans = [(topology.node_id(h.router), int(h.port), h.vn) for h in hops if h.port != Port.LOCAL]
                deps.update(zip(chans, chans[1:]))
    return deps


def check_deadlock_freedom(topology: Topology, assignment) -> CDGReport:
    deps = channel_dependencies(topology, assignment)
    channels = {c for dep in deps for c in dep}
    report = CDGReport(len(channels), len(deps))
    for vn in (0, 1):
        cyc = find_cycle((u, v) for u, v in deps if u[2] == vn and v[2] == vn)
        if cyc is not None:
            report.cycles[vn] = cyc
    report.global_cycle = find_cycle(deps)
    return report

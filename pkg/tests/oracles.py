"""Independent brute-force references for the optimizer objectives.

They walk every routed packet hop by hop and use exact rational arithmetic,
sharing nothing with the vectorised implementations except the router.
"""

from fractions import Fraction

from pc3dnoc.routing import Port, route_path


class PairWalks:
    """Routed walk of every inter-layer (i, j, e): elevators touched and hop count."""

    def __init__(self, topology):
        self.topology = topology
        self.walks = {}
        for i in range(topology.N):
            ci = topology.coord(i)
            for j in range(topology.N):
                cj = topology.coord(j)
                if cj.z == ci.z:
                    continue
                for e in range(topology.E):
                    hops = route_path(topology, ci, cj, e)
                    used = frozenset(topology.elevator_at(h.router.x, h.router.y)
                                     for h in hops if h.port in (Port.UP, Port.DOWN))
                    self.walks[i, j, e] = (used, len(hops) - 1)


def brute_utilization(topology, assignment, traffic, walks=None):
    walks = walks or PairWalks(topology)
    U = [Fraction(0)] * topology.E
    for (i, j, e), (used, _) in walks.walks.items():
        if e not in assignment[i] or traffic[i][j] == 0:
            continue
        for k in used:
            U[k] += Fraction(int(traffic[i][j]), len(assignment[i]))
    return U


def brute_avg_distance(topology, assignment, walks=None):
    walks = walks or PairWalks(topology)
    total, pairs = Fraction(0), set()
    for (i, j, e), (_, hops) in walks.walks.items():
        pairs.add((i, j))
        if e in assignment[i]:
            total += Fraction(hops, len(assignment[i]))
    return total / len(pairs)


def brute_variance(U):
    mu = sum(U, Fraction(0)) / len(U)
    return sum(((u - mu) ** 2 for u in U), Fraction(0)) / len(U)

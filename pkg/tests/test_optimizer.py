import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_avg_distance, brute_utilization, brute_variance
from pc3dnoc.optimizer import (AmosaConfig, ArchiveSolution, ObjectiveModel, ObjectiveVector, amosa_optimize,
                               average_distance, baseline_membership, check_archive, cluster_archive,
                               elevator_utilization, inter_layer_pairs, load_archive, membership, optimize_placement,
                               perturb, perturb_assignment, pick_solution, save_archive, utilization_variance)
from pc3dnoc.selection import ElevatorAssignment
from pc3dnoc.topology import build_topology, distance_tensor, load_preset

FAST = AmosaConfig(t_initial=10, t_final=0.1, cooling_ratio=0.8, iterations_per_temp=60, seed=3)


def random_assignment(t, rng, lo=1, hi=None):
    hi = hi or t.E
    return ElevatorAssignment([tuple(rng.choice(t.E, size=int(rng.integers(lo, hi + 1)), replace=False))
                               for _ in range(t.N)])


def uniform_traffic(t):
    return np.ones((t.N, t.N)) - np.eye(t.N)


def test_zero_traffic(small):
    U = elevator_utilization(ElevatorAssignment.full(small), np.zeros((8, 8)), small)
    assert np.all(U == 0)


def test_single_elevator_carries_every_inter_layer_pair():
    t = build_topology((3, 2, 3), [(1, 1)])
    U = elevator_utilization(ElevatorAssignment.full(t), uniform_traffic(t), t)
    assert U[0] == t.N * t.N * (t.L - 1) / t.L == inter_layer_pairs(t)


def test_two_elevator_split(small):
    U = elevator_utilization(ElevatorAssignment.full(small), uniform_traffic(small), small)
    assert U.tolist() == [16.0, 16.0]
    assert [float(u) for u in brute_utilization(small, ElevatorAssignment.full(small), uniform_traffic(small))] == [16, 16]


def test_utilization_dimension_mismatch(small):
    with pytest.raises(ValueError):
        elevator_utilization(ElevatorAssignment.full(small), np.ones((4, 4)), small)


@pytest.mark.parametrize("U,expected", [([4, 4, 4], 0.0), ([0, 2], 1.0), ([1, 2, 3, 6], 3.5)])
def test_variance_examples(U, expected):
    assert utilization_variance(U) == expected


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=8), st.integers(1, 9), st.randoms())
def test_variance_permutation_and_scaling(U, c, r):
    V = list(U)
    r.shuffle(V)
    assert utilization_variance(V) == pytest.approx(utilization_variance(U), rel=1e-12, abs=1e-12)
    assert utilization_variance([c * u for u in U]) == pytest.approx(c * c * utilization_variance(U), rel=1e-9,
                                                                      abs=1e-9)


def test_average_distance_examples():
    t = build_topology((1, 1, 2), [(0, 0)])
    assert average_distance(ElevatorAssignment.full(t), t) == 1.0
    t = build_topology((2, 1, 2), [(0, 0)])
    assert average_distance(ElevatorAssignment.full(t), t) == 2.0
    assert brute_avg_distance(t, ElevatorAssignment.full(t)) == 2


def test_average_distance_lower_bound_attained():
    # a column at every position: the co-located elevator is always minimal
    t = build_topology((2, 2, 3), [(0, 0), (1, 0), (0, 1), (1, 1)])
    c = t.coords_array()
    inter = c[:, None, 2] != c[None, :, 2]
    minimal = (np.abs(c[:, None, :] - c[None, :, :]).sum(axis=2))[inter].mean()
    own = ElevatorAssignment([(t.elevator_at(x, y),) for x, y, _ in c])
    assert average_distance(own, t) == pytest.approx(minimal, abs=1e-12)


@pytest.mark.parametrize("dims,cols", [((2, 2, 2), [(0, 0), (1, 1)]), ((2, 2, 4), [(1, 0), (0, 1), (1, 1)]),
                                       ((4, 2, 2), [(0, 0), (3, 1), (2, 0)]), ((3, 1, 3), [(0, 0), (2, 0)])])
def test_objectives_match_brute_force(dims, cols):
    t = build_topology(dims, cols)
    rng = np.random.default_rng(sum(dims))
    f = rng.integers(0, 5, size=(t.N, t.N))
    np.fill_diagonal(f, 0)
    for _ in range(10):
        a = random_assignment(t, rng)
        U = elevator_utilization(a, f, t)
        ref = brute_utilization(t, a, f.tolist())
        assert all(abs(Fraction(u) - r) <= 1e-12 * max(1, r) for u, r in zip(U, ref))
        assert utilization_variance(U) == pytest.approx(float(brute_variance(ref)), rel=1e-9, abs=1e-12)
        assert Fraction(average_distance(a, t)) == pytest.approx(brute_avg_distance(t, a), rel=1e-12)


def test_utilization_conservation(rng):
    t = load_preset("p_s1")
    f = rng.random((t.N, t.N))
    np.fill_diagonal(f, 0)
    c = t.coords_array()
    inter = c[:, None, 2] != c[None, :, 2]
    for _ in range(5):
        U = elevator_utilization(random_assignment(t, rng), f, t)
        assert U.sum() == pytest.approx(f[inter].sum(), rel=1e-12)


def test_average_distance_lower_bound(rng):
    t = load_preset("p_s3")
    D = distance_tensor(t)
    c = t.coords_array()
    inter = c[:, None, 2] != c[None, :, 2]
    bound = D.min(axis=2)[inter].mean()
    for _ in range(10):
        assert average_distance(random_assignment(t, rng), t) >= bound - 1e-12


def test_perturb_respects_bounds(rng):
    t = load_preset("p_s3")
    M = baseline_membership(t)
    for _ in range(500):
        M2 = perturb(M, (1, 3), rng)
        sizes = M2.sum(axis=1)
        assert sizes.min() >= 1 and sizes.max() <= 3
        assert (M2 != M).any()
        M = M2


def test_perturb_singletons_never_shrink(rng):
    t = load_preset("p_s1")
    M = baseline_membership(t)
    for _ in range(200):
        assert np.all(perturb(M, (1, 1), rng).sum(axis=1) == 1)


def test_perturb_single_elevator_is_identity(rng):
    t = build_topology((3, 3, 2), [(1, 1)])
    a = ElevatorAssignment.full(t)
    assert perturb_assignment(a, t, AmosaConfig(), rng) == a


def test_perturb_output_valid(rng):
    t = load_preset("p_s2")
    a = ElevatorAssignment.nearest(t)
    for _ in range(100):
        a = perturb_assignment(a, t, AmosaConfig(), rng)
        a.validate(t)


def test_amosa_config_validation():
    for kw in ({"t_final": 0}, {"t_initial": 0.001}, {"cooling_ratio": 1.0}, {"hard_limit": 70},
               {"iterations_per_temp": 0}):
        with pytest.raises(ValueError):
            AmosaConfig(**kw)
    with pytest.raises(ValueError):
        AmosaConfig(subset_size_range=(2, 5)).size_range(load_preset("p_s1"))


def test_amosa_single_elevator():
    t = build_topology((3, 3, 2), [(1, 1)])
    archive = amosa_optimize(t, None, FAST)
    assert len(archive) == 1
    assert archive[0].assignment == ElevatorAssignment.full(t)


def test_amosa_balances_two_by_two(small):
    archive = amosa_optimize(small, None, FAST, check_invariants=True)
    assert archive[0].objectives.variance == 0.0
    check_archive(archive)
    # exhaustive: every assignment over both elevators
    model = ObjectiveModel(small)
    options = [np.array([1, 0], bool), np.array([0, 1], bool), np.array([1, 1], bool)]
    best = min(model.evaluate(np.array(rows)).variance for rows in itertools.product(options, repeat=small.N))
    assert best == 0.0


def test_amosa_archive_properties():
    t = load_preset("p_s1")
    archive = amosa_optimize(t, None, FAST, check_invariants=True)
    check_archive(archive)
    F = [s.objectives.as_tuple() for s in archive]
    assert F == sorted(F)
    base = ObjectiveModel(t).evaluate(baseline_membership(t))
    assert min(f[0] for f in F) <= base.variance
    assert min(f[1] for f in F) <= base.avg_distance
    mv, md = pick_solution(archive, "min_variance"), pick_solution(archive, "min_distance")
    assert mv.objectives.avg_distance >= md.objectives.avg_distance
    assert md.objectives.variance >= mv.objectives.variance
    for s in archive:
        s.assignment.validate(t)
        assert s.objectives == ObjectiveModel(t).evaluate(membership(s.assignment, t))


def test_amosa_reproducible():
    t = load_preset("p_s2")
    a = amosa_optimize(t, None, FAST)
    b = amosa_optimize(t, None, FAST)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


def test_amosa_respects_subset_range():
    t = load_preset("p_s3")
    cfg = AmosaConfig(t_initial=5, t_final=0.5, cooling_ratio=0.7, iterations_per_temp=40, subset_size_range=(2, 3))
    for s in amosa_optimize(t, None, cfg):
        assert all(2 <= len(a) <= 3 for a in s.assignment)


class _P:
    def __init__(self, f):
        self.f = f


def test_cluster_archive_keeps_extremes():
    pts = [_P((float(i), float(20 - i))) for i in range(21)]
    kept = cluster_archive(pts, 5)
    fs = [p.f for p in kept]
    assert len(kept) == 5 and (0.0, 20.0) in fs and (20.0, 0.0) in fs
    assert cluster_archive(pts, 30) == pts


def test_check_archive_detects_domination():
    sol = lambda v, d: ArchiveSolution(ElevatorAssignment([(0,)]), ObjectiveVector(v, d))  # noqa: E731
    check_archive([sol(0, 9), sol(5, 7)])
    with pytest.raises(AssertionError):
        check_archive([sol(0, 9), sol(1, 9)])


def test_pick_solution_examples():
    a = ArchiveSolution(ElevatorAssignment([(0,)]), ObjectiveVector(0.0, 9.0))
    b = ArchiveSolution(ElevatorAssignment([(1,)]), ObjectiveVector(5.0, 7.0))
    assert pick_solution([a, b], "min_variance") is a
    assert pick_solution([a, b], "min_distance") is b
    for s in ("min_variance", "min_distance", "knee"):
        assert pick_solution([b], s) is b
    c = ArchiveSolution(ElevatorAssignment([(2,)]), ObjectiveVector(1.0, 7.5))
    assert pick_solution([a, b, c], "knee") is c
    with pytest.raises(ValueError):
        pick_solution([], "knee")
    with pytest.raises(ValueError):
        pick_solution([a], "median")


def test_archive_json_roundtrip(tmp_path):
    t = load_preset("p_s1")
    archive = amosa_optimize(t, None, FAST)
    save_archive(archive, tmp_path / "a.json")
    back = load_archive(tmp_path / "a.json")
    assert back == archive


def test_placement_full_grid():
    assert optimize_placement((2, 3, 2), 6) == [(x, y) for y in range(3) for x in range(2)]


def test_placement_single_center():
    best = min((average_distance(ElevatorAssignment.full(t), t), t.elevators[0])
               for t in (build_topology((3, 3, 2), [(x, y)]) for y in range(3) for x in range(3)))
    assert best[1] == (1, 1)
    assert optimize_placement((3, 3, 2), 1) == [(1, 1)]


def test_placement_distinct_in_grid():
    cols = optimize_placement((5, 4, 3), 4)
    assert len(set(cols)) == 4 and all(0 <= x < 5 and 0 <= y < 4 for x, y in cols)
    with pytest.raises(ValueError):
        optimize_placement((2, 2, 2), 5)


def test_presets_come_from_placement_tool():
    for name, dims, e in (("p_s1", (4, 4, 4), 3), ("p_s3", (4, 4, 4), 8), ("p_m", (8, 8, 4), 8)):
        assert sorted(load_preset(name).elevators) == sorted(optimize_placement(dims, e))

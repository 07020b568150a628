import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import suite, unit_square
from jointroute.exact import solve_exact
from jointroute.heuristics import (
    full_distance,
    greedy_construct,
    improving_moves,
    local_search,
    patch_cycles,
    relocate_improve,
    two_opt_improve,
)
from jointroute.instance import Instance, cost_matrix, generate
from jointroute.model import validate_solution
from jointroute.tour import make_solution


def _segments_cross(p1, p2, p3, p4):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return orient(p1, p2, p3) != orient(p1, p2, p4) and orient(p3, p4, p1) != orient(p3, p4, p2)


def test_greedy_n2_is_the_unique_tour():
    for fixed in (True, False):
        inst = unit_square(fixed)
        g = greedy_construct(inst)
        assert g.cost == pytest.approx(2 + 2 * np.sqrt(2), abs=1e-12)
        assert validate_solution(inst, g).ok


def test_greedy_respects_start_and_goal():
    inst = generate(9, 1, 1)[1000]
    g = greedy_construct(inst)
    assert g.order[0] == 17 and g.order[-1] == 8
    free = inst.with_fixed_pair(False)
    assert greedy_construct(free).order[0] == 9


def test_greedy_deterministic_per_seed():
    inst = generate(15, 1, 2)[1000]
    assert greedy_construct(inst, seed=3).order == greedy_construct(inst, seed=3).order
    assert greedy_construct(inst).order == greedy_construct(inst).order
    orders = {tuple(greedy_construct(inst, seed=s).order) for s in range(6)}
    assert len(orders) > 1


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_heuristics_never_beat_exact(n):
    for inst in suite(n, count=10):
        e = solve_exact(inst).cost
        assert greedy_construct(inst).cost >= e - 1e-9
        assert local_search(inst, seed=1).cost >= e - 1e-9


def _opposite_crossings(order, pts):
    """Crossing leg pairs at odd distance (one item->placeholder, one placeholder->item)."""
    m = len(order)
    legs = [(order[k], order[(k + 1) % m]) for k in range(m)]
    out = []
    for a in range(m):
        for b in range(a + 1, m, 2):
            if len({*legs[a], *legs[b]}) == 4 and _segments_cross(*(pts[v] for v in legs[a]),
                                                                   *(pts[v] for v in legs[b])):
                out.append((legs[a], legs[b]))
    return out


def test_two_opt_removes_a_crossing():
    inst = Instance(0, [(0, 0), (1, 0), (2, 0), (3, 0)], [(0, 1), (1, 1), (2, 1), (3, 1)])
    cost = cost_matrix(inst)
    pts = inst.all_coords()
    order = [7, 1, 4, 0, 5, 2, 6, 3]
    assert _opposite_crossings(order, pts) == [((7, 1), (2, 6))]
    before = make_solution(inst, cost, order=order)
    after = two_opt_improve(before, cost)
    assert after.cost < before.cost - 1e-9
    assert validate_solution(inst, after).ok
    assert _opposite_crossings(after.order, pts) == []


def test_same_orientation_crossing_is_not_a_legal_two_opt():
    # legs 1->6 and 2->5 cross, but swapping their ends would join item to item
    inst = Instance(0, [(0, 0), (1, 0), (2, 0), (3, 0)], [(0, 1), (1, 1), (2, 1), (3, 1)])
    cost = cost_matrix(inst)
    out = two_opt_improve(make_solution(inst, cost, order=[7, 2, 5, 0, 4, 1, 6, 3]), cost)
    assert out.order == [7, 2, 5, 0, 4, 1, 6, 3]


def test_relocate_moves_a_misplaced_item():
    inst = Instance(0, [(0, 0), (5, 5), (1, 0)], [(0, 1), (1, 1), (2, 1)])
    cost = cost_matrix(inst)
    before = make_solution(inst, cost, order=[5, 0, 3, 1, 4, 2])
    after = relocate_improve(before, cost)
    assert after.cost < before.cost - 1e-9
    assert validate_solution(inst, after).ok


def test_n2_moves_leave_tour_unchanged():
    inst = unit_square()
    cost = cost_matrix(inst)
    sol = greedy_construct(inst)
    assert two_opt_improve(sol, cost).order == sol.order
    assert relocate_improve(sol, cost).order == sol.order


def test_local_search_properties():
    for inst in suite(25, count=4):
        cost = cost_matrix(inst)
        ls = local_search(inst, restarts=4, seed=7)
        assert validate_solution(inst, ls).ok
        assert ls.cost <= greedy_construct(inst, seed=7).cost + 1e-12
        assert ls.cost <= greedy_construct(inst).cost + 1e-12
        assert ls.order == local_search(inst, restarts=4, seed=7).order
        assert improving_moves(ls.order, full_distance(cost), inst.fixed_pair) == []
        assert ls.stats.solver == "heuristic"


def test_local_search_free_orientation_has_no_moves():
    inst = generate(20, 1, 9)[1000].with_fixed_pair(False)
    ls = local_search(inst)
    assert validate_solution(inst, ls).ok
    assert improving_moves(ls.order, full_distance(cost_matrix(inst)), False) == []


def test_local_search_respects_types():
    rng = np.random.default_rng(0)
    n = 10
    types = {v: ("a" if (v % n) < 5 else "b") for v in range(2 * n)}
    inst = Instance(0, rng.random((n, 2)), rng.random((n, 2)), types=types)
    ls = local_search(inst)
    rep = validate_solution(inst, ls)
    assert rep.ok and rep.type_compat
    for i, p in ls.assignment.items():
        assert types[i] == types[p]


def test_time_limit_is_honoured():
    import time

    inst = generate(300, 1, 0)[1000]
    t0 = time.perf_counter()
    sol = local_search(inst, restarts=50, time_limit=1.0)
    assert time.perf_counter() - t0 < 15
    assert validate_solution(inst, sol).ok


def test_patch_cycles_joins_subtours():
    inst = generate(6, 1, 0)[1000].with_fixed_pair(False)
    D = full_distance(cost_matrix(inst))
    walks = [[0, 6, 1, 7], [2, 8, 3, 9], [4, 10, 5, 11]]
    order = patch_cycles(walks, D, False)
    assert sorted(order) == list(range(12))
    assert validate_solution(inst, list(zip(order, np.roll(order, -1)))).connected


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6), st.booleans())
def test_moves_never_break_a_tour(n, seed, fixed):
    inst = generate(n, 1, seed)[1000].with_fixed_pair(fixed)
    cost = cost_matrix(inst)
    start = greedy_construct(inst, seed=seed)
    for improve in (two_opt_improve, relocate_improve):
        out = improve(start, cost)
        assert out.cost <= start.cost + 1e-12
        assert validate_solution(inst, out).ok

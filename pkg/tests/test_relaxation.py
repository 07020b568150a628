import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import Bounds, LinearConstraint, milp

from conftest import clustered, suite, unit_square
from jointroute.errors import InvalidParameterError
from jointroute.instance import Instance, cost_matrix, generate
from jointroute.oracle import brute_force_optimum, tour_costs, tour_orders
from jointroute.relaxation import (
    EdgeFixings,
    cycle_walks,
    edges_in_order,
    lower_bound,
    masks,
    min_cost_two_factor,
    reoptimize_without,
    solve_flow,
    subtour_multipliers,
)


def milp_two_factor(d, fixings):
    """Independent 2-factor optimum with HiGHS (degree rows only)."""
    n = d.shape[0]
    A = np.zeros((2 * n, n * n))
    for i in range(n):
        for q in range(n):
            A[i, i * n + q] = 1
            A[n + q, i * n + q] = 1
    lo, hi = np.zeros(n * n), np.ones(n * n)
    for i, p in fixings.forbidden:
        hi[i * n + p - n] = 0
    for i, p in fixings.forced:
        lo[i * n + p - n] = 1
    if (lo > hi).any():
        return np.inf
    res = milp(d.ravel(), constraints=LinearConstraint(A, 2, 2), integrality=np.ones(n * n), bounds=Bounds(lo, hi))
    return np.inf if res.x is None else float(res.fun)


def test_n2_uses_every_edge():
    inst = unit_square()
    cost = cost_matrix(inst)
    tf = min_cost_two_factor(cost)
    assert tf.edges == {(0, 2), (0, 3), (1, 2), (1, 3)}
    assert tf.cost == pytest.approx(2 + 2 * np.sqrt(2), abs=1e-12)
    assert lower_bound(cost) == brute_force_optimum(inst).cost


def test_unit_distances_give_four():
    inst = Instance(0, [(0, 0), (1, 1)], [(1, 0), (0, 1)])
    assert min_cost_two_factor(cost_matrix(inst)).cost == 4.0


def test_infeasible_fixings():
    cost = cost_matrix(unit_square())
    assert min_cost_two_factor(cost, EdgeFixings(forbidden={(0, 2)})) is None
    assert lower_bound(cost, EdgeFixings(forbidden={(0, 2)})) == np.inf
    cost5 = cost_matrix(generate(5, 1, 0)[1000])
    assert lower_bound(cost5, EdgeFixings(forbidden={(0, p) for p in range(5, 10)})) == np.inf
    assert lower_bound(cost5, EdgeFixings(forbidden={(0, p) for p in range(5, 9)})) == np.inf


def test_fixings_validation():
    with pytest.raises(InvalidParameterError):
        EdgeFixings(forced={(0, 2)}, forbidden={(0, 2)})
    with pytest.raises(InvalidParameterError):
        EdgeFixings(forced={(0, 3), (0, 4), (0, 5)})
    with pytest.raises(InvalidParameterError):
        masks(2, EdgeFixings(forced={(0, 1)}))
    f = EdgeFixings().force((0, 2)).forbid((1, 3))
    assert f.forced == {(0, 2)} and f.forbidden == {(1, 3)}


def test_degree_invariants_and_determinism():
    for inst in suite(7, count=10):
        cost = cost_matrix(inst)
        tf = min_cost_two_factor(cost)
        deg = tf.degree()
        assert len(tf.edges) == 14 and all(deg[v] == 2 for v in range(14))
        assert tf == min_cost_two_factor(cost)
        assert tf.cost == pytest.approx(sum(cost.d[i, p - 7] for i, p in tf.edges), abs=1e-12)


def _random_fixings(rng, n, k):
    edges = [(i, p) for i in range(n) for p in range(n, 2 * n)]
    rng.shuffle(edges)
    forced, forbidden, deg = set(), set(), {}
    for e in edges[:k]:
        if rng.random() < 0.5 and deg.get(e[0], 0) < 2 and deg.get(e[1], 0) < 2:
            forced.add(e)
            deg[e[0]] = deg.get(e[0], 0) + 1
            deg[e[1]] = deg.get(e[1], 0) + 1
        else:
            forbidden.add(e)
    return EdgeFixings(forced, forbidden)


def test_matches_independent_milp_under_random_fixings():
    rng = np.random.default_rng(5)
    for n in (2, 3, 4, 5, 6):
        for inst in suite(n, count=8):
            cost = cost_matrix(inst)
            for k in (0, 2, 5, 9):
                fx = _random_fixings(rng, n, min(k, n * n))
                ours = lower_bound(cost, fx)
                ref = milp_two_factor(cost.d, fx)
                if np.isinf(ref):
                    assert np.isinf(ours)
                else:
                    assert ours == pytest.approx(ref, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6), st.integers(0, 12))
def test_monotone_under_extra_fixings(n, seed, k):
    rng = np.random.default_rng(seed)
    cost = cost_matrix(generate(n, 1, seed)[1000])
    fx = _random_fixings(rng, n, min(k, n * n))
    base = lower_bound(cost, fx)
    e = (int(rng.integers(n)), int(n + rng.integers(n)))
    if e not in fx.forced:
        assert lower_bound(cost, fx.forbid(e)) >= base - 1e-9
    deg = {}
    for u, v in fx.forced:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    if e not in fx.forbidden and deg.get(e[0], 0) < 2 and deg.get(e[1], 0) < 2:
        assert lower_bound(cost, fx.force(e)) >= base - 1e-9


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_bound_sandwich(n):
    for inst in suite(n, count=20, fixed_pair=n % 2 == 0):
        cost = cost_matrix(inst)
        base = EdgeFixings(forced={(n - 1, 2 * n - 1)}) if inst.fixed_pair else None
        tf = min_cost_two_factor(cost, base)
        opt = brute_force_optimum(inst).cost
        assert tf.cost <= opt + 1e-9
        allowed, locked = masks(n, base)
        x, _ = solve_flow(np.ascontiguousarray(cost.d), allowed, locked)
        if len(cycle_walks(x)) == 1:
            assert tf.cost == pytest.approx(opt, abs=1e-9)


def test_warm_resolve_equals_cold_solve():
    for inst in suite(8, count=15):
        d = np.ascontiguousarray(cost_matrix(inst).d)
        allowed, locked = masks(8, None)
        x, pi = solve_flow(d, allowed, locked)
        for i, q in zip(*np.nonzero(x)):
            al = allowed.copy()
            al[i, q] = False
            xx, pp = x.copy(), pi.copy()
            ok = reoptimize_without(d, al, locked, xx, pp, int(i), int(q))
            cold = solve_flow(d, al, locked)
            assert ok == (cold is not None)
            if ok:
                assert d[xx].sum() == pytest.approx(d[cold[0]].sum(), abs=1e-9)
                assert (xx.sum(axis=0) == 2).all() and (xx.sum(axis=1) == 2).all()


def test_cycle_walks_agree_with_reference_walk():
    for inst in suite(9, count=10):
        d = np.ascontiguousarray(cost_matrix(inst).d)
        x, _ = solve_flow(d, *masks(9, None))
        fast = sorted(sorted(map(int, w)) for w in cycle_walks(x))
        ref = sorted(sorted(w) for w in edges_in_order(x))
        assert fast == ref


def test_two_cluster_instance_splits():
    inst = clustered()
    tf = min_cost_two_factor(cost_matrix(inst))
    x = np.zeros((6, 6), bool)
    for i, p in tf.edges:
        x[i, p - 6] = True
    assert sorted(sorted(map(int, w)) for w in cycle_walks(x)) == [[0, 1, 2, 6, 7, 8], [3, 4, 5, 9, 10, 11]]


@pytest.mark.parametrize("n", [4, 5])
def test_priced_cuts_keep_a_valid_bound(n):
    """Penalized 2-factor minus offset never exceeds any tour's true cost."""
    orders = tour_orders(n, True)
    priced_any = False
    for inst in suite(n, count=10):
        cost = cost_matrix(inst)
        d = np.ascontiguousarray(cost.d)
        allowed, locked = masks(n, EdgeFixings(forced={(n - 1, 2 * n - 1)}))
        opt = brute_force_optimum(inst).cost
        mult = subtour_multipliers(d, allowed, locked, opt * 1.05)
        assert mult.bound <= opt + 1e-9
        assert (mult.lam >= 0).all()
        priced_any |= bool((mult.lam > 0).any())
        true = tour_costs(orders, cost)
        o = orders.astype(int)
        nxt = np.roll(o, -1, axis=1)
        items = np.where(o < n, o, nxt)
        places = np.where(o < n, nxt, o) - n
        priced = (d + mult.penalty)[items, places].sum(axis=1) - mult.offset
        assert (priced <= true + 1e-9).all()
    assert priced_any

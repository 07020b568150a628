"""Exhaustive enumeration of alternating Hamiltonian cycles (n <= 7).

Each undirected cycle is generated exactly once from a canonical directed
form:

* free: start at item 0, list the remaining items in every order and the
  placeholders in every order, interleaved; keep the direction whose first
  placeholder has the smaller id than the last one.  n!(n-1)!/2 cycles.
* fixed pair: start at the last placeholder, end at the last item; the
  other items and placeholders in every order.  ((n-1)!)^2 cycles.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import OracleCapError
from .heuristics import full_distance
from .instance import CostMatrix, Instance, cost_matrix
from .tour import CycleSolution, SolveStats, make_solution, orient_tour, tour_edges

MIN_N, MAX_N = 2, 7


def _check(n: int) -> None:
    if not MIN_N <= n <= MAX_N:
        raise OracleCapError(f"enumeration supports {MIN_N} <= n <= {MAX_N}, got n={n}")


def _perms(values) -> np.ndarray:
    values = list(values)
    if not values:
        return np.zeros((1, 0), dtype=np.int16)
    return np.array(list(itertools.permutations(values)), dtype=np.int16)


@lru_cache(maxsize=16)
def tour_orders(n: int, fixed_pair: bool) -> np.ndarray:
    """Canonical directed orders, one row per undirected cycle (read-only)."""
    _check(n)
    m = 2 * n
    if fixed_pair:
        items = _perms(range(n - 1))
        places = _perms(range(n, m - 1))
        k1, k2 = len(items), len(places)
        out = np.empty((k1 * k2, m), dtype=np.int16)
        out[:, 0] = m - 1
        out[:, -1] = n - 1
        out[:, 1:m - 1:2] = np.repeat(items, k2, axis=0)
        out[:, 2:m - 1:2] = np.tile(places, (k1, 1))
    else:
        items = _perms(range(1, n))
        places = _perms(range(n, m))
        places = places[places[:, 0] < places[:, -1]]
        k1, k2 = len(items), len(places)
        out = np.empty((k1 * k2, m), dtype=np.int16)
        out[:, 0] = 0
        out[:, 2::2] = np.repeat(items, k2, axis=0)
        out[:, 1::2] = np.tile(places, (k1, 1))
    out.setflags(write=False)
    return out


def count_tours(n: int, fixed_pair: bool) -> int:
    from math import factorial

    if fixed_pair:
        return factorial(n - 1) ** 2
    return factorial(n) * factorial(n - 1) // 2


def enumerate_tours(n: int, fixed_pair: bool = False) -> Iterator[frozenset]:
    """Every distinct undirected alternating Hamiltonian cycle, as an edge set."""
    for row in tour_orders(n, fixed_pair):
        yield frozenset(tour_edges(row.tolist()))


def tour_costs(orders: np.ndarray, cost: CostMatrix) -> np.ndarray:
    D = full_distance(cost)
    o = orders.astype(np.int64)
    return D[o, np.roll(o, -1, axis=1)].sum(axis=1)


def compatible_rows(orders: np.ndarray, instance: Instance) -> np.ndarray:
    """Rows that can be driven in a direction delivering every item to a compatible placeholder."""
    mask = instance.compat()
    if mask is None:
        return np.ones(len(orders), dtype=bool)
    n = instance.n
    o = orders.astype(np.int64)

    def ok(rows):
        nxt = np.roll(rows, -1, axis=1)
        good = np.where(rows < n, mask[np.minimum(rows, n - 1), np.clip(nxt - n, 0, n - 1)], True)
        return good.all(axis=1)

    fwd = ok(o)
    if instance.fixed_pair:
        return fwd
    rev = np.concatenate([o[:, :1], o[:, :0:-1]], axis=1)
    return fwd | ok(rev)


def brute_force_optimum(instance: Instance, cost: CostMatrix | None = None) -> CycleSolution:
    """Cheapest tour by full enumeration; ties go to the lexicographically smallest order."""
    cost = cost or cost_matrix(instance)
    n = instance.n
    orders = tour_orders(n, instance.fixed_pair)
    costs = tour_costs(orders, cost)
    keep = compatible_rows(orders, instance)
    if not keep.any():
        from .errors import InfeasibleError

        raise InfeasibleError("no tour respects the type compatibility")
    costs = np.where(keep, costs, np.inf)
    best = costs.min()
    ties = np.flatnonzero(costs <= best)
    oriented = [orient_tour(tour_edges(orders[k].tolist()), instance) for k in ties]
    order = min(oriented)
    stats = SolveStats(solver="oracle", nodes_explored=len(orders), best_bound=float(best),
                       incumbent_cost=float(best), binary_var_count=n * n)
    return make_solution(instance, cost, order=order, stats=stats)

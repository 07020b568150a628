"""Directed tours: orientation, delivery assignment, and the solution record."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidCycleError, InvalidOrderError
from .instance import CostMatrix, Instance


# Callables ``hook(instance, cost, solution)`` run on every solution built
# by make_solution; used for auditing, empty by default.
solution_hooks: list = []


@dataclass
class SolveStats:
    nodes_explored: int = 0
    subtours_branched: int = 0
    best_bound: float = 0.0
    incumbent_cost: float = float("inf")
    dt: float = 0.0
    timed_out: bool = False
    binary_var_count: int = 0
    solver: str = "exact"
    root_bound: float = 0.0
    incumbent_updates: int = 0

    @property
    def gap(self) -> float:
        """Relative optimality gap ``(incumbent - bound) / incumbent``."""
        if not np.isfinite(self.incumbent_cost) or self.incumbent_cost <= 0:
            return 0.0 if self.incumbent_cost == self.best_bound else float("inf")
        return max(0.0, (self.incumbent_cost - self.best_bound) / self.incumbent_cost)


@dataclass
class CycleSolution:
    order: list[int]
    edges: list[tuple[int, int]]
    assignment: dict[int, int]
    cost: float
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def n(self) -> int:
        return len(self.order) // 2

    def directed_edges(self) -> list[tuple[int, int]]:
        m = len(self.order)
        return [(self.order[k], self.order[(k + 1) % m]) for k in range(m)]


def _cycle_neighbours(edges, n: int) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(2 * n)]
    for u, v in edges:
        if not (0 <= u < 2 * n and 0 <= v < 2 * n) or (u < n) == (v < n):
            raise InvalidCycleError(f"({u}, {v}) is not an item-placeholder edge")
        nbrs[u].append(v)
        nbrs[v].append(u)
    for v in range(2 * n):
        if len(nbrs[v]) != 2 or nbrs[v][0] == nbrs[v][1]:
            raise InvalidCycleError(f"node {v} does not have two distinct neighbours")
    return nbrs


def _walk(nbrs, start: int, first: int) -> list[int]:
    order = [start]
    prev, cur = start, first
    while cur != start:
        order.append(cur)
        a, b = nbrs[cur]
        prev, cur = cur, (b if a == prev else a)
    return order


def _respects(order, mask, n) -> bool:
    m = len(order)
    return all(mask[order[k], order[(k + 1) % m] - n] for k in range(m) if order[k] < n)


def orient_tour(edges: Iterable, instance: Instance) -> list[int]:
    """Turn an undirected alternating Hamiltonian cycle into a directed tour.

    With a fixed pair the tour starts at the last placeholder and leaves it
    away from the last item, so it ends with the goal item returning to the
    start.  Otherwise it starts at the first placeholder and heads to its
    lower-id item neighbour, unless only the opposite direction respects
    the instance's type compatibility.
    """
    n = instance.n
    edges = [tuple(e) for e in edges]
    if len(edges) != 2 * n:
        raise InvalidCycleError(f"expected {2 * n} edges, got {len(edges)}")
    nbrs = _cycle_neighbours(edges, n)
    if instance.fixed_pair:
        s, g = 2 * n - 1, n - 1
        if g not in nbrs[s]:
            raise InvalidCycleError(f"fixed edge ({g}, {s}) missing")
        first = nbrs[s][0] if nbrs[s][1] == g else nbrs[s][1]
        order = _walk(nbrs, s, first)
    else:
        order = _walk(nbrs, n, min(nbrs[n]))
        mask = instance.compat()
        if mask is not None and not _respects(order, mask, n):
            flipped = [order[0]] + order[:0:-1]
            if _respects(flipped, mask, n):
                order = flipped
    if len(order) != 2 * n:
        raise InvalidCycleError(f"edges split into several cycles (walk covers {len(order)} of {2 * n})")
    return order


def derive_assignment(order) -> dict[int, int]:
    """Map each item to the placeholder visited right after it."""
    order = [int(v) for v in order]
    m = len(order)
    if m < 4 or m % 2:
        raise InvalidOrderError(f"order length {m} is not an even number >= 4")
    n = m // 2
    if sorted(order) != list(range(m)):
        raise InvalidOrderError("order is not a permutation of 0..2n-1")
    out = {}
    for k in range(m):
        u, v = order[k], order[(k + 1) % m]
        if (u < n) == (v < n):
            raise InvalidOrderError(f"consecutive nodes {u}, {v} are on the same side")
        if u < n:
            out[u] = v
    return out


def tour_edges(order) -> list[tuple[int, int]]:
    m = len(order)
    return sorted((min(order[k], order[(k + 1) % m]), max(order[k], order[(k + 1) % m])) for k in range(m))


def make_solution(instance: Instance, cost: CostMatrix, order=None, edges=None,
                  stats: Optional[SolveStats] = None) -> CycleSolution:
    """Build a :class:`CycleSolution` from a directed order or an undirected edge set."""
    if order is None:
        order = orient_tour(edges, instance)
    order = [int(v) for v in order]
    sol = CycleSolution(
        order=order,
        edges=tour_edges(order),
        assignment=derive_assignment(order),
        cost=cost.tour_cost(order),
        stats=stats if stats is not None else SolveStats(),
    )
    for hook in solution_hooks:
        hook(instance, cost, sol)
    return sol

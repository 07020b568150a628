"""Minimum-cost bipartite 2-factor under edge fixings.

Dropping subtour elimination from the tour model leaves a transportation
problem: every item sends two units, every placeholder receives two, and
each item-placeholder edge carries at most one.  Its constraint matrix is
totally unimodular, so the integral optimum computed here by successive
shortest paths is also the optimum of the continuous relaxation.  Every
alternating Hamiltonian cycle is a 2-factor, which makes the optimum a
valid lower bound on the tour cost.

Internally, items are flow nodes ``0..n-1`` and placeholders ``n..2n-1``
(local placeholder ``q`` is flow node ``n + q``), matching the global ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .errors import InvalidParameterError
from .instance import CostMatrix

Edge = tuple[int, int]


@dataclass(frozen=True)
class EdgeFixings:
    """Branching state: edges forced into or forbidden from the 2-factor.

    Edges are ``(item, placeholder)`` pairs of global node ids.
    """

    forced: frozenset = field(default_factory=frozenset)
    forbidden: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "forced", frozenset(map(tuple, self.forced)))
        object.__setattr__(self, "forbidden", frozenset(map(tuple, self.forbidden)))
        both = self.forced & self.forbidden
        if both:
            raise InvalidParameterError(f"edges both forced and forbidden: {sorted(both)}")
        degree: dict[int, int] = {}
        for u, v in self.forced:
            degree[u] = degree.get(u, 0) + 1
            degree[v] = degree.get(v, 0) + 1
        crowded = sorted(v for v, k in degree.items() if k > 2)
        if crowded:
            raise InvalidParameterError(f"nodes with more than 2 forced edges: {crowded}")

    def force(self, *edges: Edge) -> "EdgeFixings":
        return EdgeFixings(self.forced | set(edges), self.forbidden)

    def forbid(self, *edges: Edge) -> "EdgeFixings":
        return EdgeFixings(self.forced, self.forbidden | set(edges))


@dataclass(frozen=True)
class TwoFactor:
    edges: frozenset
    cost: float

    def degree(self) -> dict[int, int]:
        deg: dict[int, int] = {}
        for u, v in self.edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        return deg


@njit(cache=True, nogil=True)
def _augment(d, allowed, locked, x, pi, src, deficit):
    """Push one unit from item ``src`` to a placeholder with positive deficit.

    Dijkstra on reduced costs ``c + pi[u] - pi[v]`` over the residual graph:
    unused allowed edges run item -> placeholder at ``+d``, used unlocked
    edges run placeholder -> item at ``-d``.  Nodes are scanned in id order,
    so ties resolve to the lowest id.  Returns False if no deficit node is
    reachable; ``x``, ``pi`` and ``deficit`` are updated in place otherwise.
    """
    n = d.shape[0]
    m = 2 * n
    inf = np.inf
    dist = np.full(m, inf)
    pred = np.full(m, -1, np.int64)
    done = np.zeros(m, np.bool_)
    dist[src] = 0.0
    target = -1
    while True:
        u = -1
        best = inf
        for v in range(m):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        if u >= n:
            q = u - n
            if deficit[q] > 0:
                target = u
                break
            for i in range(n):
                if x[i, q] and not locked[i, q] and not done[i]:
                    nd = best - d[i, q] + pi[u] - pi[i]
                    if nd < dist[i]:
                        dist[i] = nd
                        pred[i] = u
        else:
            for q in range(n):
                if allowed[u, q] and not x[u, q] and not done[n + q]:
                    nd = best + d[u, q] + pi[u] - pi[n + q]
                    if nd < dist[n + q]:
                        dist[n + q] = nd
                        pred[n + q] = u
    if target < 0:
        return False
    reach = dist[target]
    for v in range(m):
        pi[v] += min(dist[v], reach)
    v = target
    while v != src:
        u = pred[v]
        if u < n:
            x[u, v - n] = True
        else:
            x[v, u - n] = False
        v = u
    deficit[target - n] -= 1
    return True


def masks(n: int, fixings: Optional[EdgeFixings]) -> tuple[np.ndarray, np.ndarray]:
    """Boolean ``(allowed, locked)`` matrices, indexed ``[item, local placeholder]``."""
    allowed = np.ones((n, n), dtype=np.bool_)
    locked = np.zeros((n, n), dtype=np.bool_)
    if fixings is not None:
        for i, p in fixings.forbidden:
            allowed[_local(i, p, n)] = False
        for i, p in fixings.forced:
            locked[_local(i, p, n)] = True
    return allowed, locked


def _local(i: int, p: int, n: int) -> tuple[int, int]:
    if i >= n:
        i, p = p, i
    if not (0 <= i < n and n <= p < 2 * n):
        raise InvalidParameterError(f"({i}, {p}) is not an item-placeholder edge for n={n}")
    return i, p - n


def solve_flow(d: np.ndarray, allowed: np.ndarray, locked: np.ndarray):
    """Cold-start solve; returns ``(x, pi)`` or None when infeasible.

    Forced edges are pre-loaded as used flow and removed from the residual
    graph, so with zero potentials every remaining arc has cost >= 0.
    """
    n = d.shape[0]
    x = locked.copy()
    deficit = (2 - x.sum(axis=0)).astype(np.int64)
    excess = 2 - x.sum(axis=1)
    if deficit.min() < 0 or excess.min() < 0:
        return None
    pi = np.zeros(2 * n)
    for i in range(n):
        for _ in range(int(excess[i])):
            if not _augment(d, allowed, locked, x, pi, i, deficit):
                return None
    return x, pi


def reoptimize_without(d, allowed, locked, x, pi, i: int, q: int) -> bool:
    """Warm re-solve after edge ``(i, q)`` (local ids) was used and is now forbidden.

    The caller has already cleared ``allowed[i, q]``.  Dropping the unit on
    that edge keeps the remaining flow optimal for the reduced supplies, so
    a single shortest path from ``i`` back to ``q`` restores optimality.
    """
    x[i, q] = False
    deficit = np.zeros(d.shape[0], dtype=np.int64)
    deficit[q] = 1
    return _augment(d, allowed, locked, x, pi, i, deficit)


def _to_two_factor(d: np.ndarray, x: np.ndarray) -> TwoFactor:
    n = d.shape[0]
    items, places = np.nonzero(x)
    edges = frozenset((int(i), int(n + p)) for i, p in zip(items, places))
    return TwoFactor(edges, float(d[x].sum()))


def min_cost_two_factor(cost: CostMatrix, fixings: Optional[EdgeFixings] = None) -> Optional[TwoFactor]:
    """Cheapest 2-factor respecting ``fixings``; None if none exists."""
    d = np.ascontiguousarray(cost.d, dtype=np.float64)
    allowed, locked = masks(cost.n, fixings)
    if np.any(locked & ~allowed):
        return None
    solved = solve_flow(d, allowed, locked)
    if solved is None:
        return None
    return _to_two_factor(d, solved[0])


def lower_bound(cost: CostMatrix, fixings: Optional[EdgeFixings] = None) -> float:
    tf = min_cost_two_factor(cost, fixings)
    return np.inf if tf is None else tf.cost


def edges_in_order(x: np.ndarray) -> list[list[int]]:
    """Cycles of a 2-factor given as a used-edge matrix, each as a node walk.

    Each walk starts at its smallest node and steps first to the smaller
    of that node's two neighbours.
    """
    n = x.shape[0]
    nbrs: list[list[int]] = [[] for _ in range(2 * n)]
    for i, q in zip(*np.nonzero(x)):
        nbrs[int(i)].append(int(n + q))
        nbrs[int(n + q)].append(int(i))
    return walk_cycles(nbrs)


def walk_cycles(nbrs: list) -> list[list[int]]:
    seen = [False] * len(nbrs)
    out = []
    for s in range(len(nbrs)):
        if seen[s]:
            continue
        walk = [s]
        seen[s] = True
        prev, cur = s, min(nbrs[s])
        while cur != s:
            seen[cur] = True
            walk.append(cur)
            a, b = nbrs[cur]
            prev, cur = cur, (b if a == prev else a)
        out.append(walk)
    return out


def edge_list(edges: Iterable) -> list[Edge]:
    """Normalize undirected edges to ``(item, placeholder)`` order, sorted."""
    return sorted((min(u, v), max(u, v)) for u, v in edges)


@njit(cache=True)
def _cycle_walks(x):
    """Flattened cycle walks of a 2-factor and their start offsets.

    Walks start at their smallest node and are listed by that node.
    """
    n = x.shape[0]
    m = 2 * n
    nb = np.full((m, 2), -1, np.int64)
    cnt = np.zeros(m, np.int64)
    for i in range(n):
        for q in range(n):
            if x[i, q]:
                nb[i, cnt[i]] = n + q
                cnt[i] += 1
                nb[n + q, cnt[n + q]] = i
                cnt[n + q] += 1
    seen = np.zeros(m, np.bool_)
    flat = np.empty(m, np.int64)
    starts = np.empty(m + 1, np.int64)
    pos = 0
    k = 0
    for s in range(m):
        if seen[s]:
            continue
        starts[k] = pos
        k += 1
        flat[pos] = s
        pos += 1
        seen[s] = True
        prev = s
        cur = min(nb[s, 0], nb[s, 1])
        while cur != s:
            seen[cur] = True
            flat[pos] = cur
            pos += 1
            nxt = nb[cur, 1] if nb[cur, 0] == prev else nb[cur, 0]
            prev = cur
            cur = nxt
    starts[k] = pos
    return flat, starts[: k + 1]


def cycle_walks(x: np.ndarray) -> list[np.ndarray]:
    """Fast equivalent of :func:`edges_in_order` for a valid 2-factor."""
    flat, starts = _cycle_walks(x)
    return [flat[starts[k]:starts[k + 1]] for k in range(len(starts) - 1)]


@dataclass
class Multipliers:
    """Nonnegative prices on subtour cuts, folded into the edge costs.

    For any tour ``t`` and prices ``lam >= 0``:
    ``sum(d + penalty) over t - offset = cost(t) + sum lam_S (|E(S) & t| - |S| + 1) <= cost(t)``,
    so the 2-factor optimum under the penalized costs, minus ``offset``,
    is still a lower bound on every tour.
    """

    cuts: list
    lam: np.ndarray
    penalty: np.ndarray
    offset: float
    bound: float
    iterations: int

    @classmethod
    def none(cls, n: int, bound: float = -np.inf) -> "Multipliers":
        return cls([], np.zeros(0), np.zeros((n, n)), 0.0, bound, 0)


def _penalty(members: np.ndarray, lam: np.ndarray, n: int) -> np.ndarray:
    if len(lam) == 0:
        return np.zeros((n, n))
    a = members[:, :n].astype(np.float64)
    b = members[:, n:].astype(np.float64)
    return (a * lam[:, None]).T @ b


def subtour_multipliers(d: np.ndarray, allowed: np.ndarray, locked: np.ndarray, upper: float,
                        iterations: int = 300, patience: int = 15, seed_cuts=None,
                        deadline: Optional[float] = None) -> Multipliers:
    """Subgradient ascent on subtour-cut prices (relax-and-cut).

    Each iteration solves the penalized 2-factor, adds every cycle of a
    disconnected solution to the cut pool, and moves prices along
    ``|E(S) & x| - (|S| - 1)`` with a Polyak step towards ``upper``.
    Returns the best prices seen.
    """
    import time as _time

    n = d.shape[0]
    m = 2 * n
    pool: dict[tuple, int] = {}
    rows: list[np.ndarray] = []
    for s in seed_cuts or ():
        key = tuple(sorted(s))
        if key not in pool:
            pool[key] = len(rows)
            row = np.zeros(m, dtype=np.bool_)
            row[list(key)] = True
            rows.append(row)
    lam = np.zeros(len(rows))
    best = Multipliers.none(n)
    alpha = 2.0
    stale = 0
    for it in range(iterations):
        members = np.array(rows) if rows else np.zeros((0, m), dtype=np.bool_)
        pen = _penalty(members, lam, n)
        offset = float(lam @ (members.sum(axis=1) - 1)) if rows else 0.0
        dd = d + pen
        solved = solve_flow(dd, allowed, locked)
        if solved is None:
            return Multipliers.none(n, np.inf)
        x = solved[0]
        value = float(dd[x].sum()) - offset
        if value > best.bound + 1e-12:
            best = Multipliers([r.copy() for r in rows], lam.copy(), pen, offset, value, it + 1)
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                alpha *= 0.5
                stale = 0
        if value >= upper - 1e-9 or alpha < 1e-4:
            break
        if deadline is not None and _time.perf_counter() > deadline:
            break
        walks = cycle_walks(x)
        if len(walks) > 1:
            for w in walks:
                key = tuple(sorted(int(v) for v in w))
                if key not in pool:
                    pool[key] = len(rows)
                    row = np.zeros(m, dtype=np.bool_)
                    row[list(key)] = True
                    rows.append(row)
                    lam = np.append(lam, 0.0)
        members = np.array(rows) if rows else np.zeros((0, m), dtype=np.bool_)
        if not rows:
            break
        inside = (members[:, :n].astype(np.int64) @ x.astype(np.int64) * members[:, n:]).sum(axis=1)
        grad = inside - (members.sum(axis=1) - 1)
        grad = np.where((lam <= 0) & (grad < 0), 0, grad).astype(np.float64)
        norm = float(grad @ grad)
        if norm == 0:
            break
        step = alpha * (upper - value) / norm
        lam = np.maximum(0.0, lam + step * grad)
    return best

"""Construction and local search for alternating tours.

Tours are handled as arrays of global node ids.  Both neighbourhoods keep
items and placeholders alternating:

* 2-opt removes two tour edges at odd distance from each other (one
  traversed item -> placeholder, the other placeholder -> item) and
  reverses the path between them.  Edges at even distance would have to be
  reconnected item-item and placeholder-placeholder.
* relocate lifts an adjacent item/placeholder pair out of the tour and
  reinserts it between two other consecutive nodes, flipped if needed so
  that sides keep alternating.  Moving a single node cannot work: its two
  former neighbours would end up adjacent on the same side.

With a fixed pair, position 0 holds the start placeholder and position
``2n-1`` the goal item; neither moves and the closing edge between them is
never removed.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .instance import CostMatrix, Instance, cost_matrix
from .tour import CycleSolution, SolveStats, make_solution, orient_tour

IMPROVE_EPS = 1e-12
SECOND_CHOICE_PROB = 0.3


def full_distance(cost: CostMatrix) -> np.ndarray:
    """(2n, 2n) matrix over global ids; same-side pairs are +inf."""
    n = cost.n
    D = np.full((2 * n, 2 * n), np.inf)
    D[:n, n:] = cost.d
    D[n:, :n] = cost.d.T
    return D


def _pick(dists: np.ndarray, rng) -> int:
    """Index of the nearest finite entry, or the second nearest with probability 0.3."""
    if rng is not None and np.count_nonzero(np.isfinite(dists)) > 1 and rng.random() < SECOND_CHOICE_PROB:
        two = np.argpartition(dists, 1)[:2]
        two = two[np.argsort(dists[two], kind="stable")]
        return int(two[1])
    return int(np.argmin(dists))


def greedy_construct(instance: Instance, cost: Optional[CostMatrix] = None,
                     seed: Optional[int] = None) -> CycleSolution:
    """Nearest-neighbour tour alternating placeholder -> item -> placeholder.

    ``seed=None`` gives the plain nearest-neighbour tour; with a seed each
    step takes the second-nearest candidate with probability 0.3.
    """
    cost = cost or cost_matrix(instance)
    n = instance.n
    d = cost.d
    mask = instance.compat()
    rng = None if seed is None else np.random.default_rng(seed)
    start = 2 * n - 1 if instance.fixed_pair else n
    item_free = np.ones(n, dtype=bool)
    place_free = np.ones(n, dtype=bool)
    place_free[start - n] = False
    order = [start]
    cur = start
    for step in range(n):
        cand = item_free.copy()
        if instance.fixed_pair and step < n - 1:
            cand[n - 1] = False
        row = np.where(cand, d[:, cur - n], np.inf)
        i = _pick(row, rng)
        item_free[i] = False
        order.append(i)
        if step == n - 1:
            break
        cand = place_free.copy()
        if mask is not None and (cand & mask[i]).any():
            cand &= mask[i]
        row = np.where(cand, d[i], np.inf)
        q = _pick(row, rng)
        place_free[q] = False
        cur = n + q
        order.append(cur)
    if not instance.fixed_pair:
        order = orient_tour(_edges(order), instance)
    stats = SolveStats(solver="heuristic", best_bound=0.0)
    sol = make_solution(instance, cost, order=order, stats=stats)
    sol.stats.incumbent_cost = sol.cost
    return sol


def _edges(order):
    m = len(order)
    return [(order[k], order[(k + 1) % m]) for k in range(m)]


def _delivers_ok(order: np.ndarray, mask: Optional[np.ndarray], n: int) -> bool:
    if mask is None:
        return True
    nxt = np.roll(order, -1)
    items = order < n
    return bool(mask[order[items], nxt[items] - n].all())


def two_opt_pass(order: np.ndarray, D: np.ndarray, fixed: bool,
                 mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
    """One sweep of best-improvement 2-opt per first edge; returns (order, total gain)."""
    m = len(order)
    n = m // 2
    gain = 0.0
    last_b = m - 2 if fixed else m - 1
    for a in range(0, m - 3):
        t = order
        bs = np.arange(a + 3, last_b + 1, 2)
        if a == 0 and not fixed:
            bs = bs[bs != m - 1]
        if bs.size == 0:
            continue
        nb = (bs + 1) % m
        delta = (D[t[a], t[bs]] + D[t[a + 1], t[nb]]
                 - D[t[a], t[a + 1]] - D[t[bs], t[nb]])
        for k in np.argsort(delta, kind="stable"):
            if delta[k] >= -IMPROVE_EPS:
                break
            b = int(bs[k])
            cand = np.concatenate([t[:a + 1], t[a + 1:b + 1][::-1], t[b + 1:]])
            if _delivers_ok(cand, mask, n):
                order = cand
                gain -= float(delta[k])
                break
            if mask is None:
                break
    return order, gain


def relocate_pass(order: np.ndarray, D: np.ndarray, fixed: bool,
                  mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
    """One sweep of best-improvement pair relocation; returns (order, total gain)."""
    m = len(order)
    n = m // 2
    gain = 0.0
    if m < 6:
        return order, 0.0
    k = 0
    while k < m:
        t = order
        if fixed and (k in (0, m - 1) or k + 1 >= m - 1):
            k += 1
            continue
        # rotate so the pair sits at positions 1, 2
        r = np.roll(t, 1 - k)
        prev, s0, s1, nxt = r[0], r[1], r[2], r[3]
        removal = D[prev, nxt] - D[prev, s0] - D[s1, nxt]
        js = np.arange(3, m)
        u = r[js]
        w = r[(js + 1) % m]
        if fixed:
            g, s = n - 1, 2 * n - 1
            keep = ~((u == g) & (w == s))
            js, u, w = js[keep], u[keep], w[keep]
        # u is on the same side as s1 -> insert as (u, s0, s1, w); otherwise flipped
        same = (u < n) == (s1 < n)
        a = np.where(same, s0, s1)
        b = np.where(same, s1, s0)
        delta = removal + D[u, a] + D[b, w] - D[u, w]
        moved = False
        for idx in np.argsort(delta, kind="stable"):
            if delta[idx] >= -IMPROVE_EPS:
                break
            j = int(js[idx])
            rest = np.concatenate([r[:1], r[3:]])  # pair removed; r[j] is now at j - 2
            pos = j - 2
            pair = np.array([a[idx], b[idx]])
            cand = np.concatenate([rest[:pos + 1], pair, rest[pos + 1:]])
            cand = _reanchor(cand, order[0], fixed, n)
            if _delivers_ok(cand, mask, n):
                order = cand
                gain -= float(delta[idx])
                moved = True
                break
            if mask is None:
                break
        if not moved:
            k += 1
    return order, gain


def _reanchor(order: np.ndarray, first: int, fixed: bool, n: int) -> np.ndarray:
    """Rotate so ``first`` leads again (orientation unchanged)."""
    pos = int(np.flatnonzero(order == first)[0])
    return np.roll(order, -pos)


def _polish(order: np.ndarray, D: np.ndarray, fixed: bool, mask, deadline: Optional[float] = None) -> np.ndarray:
    while True:
        order, g1 = two_opt_pass(order, D, fixed, mask)
        order, g2 = relocate_pass(order, D, fixed, mask)
        if g1 <= 0 and g2 <= 0:
            return order
        if deadline is not None and time.perf_counter() > deadline:
            return order


def _finish(instance: Instance, cost: CostMatrix, order: np.ndarray, solver: str) -> CycleSolution:
    order = [int(v) for v in order]
    if not instance.fixed_pair:
        order = orient_tour(_edges(order), instance)
    sol = make_solution(instance, cost, order=order, stats=SolveStats(solver=solver))
    sol.stats.incumbent_cost = sol.cost
    return sol


def two_opt_improve(solution: CycleSolution, cost: CostMatrix, instance: Optional[Instance] = None) -> CycleSolution:
    """Apply improving 2-opt moves until none is left."""
    instance = instance or _bare_instance(solution, cost)
    D = full_distance(cost)
    order = np.asarray(solution.order)
    mask = instance.compat()
    while True:
        order, g = two_opt_pass(order, D, instance.fixed_pair, mask)
        if g <= 0:
            break
    return _finish(instance, cost, order, "heuristic")


def relocate_improve(solution: CycleSolution, cost: CostMatrix, instance: Optional[Instance] = None) -> CycleSolution:
    """Apply improving pair relocations until none is left."""
    instance = instance or _bare_instance(solution, cost)
    D = full_distance(cost)
    order = np.asarray(solution.order)
    mask = instance.compat()
    while True:
        order, g = relocate_pass(order, D, instance.fixed_pair, mask)
        if g <= 0:
            break
    return _finish(instance, cost, order, "heuristic")


def _bare_instance(solution: CycleSolution, cost: CostMatrix) -> Instance:
    """Placeholder instance carrying only n and the fixed-pair convention.

    Coordinates are never read by the moves (they work on ``cost``); the
    fixed pair is inferred from the tour's anchoring.
    """
    n = cost.n
    fixed = solution.order[0] == 2 * n - 1 and solution.order[-1] == n - 1
    zeros = np.zeros((n, 2))
    return Instance(-1, zeros, zeros, None, fixed)


def local_search(instance: Instance, restarts: int = 8, seed: int = 0,
                 time_limit: Optional[float] = None, cost: Optional[CostMatrix] = None) -> CycleSolution:
    """Best of ``restarts`` randomized greedy tours, each polished to a local optimum.

    Restart 0 starts from ``greedy_construct(instance, cost, seed)``; the
    others use seeds spawned from ``seed``.  Restarts stop early (after the
    first) once ``time_limit`` seconds have passed.
    """
    t0 = time.perf_counter()
    cost = cost or cost_matrix(instance)
    D = full_distance(cost)
    mask = instance.compat()
    seeds = [seed] + [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(max(0, restarts - 1))]
    deadline = None if time_limit is None else t0 + time_limit
    best = None
    for k, s in enumerate(seeds):
        if k > 0 and deadline is not None and time.perf_counter() > deadline:
            break
        start = greedy_construct(instance, cost, s)
        order = _polish(np.asarray(start.order), D, instance.fixed_pair, mask, deadline)
        c = cost.tour_cost(order)
        if best is None or c < best[0] - IMPROVE_EPS:
            best = (c, order)
    sol = _finish(instance, cost, best[1], "heuristic")
    sol.stats.dt = time.perf_counter() - t0
    return sol


def polish_order(order, instance: Instance, D: np.ndarray, deadline: Optional[float] = None) -> np.ndarray:
    """Local-search an existing anchored order (used to improve patched relaxations)."""
    return _polish(np.asarray(order), D, instance.fixed_pair, instance.compat(), deadline)


def improving_moves(order, D: np.ndarray, fixed: bool) -> list[tuple[str, int, int, float]]:
    """Exhaustive scan of both neighbourhoods; lists every strictly improving move."""
    order = np.asarray(order)
    m = len(order)
    n = m // 2
    found = []
    last_b = m - 2 if fixed else m - 1
    for a in range(m):
        for b in range(a + 3, last_b + 1, 2):
            if a == 0 and b == m - 1:
                continue
            t = order
            delta = (D[t[a], t[b]] + D[t[a + 1], t[(b + 1) % m]]
                     - D[t[a], t[a + 1]] - D[t[b], t[(b + 1) % m]])
            if delta < -IMPROVE_EPS:
                found.append(("2opt", a, b, float(delta)))
    if m < 6:
        return found
    for k in range(m):
        if fixed and (k in (0, m - 1) or k + 1 >= m - 1):
            continue
        r = np.roll(order, 1 - k)
        prev, s0, s1, nxt = r[0], r[1], r[2], r[3]
        for j in range(3, m):
            u, w = r[j], r[(j + 1) % m]
            if fixed and u == n - 1 and w == 2 * n - 1:
                continue
            a, b = (s0, s1) if (u < n) == (s1 < n) else (s1, s0)
            delta = D[prev, nxt] - D[prev, s0] - D[s1, nxt] + D[u, a] + D[b, w] - D[u, w]
            if delta < -IMPROVE_EPS:
                found.append(("relocate", k, j, float(delta)))
    return found


def patch_cycles(walks: list[list[int]], D: np.ndarray, fixed: bool) -> list[int]:
    """Merge the cycles of a 2-factor into one tour by cheapest edge exchanges.

    Repeatedly joins the smallest cycle to another one: remove item-placeholder
    edge ``(a, b)`` from it and ``(c, e)`` from the other, add ``(a, e)`` and
    ``(c, b)``.  The fixed start/goal edge is never removed.
    """
    m = D.shape[0]
    n = m // 2
    nbr = np.full((m, 2), -1, dtype=np.int64)
    for w in walks:
        L = len(w)
        for k in range(L):
            nbr[w[k], 0] = w[k - 1]
            nbr[w[k], 1] = w[(k + 1) % L]
    comps = [list(w) for w in walks]

    def cycle_edges(nodes):
        out = []
        for u in nodes:
            if u < n:
                for v in nbr[u]:
                    if not (fixed and u == n - 1 and v == m - 1):
                        out.append((u, int(v)))
        return out

    while len(comps) > 1:
        comps.sort(key=len)
        small = cycle_edges(comps[0])
        other = [e for c in comps[1:] for e in cycle_edges(c)]
        A = np.array(small)
        B = np.array(other)
        delta = (D[A[:, 0][:, None], B[:, 1][None, :]] + D[B[:, 0][None, :], A[:, 1][:, None]]
                 - D[A[:, 0], A[:, 1]][:, None] - D[B[:, 0], B[:, 1]][None, :])
        k = int(np.argmin(delta))
        (a, b), (c, e) = small[k // len(other)], other[k % len(other)]
        for u, old, new in ((a, b, e), (b, a, c), (c, e, b), (e, c, a)):
            slot = 0 if nbr[u, 0] == old else 1
            nbr[u, slot] = new
        merged = None
        for idx in range(1, len(comps)):
            if c in comps[idx]:
                merged = idx
                break
        comps = [comps[0] + comps[merged]] + [comps[i] for i in range(1, len(comps)) if i != merged]

    start = m - 1 if fixed else n
    first = nbr[start, 0]
    if fixed and first == n - 1:
        first = nbr[start, 1]
    order = [start]
    prev, cur = start, int(first)
    while cur != start:
        order.append(cur)
        a, b = nbr[cur]
        prev, cur = cur, int(b if a == prev else a)
    return order

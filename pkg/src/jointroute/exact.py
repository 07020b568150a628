"""Exact branch-and-bound over edge fixings with the 2-factor bound.

Each search node holds a set of forced and forbidden item-placeholder edges
and the optimal 2-factor under them.  A 2-factor that is one Hamiltonian
cycle (and, with types, can be driven in a compatible direction) is a tour
and updates the incumbent.  Otherwise a separator returns an ordered edge
list ``e_1..e_k`` to branch on: child ``j`` forbids ``e_j`` and forces
``e_1..e_{j-1}``.  The children partition every solution except those
containing all of ``e_1..e_k``, which for a subtour are all infeasible.

Children are re-solved warm: the parent flow minus the forbidden edge is
still optimal for the reduced supplies, so one shortest path repairs it.
"""

from __future__ import annotations

import heapq
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InfeasibleError,
    InternalConsistencyError,
    InvalidParameterError,
    TimeoutWithoutSolutionError,
)
from .heuristics import full_distance, local_search, patch_cycles, polish_order
from .instance import CostMatrix, Instance, cost_matrix
from .relaxation import (
    EdgeFixings,
    Multipliers,
    cycle_walks,
    masks,
    reoptimize_without,
    solve_flow,
    subtour_multipliers,
)
from .tour import CycleSolution, SolveStats, derive_assignment, make_solution, orient_tour

__all__ = [
    "SolveStats",
    "CycleSolution",
    "solve_exact",
    "branch",
    "orient_tour",
    "derive_assignment",
    "search",
    "node_fixings",
]

PRUNE_TOL = 1e-9
DEFAULT_FRONTIER_CAP = 10**6


def branch(fixings: EdgeFixings, subtour_edges: Sequence[tuple[int, int]]) -> list[EdgeFixings]:
    """Inclusion/exclusion children for an ordered edge list (global ids).

    Already-forced edges are skipped; they hold in every child anyway.
    """
    free = [tuple(e) for e in subtour_edges if tuple(e) not in fixings.forced]
    if not free:
        raise InternalConsistencyError("every branching edge is already forced")
    children = []
    for j, e in enumerate(free):
        children.append(EdgeFixings(fixings.forced | set(free[:j]), fixings.forbidden | {e}))
    return children


# separators take the used-edge matrix and return local (i, q) edges or None


def subtour_separator(x: np.ndarray) -> Optional[list[tuple[int, int]]]:
    """Edges of the smallest cycle (ties: smallest member), in walk order."""
    walks = cycle_walks(x)
    if len(walks) == 1:
        return None
    walk = min(walks, key=lambda w: (len(w), w[0]))
    return _walk_edges(walk, x.shape[0])


def _walk_edges(walk, n):
    out = []
    for k in range(len(walk)):
        u, v = int(walk[k]), int(walk[(k + 1) % len(walk)])
        out.append((u, v - n) if u < n else (v, u - n))
    return out


def compat_separator(mask: np.ndarray, fixed_pair: bool) -> Callable:
    """Subtours first; a Hamiltonian cycle is rejected if no direction respects ``mask``.

    For a rejected cycle the branching list puts the offending delivery
    edges first, so the first child already forbids one of them.
    """
    def separate(x):
        walks = [list(map(int, w)) for w in cycle_walks(x)]
        n = x.shape[0]
        if len(walks) > 1:
            walk = min(walks, key=lambda w: (len(w), w[0]))
            return _walk_edges(walk, n)
        walk = walks[0]
        directions = [walk]
        if not fixed_pair:
            directions.append([walk[0]] + walk[:0:-1])
        else:
            nb = _anchor(walk, n)
            directions = [nb]
        bad_sets = []
        for order in directions:
            m = len(order)
            bad = [(order[k], order[(k + 1) % m] - n) for k in range(m)
                   if order[k] < n and not mask[order[k], order[(k + 1) % m] - n]]
            if not bad:
                return None
            bad_sets.append(bad)
        bad = min(bad_sets, key=len)
        rest = [e for e in _walk_edges(walk, n) if e not in bad]
        return bad + rest
    return separate


def _anchor(walk, n):
    """Orient a single cycle walk as start -> ... -> goal."""
    s, g = 2 * n - 1, n - 1
    k = walk.index(s)
    rot = walk[k:] + walk[:k]
    if rot[1] == g:
        rot = [rot[0]] + rot[:0:-1]
    return rot


def cut_separator(cuts: Sequence[frozenset]) -> Callable:
    """Reject 2-factors that violate any given subtour cut (used by the LP stub)."""
    cut_list = [np.array(sorted(c)) for c in cuts]

    def separate(x):
        n = x.shape[0]
        for nodes in cut_list:
            items = nodes[nodes < n]
            places = nodes[nodes >= n] - n
            inside = x[np.ix_(items, places)]
            if inside.sum() > len(nodes) - 1:
                ii, qq = np.nonzero(inside)
                return [(int(items[a]), int(places[b])) for a, b in zip(ii, qq)]
        return None
    return separate


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    nbr: np.ndarray = None        # (n, 2) local placeholders used by each item
    pi: np.ndarray = None
    chain: tuple = None           # (parent chain, forced edges, forbidden edge)


def _expand_chain(chain, allowed, locked):
    while chain is not None:
        chain, forced, forbidden = chain
        for e in forced:
            locked[e] = True
        allowed[forbidden] = False


def node_fixings(chain, n: int, base: Optional[EdgeFixings] = None) -> EdgeFixings:
    """The fixings of a search node, as reported to ``on_node``, in global ids."""
    forced = set(base.forced) if base else set()
    forbidden = set(base.forbidden) if base else set()
    while chain is not None:
        chain, fs, fb = chain
        forced.update((i, n + q) for i, q in fs)
        forbidden.add((fb[0], n + fb[1]))
    return EdgeFixings(forced, forbidden)


def _nbr_of(x):
    n = x.shape[0]
    return np.nonzero(x)[1].reshape(n, 2).astype(np.int16)


def _x_of(nbr, n):
    x = np.zeros((n, n), dtype=np.bool_)
    x[np.arange(n)[:, None], nbr] = True
    return x


@dataclass
class SearchResult:
    x: Optional[np.ndarray]
    cost: float
    stats: SolveStats
    bound_trace: list


def search(d: np.ndarray, base: EdgeFixings, separate: Callable = subtour_separator,
           incumbent: Optional[tuple] = None, time_limit: float = 300.0, workers: int = 1,
           frontier_cap: int = DEFAULT_FRONTIER_CAP,
           improve: Optional[Callable] = None, on_node: Optional[Callable] = None,
           penalty: Optional[np.ndarray] = None, offset: float = 0.0) -> SearchResult:
    """Best-first branch-and-bound on a cost matrix.

    ``incumbent`` is ``(cost, x)`` or None.  ``improve(x, bound, best)`` may
    turn a rejected relaxation into a feasible ``(cost, x)`` (subtour
    patching).  ``on_node(bound, chain, x)`` observes every expanded node.

    With ``penalty`` (priced subtour cuts, see
    :class:`~jointroute.relaxation.Multipliers`) the relaxation runs on
    ``d + penalty`` and node bounds subtract ``offset``.  A relaxation that
    is already a tour then need not be optimal for the true costs; if its
    true cost exceeds the bound, the node is split on the tour's own edges.
    """
    t0 = time.perf_counter()
    true_d = np.ascontiguousarray(d, dtype=np.float64)
    d = true_d if penalty is None else np.ascontiguousarray(true_d + penalty)
    n = d.shape[0]
    stats = SolveStats(solver="exact", binary_var_count=n * n)
    best_cost, best_x = (np.inf, None) if incumbent is None else incumbent
    stats.incumbent_cost = best_cost
    trace = []

    allowed0, locked0 = masks(n, base)
    root = None if np.any(locked0 & ~allowed0) else solve_flow(d, allowed0, locked0)
    if root is None:
        stats.best_bound = np.inf
        stats.dt = time.perf_counter() - t0
        return SearchResult(best_x, best_cost, stats, trace)
    x, pi = root
    root_bound = float(d[x].sum()) - offset
    stats.root_bound = root_bound
    counter = itertools.count()
    heap = [_Node(root_bound, 0, next(counter), _nbr_of(x), pi, None)]
    stack: list[_Node] = []
    lower = root_bound

    def frontier_min():
        vals = [heap[0].bound] if heap else []
        if stack:
            vals.append(min(s.bound for s in stack))
        return min(vals) if vals else np.inf

    def expand(node):
        allowed, locked = allowed0.copy(), locked0.copy()
        _expand_chain(node.chain, allowed, locked)
        x = _x_of(node.nbr, n)
        edges = separate(x)
        is_tour = edges is None
        if is_tour:
            if penalty is None or float(true_d[x].sum()) <= node.bound + PRUNE_TOL:
                return node, x, True, None, []
            edges = _walk_edges(cycle_walks(x)[0], n)
        free = [e for e in edges if not locked[e]]
        if not free:
            raise InternalConsistencyError("every branching edge is already forced")
        kids = []
        for j, e in enumerate(free):
            al = allowed.copy()
            lk = locked.copy()
            for f in free[:j]:
                lk[f] = True
            al[e] = False
            xx = x.copy()
            pp = node.pi.copy()
            if not reoptimize_without(d, al, lk, xx, pp, e[0], e[1]):
                continue
            kids.append((float(d[xx].sum()) - offset, tuple(free[:j]), e, xx, pp))
        return node, x, is_tour, edges, kids

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    timed_out = False
    try:
        while heap or stack:
            if time.perf_counter() - t0 > time_limit:
                timed_out = True
                break
            batch = []
            while (heap or stack) and len(batch) < max(1, workers):
                node = stack.pop() if stack else heapq.heappop(heap)
                if node.bound >= best_cost - PRUNE_TOL:
                    if not stack:
                        heap.clear()
                    continue
                batch.append(node)
            if not batch:
                break
            lower = max(lower, min(min(b.bound for b in batch), frontier_min()))
            results = list(pool.map(expand, batch)) if pool else [expand(b) for b in batch]
            for node, x, is_tour, edges, kids in results:
                stats.nodes_explored += 1
                if on_node is not None:
                    on_node(node.bound, node.chain, x)
                if is_tour:
                    value = float(true_d[x].sum())
                    if value < best_cost - PRUNE_TOL:
                        best_cost, best_x = value, x
                        stats.incumbent_updates += 1
                        trace.append((time.perf_counter() - t0, lower, best_cost))
                    if edges is None:
                        continue
                stats.subtours_branched += 1
                if improve is not None:
                    found = improve(x, node.bound, best_cost)
                    if found is not None and found[0] < best_cost - PRUNE_TOL:
                        best_cost, best_x = found
                        stats.incumbent_updates += 1
                        trace.append((time.perf_counter() - t0, lower, best_cost))
                dfs = len(heap) > frontier_cap or bool(stack)
                children = []
                for bound, forced, forbidden, xx, pp in kids:
                    if bound >= best_cost - PRUNE_TOL:
                        continue
                    chain = (node.chain, forced, forbidden)
                    children.append(_Node(bound, node.neg_depth - 1, next(counter), _nbr_of(xx), pp, chain))
                if dfs:
                    stack.extend(sorted(children, key=lambda c: (-c.bound, -c.seq)))
                else:
                    for c in children:
                        heapq.heappush(heap, c)
    finally:
        if pool is not None:
            pool.shutdown()

    # every unexplored node with bound below the incumbent is still on the frontier
    stats.best_bound = float(min(frontier_min(), best_cost)) if timed_out else float(best_cost)
    stats.incumbent_cost = float(best_cost)
    stats.timed_out = timed_out
    stats.dt = time.perf_counter() - t0
    return SearchResult(best_x, best_cost, stats, trace)


def _x_from_order(order, n):
    x = np.zeros((n, n), dtype=np.bool_)
    m = len(order)
    for k in range(m):
        u, v = order[k], order[(k + 1) % m]
        i, p = (u, v) if u < n else (v, u)
        x[i, p - n] = True
    return x


def _patcher(instance: Instance, D: np.ndarray, share: float = 0.05, warmup: int = 20,
             polish_margin: float = 0.03):
    """Incumbent improver: patch relaxation subtours into a tour, polish promising ones.

    Tries at most ``warmup + share * calls`` patches, so the effort stays
    bounded and the search remains deterministic (no wall-clock throttle).
    """
    n = instance.n
    mask = instance.compat()
    calls = [0, 0]  # offered, attempted

    def improve(x, bound, best):
        calls[0] += 1
        if calls[1] > warmup + share * calls[0]:
            return None
        calls[1] += 1
        return _attempt(x, best)

    def _attempt(x, best):
        walks = [list(map(int, w)) for w in cycle_walks(x)]
        if len(walks) == 1:
            return None
        order = patch_cycles(walks, D, instance.fixed_pair)
        c = float(D[order, np.roll(order, -1)].sum())
        if c > best * (1 + polish_margin):
            return None
        order = polish_order(order, instance, D)
        if mask is not None and not _respects_mask(order, mask, n):
            return None
        c = float(D[order, np.roll(order, -1)].sum())
        return c, _x_from_order(order, n)
    return improve


def _respects_mask(order, mask, n):
    order = np.asarray(order)
    nxt = np.roll(order, -1)
    it = order < n
    return bool(mask[order[it], nxt[it] - n].all())


def solve_exact(instance: Instance, time_limit: float = 300.0, workers: int = 1, seed: int = 0,
                model: str = "simplified", frontier_cap: int = DEFAULT_FRONTIER_CAP,
                restarts: int = 8, patch: bool = True, price_cuts: bool = True,
                on_node: Optional[Callable] = None,
                cost: Optional[CostMatrix] = None) -> CycleSolution:
    """Provably optimal alternating tour (or best found within ``time_limit``).

    The incumbent is seeded by :func:`local_search` with ``seed``; the
    search itself is deterministic, so equal inputs give equal results.
    """
    if time_limit <= 0:
        raise InvalidParameterError("time_limit must be positive")
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    if model not in ("simplified", "generalized"):
        raise InvalidParameterError(f"unknown model {model!r}")
    t0 = time.perf_counter()
    cost = cost or cost_matrix(instance)
    n = instance.n
    d = np.ascontiguousarray(cost.d)
    D = full_distance(cost)
    mask = instance.compat()
    if mask is not None:
        from .model import check_compat
        check_compat(mask)

    base = EdgeFixings()
    if instance.fixed_pair:
        base = EdgeFixings(forced={(n - 1, 2 * n - 1)})
        if mask is not None and not mask[n - 1, n - 1]:
            raise InfeasibleError("last item cannot be delivered to the last placeholder")

    incumbent = None
    heur = local_search(instance, restarts=restarts, seed=seed, cost=cost,
                        time_limit=max(0.05 * time_limit, 0.01))
    if mask is None or _respects_mask(heur.order, mask, n):
        incumbent = (heur.cost, _x_from_order(heur.order, n))
    separate = subtour_separator if mask is None else compat_separator(mask, instance.fixed_pair)
    improve = _patcher(instance, D) if patch else None

    penalty, offset = None, 0.0
    if price_cuts and incumbent is not None:
        allowed0, locked0 = masks(n, base)
        deadline = t0 + 0.25 * time_limit
        mult = subtour_multipliers(d, allowed0, locked0, incumbent[0], deadline=deadline)
        if mult.cuts:
            penalty, offset = mult.penalty, mult.offset
    remaining = max(time_limit - (time.perf_counter() - t0), 1e-3)
    res = search(d, base, separate, incumbent, remaining, workers, frontier_cap, improve, on_node,
                 penalty, offset)

    stats = res.stats
    stats.dt = time.perf_counter() - t0
    stats.binary_var_count = n * n if model == "simplified" else 3 * n * n
    if res.x is None:
        if stats.timed_out:
            raise TimeoutWithoutSolutionError(f"no tour found within {time_limit} s")
        raise InfeasibleError("no alternating tour satisfies the constraints")
    edges = [(int(i), int(n + q)) for i, q in zip(*np.nonzero(res.x))]
    sol = make_solution(instance, cost, edges=edges, stats=stats)
    stats.incumbent_cost = sol.cost
    stats.best_bound = min(stats.best_bound, sol.cost)
    if not stats.timed_out:
        stats.best_bound = sol.cost
    return sol

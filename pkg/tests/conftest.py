import math

import numpy as np
import pytest

from jointroute.instance import Instance, generate


def unit_square(fixed_pair=True):
    # items (0,0),(1,0); placeholders (0,1),(1,1): the only tour costs 2 + 2*sqrt(2)
    return Instance(0, [(0, 0), (1, 0)], [(0, 1), (1, 1)], fixed_pair=fixed_pair)


def suite(n, count=100, seed=None, fixed_pair=True):
    """The seeded uniform instances used by the equivalence checks."""
    seed = 100 + n if seed is None else seed
    insts = list(generate(n, count, seed).values())
    if not fixed_pair:
        insts = [i.with_fixed_pair(False) for i in insts]
    return insts


def clustered(n_per=3, gap=50.0, seed=0, fixed_pair=False):
    """Two far-apart groups of points; the 2-factor splits into one cycle per group."""
    rng = np.random.default_rng(seed)
    a = rng.random((n_per, 4))
    b = rng.random((n_per, 4)) + gap
    pts = np.vstack([a, b])
    return Instance(7, pts[:, :2], pts[:, 2:], fixed_pair=fixed_pair)


@pytest.fixture
def square():
    return unit_square()


def milp_values(model):
    """Solve a ModelSpec (rows plus its cuts) with HiGHS; an independent check of the formulation."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    names = model.variables
    col = {v: k for k, v in enumerate(names)}
    rows = model.rows()
    A = lil_matrix((len(rows), len(names)))
    lo = np.full(len(rows), -np.inf)
    hi = np.full(len(rows), np.inf)
    for r, row in enumerate(rows):
        for v, c in row.terms:
            A[r, col[v]] += c
        if row.sense in ("<=", "="):
            hi[r] = row.rhs
        if row.sense in (">=", "="):
            lo[r] = row.rhs
    c = np.array([model.objective.get(v, 0.0) for v in names])
    res = milp(c, constraints=LinearConstraint(A.tocsr(), lo, hi), integrality=np.ones(len(names)),
               bounds=Bounds(0, 1))
    if res.x is None:
        return None
    return {v: int(round(x)) for v, x in zip(names, res.x) if round(x)}


def milp_tour(model, instance, max_rounds=100):
    """Cut loop around :func:`milp_values`; returns (objective, values) of a single-cycle optimum."""
    from jointroute.model import EdgeSolution, add_subtour_cut, detect_subtours

    for _ in range(max_rounds):
        values = milp_values(model)
        if values is None:
            return None
        cycles = detect_subtours(instance, EdgeSolution(values))
        if len(cycles) == 1:
            return model.objective_value(values), values
        for s in cycles:
            add_subtour_cut(model, s)
    raise RuntimeError("cut loop did not converge")


# Every solution built anywhere in the run is re-validated; the acceptance
# test for constraint invariants reads this record at the end of the session.
AUDIT = {"checked": 0, "violations": []}


def _audit(instance, cost, solution):
    from jointroute.model import validate_solution

    # structure against the instance; the cost against the matrix the solver
    # was given (heuristic moves may run on a bare cost matrix)
    rep = validate_solution(instance, solution, tol=math.inf)
    n = instance.n
    recomputed = sum(cost.d[min(u, v), max(u, v) - n] for u, v in solution.edges)
    AUDIT["checked"] += 1
    cost_ok = abs(recomputed - solution.cost) <= 1e-9
    if not (cost_ok and rep.valid_edges and rep.degree and rep.fixed_pair and rep.connected):
        AUDIT["violations"].append((solution.stats.solver, n, recomputed, rep.messages))


@pytest.fixture(autouse=True, scope="session")
def solution_audit():
    from jointroute.tour import solution_hooks

    solution_hooks.append(_audit)
    yield AUDIT
    solution_hooks.remove(_audit)


def pytest_collection_modifyitems(session, config, items):
    # acceptance checks run after everything else so the audit covers the whole run
    items.sort(key=lambda it: "test_acceptance.py" in it.nodeid)

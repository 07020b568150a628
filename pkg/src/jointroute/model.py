"""Constraint-level models of the joint assignment-routing problem.

Two formulations are built as explicit row lists so they can be inspected,
checked against candidate solutions, and written out as LP text for an
external MIP solver:

* ``simplified``: one binary per item-placeholder edge (``x_i_p``), degree
  two at every node, optional fixed start/goal edge.
* ``generalized``: directed travel binaries ``x_u_v`` in both directions,
  adjacency binaries ``a_i_p`` with ``x <= a`` coupling, and the
  anti-parallel rows ``x_u_v + x_v_u <= 1``.

Subtour elimination rows are never built up front.  They are appended with
:func:`add_subtour_cut` when a solution is found to split into several
cycles (see :func:`detect_subtours`).

In the generalized model ``a_i_p`` marks the two cycle neighbours of each
node, not the delivery pairing; the pairing is read off the travel
direction afterwards (each item goes to the placeholder right after it).
Type compatibility is therefore imposed on the delivery direction only:
an incompatible pair gets ``x_i_p = 0`` while ``x_p_i`` stays free.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import (
    InvalidCompatibilityError,
    InvalidCutError,
    NotATwoFactorError,
    ProtocolError,
)
from .instance import CostMatrix, Instance
from .relaxation import walk_cycles

SENSES = ("<=", "=", ">=")


def xname(u: int, v: int) -> str:
    return f"x_{u}_{v}"


def aname(i: int, p: int) -> str:
    return f"a_{i}_{p}"


def parse_name(name: str) -> tuple[str, int, int]:
    kind, u, v = name.split("_")
    return kind, int(u), int(v)


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple  # ((variable, coefficient), ...)
    sense: str
    rhs: float

    def lhs(self, values: Mapping[str, float]) -> float:
        return sum(c * values.get(v, 0) for v, c in self.terms)

    def satisfied(self, values: Mapping[str, float], tol: float = 1e-9) -> bool:
        lhs = self.lhs(values)
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


@dataclass(frozen=True)
class SubtourCut:
    nodes: frozenset

    @property
    def rhs(self) -> int:
        return len(self.nodes) - 1

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.nodes))


@dataclass
class ModelSpec:
    variant: str
    n: int
    fixed_pair: bool
    variables: list[str]
    objective: dict[str, float]
    constraints: list[Constraint]
    cuts: list[SubtourCut] = field(default_factory=list)

    def __post_init__(self):
        self._cut_keys = {c.key for c in self.cuts}
        self._varset = set(self.variables)

    def has_variable(self, name: str) -> bool:
        return name in self._varset

    @property
    def x_variables(self) -> list[str]:
        return [v for v in self.variables if v.startswith("x_")]

    def cut_row(self, cut: SubtourCut, index: int) -> Constraint:
        """The cut as a row over the travel variables with both ends inside the set."""
        terms = []
        for v in self.x_variables:
            _, a, b = parse_name(v)
            if a in cut.nodes and b in cut.nodes:
                terms.append((v, 1.0))
        return Constraint(f"sec_{index}", tuple(terms), "<=", float(cut.rhs))

    def rows(self) -> list[Constraint]:
        """Structural rows followed by every accumulated cut."""
        return list(self.constraints) + [self.cut_row(c, k) for k, c in enumerate(self.cuts)]

    def violated(self, values: Mapping[str, float], tol: float = 1e-9) -> list[str]:
        return [r.name for r in self.rows() if not r.satisfied(values, tol)]

    def objective_value(self, values: Mapping[str, float]) -> float:
        return float(sum(c * values.get(v, 0) for v, c in self.objective.items()))


@dataclass
class EdgeSolution:
    values: dict[str, int]
    source: str = "internal"

    def support(self) -> list[tuple[int, int]]:
        """Undirected ``(item, placeholder)`` edges with any travel variable at 1."""
        edges = set()
        for name, val in self.values.items():
            if name.startswith("x_") and round(val) == 1:
                _, u, v = parse_name(name)
                edges.add((min(u, v), max(u, v)))
        return sorted(edges)

    @classmethod
    def from_edges(cls, edges: Iterable, source: str = "internal") -> "EdgeSolution":
        """Simplified-model values for a set of undirected edges."""
        values = {}
        for u, v in edges:
            values[xname(min(u, v), max(u, v))] = 1
        return cls(values, source)

    @classmethod
    def from_order(cls, order: Sequence[int], n: int, source: str = "internal") -> "EdgeSolution":
        """Generalized-model values for a directed tour (travel and adjacency)."""
        values = {}
        m = len(order)
        for k in range(m):
            u, v = order[k], order[(k + 1) % m]
            values[xname(u, v)] = 1
            values[aname(min(u, v), max(u, v))] = 1
        return cls(values, source)


def compat_matrix(n: int, compat) -> Optional[np.ndarray]:
    """Normalize a compatibility description to a bool ``[item, local placeholder]`` matrix.

    Accepts None, an (n, n) bool array, or a mapping item -> allowed global
    placeholder ids (items missing from the mapping are unrestricted).
    """
    if compat is None:
        return None
    if isinstance(compat, np.ndarray):
        mask = compat.astype(bool)
        if mask.shape != (n, n):
            raise InvalidCompatibilityError(f"compat mask shape {mask.shape} != ({n}, {n})")
    else:
        mask = np.ones((n, n), dtype=bool)
        for i, allowed in compat.items():
            if not 0 <= i < n:
                raise InvalidCompatibilityError(f"{i} is not an item id")
            mask[i] = False
            for p in allowed:
                if not n <= p < 2 * n:
                    raise InvalidCompatibilityError(f"item {i}: {p} is not a placeholder id")
                mask[i, p - n] = True
    check_compat(mask)
    return mask


def check_compat(mask: np.ndarray) -> None:
    n = mask.shape[0]
    lonely = [i for i in range(n) if not mask[i].any()]
    if lonely:
        raise InvalidCompatibilityError(f"items with no allowed placeholder: {lonely}")
    matched = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
    if np.any(matched < 0):
        raise InvalidCompatibilityError("no one-to-one delivery assignment respects the compatibility mask")


def build_simplified(instance: Instance, cost: CostMatrix) -> ModelSpec:
    n = instance.n
    variables, objective, rows = [], {}, []
    for i in range(n):
        for p in range(n, 2 * n):
            name = xname(i, p)
            variables.append(name)
            objective[name] = float(cost.d[i, p - n])
    for i in range(n):
        rows.append(Constraint(f"deg_{i}", tuple((xname(i, p), 1.0) for p in range(n, 2 * n)), "=", 2.0))
    for p in range(n, 2 * n):
        rows.append(Constraint(f"deg_{p}", tuple((xname(i, p), 1.0) for i in range(n)), "=", 2.0))
    if instance.fixed_pair:
        rows.append(Constraint("fix_x", ((xname(n - 1, 2 * n - 1), 1.0),), "=", 1.0))
    return ModelSpec("simplified", n, instance.fixed_pair, variables, objective, rows)


def build_generalized(instance: Instance, cost: CostMatrix, compat=None) -> ModelSpec:
    n = instance.n
    if compat is None and instance.types is not None:
        compat = instance.compat()
    mask = compat_matrix(n, compat)
    if mask is not None and instance.fixed_pair and not mask[n - 1, n - 1]:
        raise InvalidCompatibilityError("fixed pair: last item cannot be delivered to the last placeholder")

    items, places = range(n), range(n, 2 * n)
    variables, objective, rows = [], {}, []
    for i in items:
        for p in places:
            for u, v in ((i, p), (p, i)):
                variables.append(xname(u, v))
                objective[xname(u, v)] = float(cost.d[i, p - n])
    for i in items:
        for p in places:
            variables.append(aname(i, p))

    for v in range(2 * n):
        others = places if v < n else items
        terms = [(xname(v, w), 1.0) for w in others] + [(xname(w, v), 1.0) for w in others]
        rows.append(Constraint(f"deg_{v}", tuple(terms), "=", 2.0))
    for i in items:
        rows.append(Constraint(f"asg_{i}", tuple((aname(i, p), 1.0) for p in places), "=", 2.0))
    for p in places:
        rows.append(Constraint(f"asg_{p}", tuple((aname(i, p), 1.0) for i in items), "=", 2.0))
    for i in items:
        for p in places:
            rows.append(Constraint(f"cpl_{i}_{p}", ((xname(i, p), 1.0), (aname(i, p), -1.0)), "<=", 0.0))
            rows.append(Constraint(f"cpl_{p}_{i}", ((xname(p, i), 1.0), (aname(i, p), -1.0)), "<=", 0.0))
    for i in items:
        for p in places:
            rows.append(Constraint(f"anti_{i}_{p}", ((xname(i, p), 1.0), (xname(p, i), 1.0)), "<=", 1.0))
    if instance.fixed_pair:
        g, s = n - 1, 2 * n - 1
        rows.append(Constraint("fix_a", ((aname(g, s), 1.0),), "=", 1.0))
        rows.append(Constraint("fix_x", ((xname(g, s), 1.0),), "=", 1.0))
        rows.append(Constraint("fix_back", ((xname(s, g), 1.0),), "=", 0.0))
    if mask is not None:
        for i, q in zip(*np.nonzero(~mask)):
            rows.append(Constraint(f"type_{i}_{n + q}", ((xname(int(i), int(n + q)), 1.0),), "=", 0.0))
    return ModelSpec("generalized", n, instance.fixed_pair, variables, objective, rows)


def add_subtour_cut(model: ModelSpec, nodes: Iterable[int]) -> ModelSpec:
    """Append the cut for node set ``nodes`` (no-op if already present)."""
    s = frozenset(int(v) for v in nodes)
    total = 2 * model.n
    if not s:
        raise InvalidCutError("empty node set")
    if any(not 0 <= v < total for v in s):
        raise InvalidCutError(f"node ids outside 0..{total - 1}: {sorted(s)}")
    if len(s) == total:
        raise InvalidCutError("node set covers every node")
    cut = SubtourCut(s)
    if cut.key not in model._cut_keys:
        model.cuts.append(cut)
        model._cut_keys.add(cut.key)
    return model


def _neighbours(n: int, edges) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(2 * n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    return nbrs


def detect_subtours(instance: Instance, solution: Union[EdgeSolution, Iterable]) -> list[set]:
    """Cycles of an integral degree-2 solution, smallest first (ties: smallest member)."""
    edges = solution.support() if isinstance(solution, EdgeSolution) else list(solution)
    n = instance.n
    nbrs = _neighbours(n, edges)
    bad = [v for v in range(2 * n) if len(nbrs[v]) != 2 or nbrs[v][0] == nbrs[v][1]]
    if bad:
        raise NotATwoFactorError(f"nodes without exactly two distinct neighbours: {bad}")
    cycles = [set(c) for c in walk_cycles(nbrs)]
    cycles.sort(key=lambda c: (len(c), min(c)))
    return cycles


@dataclass
class ValidationReport:
    valid_edges: bool
    degree: bool
    fixed_pair: bool
    connected: bool
    cost_ok: bool
    type_compat: bool
    model_rows: bool
    cost: float
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(
            (self.valid_edges, self.degree, self.fixed_pair, self.connected,
             self.cost_ok, self.type_compat, self.model_rows)
        )

    def flags(self) -> dict[str, bool]:
        return {
            "valid_edges": self.valid_edges,
            "degree": self.degree,
            "fixed_pair": self.fixed_pair,
            "connected": self.connected,
            "cost_ok": self.cost_ok,
            "type_compat": self.type_compat,
            "model_rows": self.model_rows,
        }


def _directed_arcs(solution) -> Optional[list[tuple[int, int]]]:
    """Directed arcs of a solution if it carries a direction, else None."""
    order = getattr(solution, "order", None)
    if order is not None:
        m = len(order)
        return [(order[k], order[(k + 1) % m]) for k in range(m)]
    if isinstance(solution, EdgeSolution):
        arcs = []
        for name, val in solution.values.items():
            if name.startswith("x_") and round(val) == 1:
                _, u, v = parse_name(name)
                arcs.append((u, v))
        if any(u >= v for u, v in arcs):  # some placeholder -> item arc: directed model
            return arcs
    return None


def validate_solution(instance: Instance, solution, model: Optional[ModelSpec] = None,
                      tol: float = 1e-9) -> ValidationReport:
    """Check a solution against every tour constraint; never raises.

    ``solution`` may be an :class:`EdgeSolution`, an object with ``order``
    and ``cost`` attributes (a solved tour), or a plain iterable of edges.
    """
    from .instance import cost_matrix

    n = instance.n
    msgs: list[str] = []
    order = getattr(solution, "order", None)
    claimed = getattr(solution, "cost", None)

    if isinstance(solution, EdgeSolution):
        raw = []
        for name, val in solution.values.items():
            if name.startswith("x_") and round(val) == 1:
                _, u, v = parse_name(name)
                raw.append((u, v))
    elif order is not None:
        m = len(order)
        raw = [(order[k], order[(k + 1) % m]) for k in range(m)]
    else:
        raw = [tuple(e) for e in solution]

    def side(v):
        return 0 if 0 <= v < n else (1 if n <= v < 2 * n else -1)

    valid_edges = True
    for u, v in raw:
        if side(u) < 0 or side(v) < 0 or side(u) == side(v):
            valid_edges = False
            msgs.append(f"invalid edge ({u}, {v})")
    if order is not None:
        if sorted(order) != list(range(2 * n)):
            valid_edges = False
            msgs.append("order is not a permutation of all nodes")
    undirected = sorted({(min(u, v), max(u, v)) for u, v in raw if valid_edges or (side(u) >= 0 and side(v) >= 0)})

    nbrs = _neighbours(n, [(u, v) for u, v in undirected if side(u) >= 0 and side(v) >= 0])
    degree = all(len(nbrs[v]) == 2 for v in range(2 * n)) and len(undirected) == len(raw)
    if not degree:
        msgs.append("some node does not have exactly two incident edges")

    fixed = True
    if instance.fixed_pair:
        g, s = n - 1, 2 * n - 1
        if (g, s) not in undirected:
            fixed = False
            msgs.append(f"fixed edge ({g}, {s}) missing")
        arcs = _directed_arcs(solution)
        if arcs is not None and (s, g) in arcs:
            fixed = False
            msgs.append(f"fixed edge traversed {s} -> {g}")
        if order is not None and len(order) == 2 * n and (order[0] != s or order[-1] != g):
            fixed = False
            msgs.append("tour does not start at the last placeholder and end at the last item")

    connected = False
    if degree:
        try:
            connected = len(detect_subtours(instance, undirected)) == 1
        except NotATwoFactorError:
            connected = False
    if not connected:
        msgs.append("edges do not form a single cycle")

    cost = cost_matrix(instance)
    recomputed = float(sum(cost.d[u, v - n] for u, v in undirected if side(u) == 0 and side(v) == 1))
    cost_ok = claimed is None or abs(recomputed - float(claimed)) <= tol
    if not cost_ok:
        msgs.append(f"claimed cost {claimed} != recomputed {recomputed}")

    type_compat = True
    mask = instance.compat()
    if mask is not None:
        arcs = _directed_arcs(solution)
        if arcs is None:
            msgs.append("type compatibility not checkable without a direction")
        else:
            for u, v in arcs:
                if side(u) == 0 and side(v) == 1 and not mask[u, v - n]:
                    type_compat = False
                    msgs.append(f"item {u} delivered to incompatible placeholder {v}")

    assignment = getattr(solution, "assignment", None)
    if assignment is not None and order is not None:
        m = len(order)
        expect = {order[k]: order[(k + 1) % m] for k in range(m) if side(order[k]) == 0}
        if dict(assignment) != expect or sorted(assignment.values()) != list(range(n, 2 * n)):
            valid_edges = False
            msgs.append("assignment does not match the tour direction")

    model_rows = True
    if model is not None:
        values = solution.values if isinstance(solution, EdgeSolution) else (
            EdgeSolution.from_order(order, n).values if model.variant == "generalized" and order is not None
            else EdgeSolution.from_edges(undirected).values
        )
        unknown = [k for k in values if not model.has_variable(k)]
        bad_rows = model.violated(values, tol)
        if unknown or bad_rows:
            model_rows = False
            msgs.append(f"unknown variables {unknown[:5]}; violated rows {bad_rows[:5]}")

    return ValidationReport(valid_edges, degree, fixed, connected, cost_ok, type_compat,
                            model_rows, recomputed, msgs)


# ---------------------------------------------------------------------------
# LP text


def _fmt(c: float) -> str:
    return repr(float(c))


def _expr(terms, per_line: int = 6) -> list[str]:
    chunks = []
    for k, (v, c) in enumerate(terms):
        if c == 1:
            tok = v if k == 0 else f"+ {v}"
        elif c == -1:
            tok = f"- {v}"
        elif c < 0:
            tok = f"- {_fmt(-c)} {v}"
        else:
            tok = f"{_fmt(c)} {v}" if k == 0 else f"+ {_fmt(c)} {v}"
        chunks.append(tok)
    lines = [" ".join(chunks[k:k + per_line]) for k in range(0, len(chunks), per_line)]
    return lines or ["0"]


def format_lp(model: ModelSpec) -> str:
    out = [f"\\ {model.variant} model, n={model.n}, cuts={len(model.cuts)}", "Minimize"]
    obj = _expr(list(model.objective.items()))
    out.append(f" obj: {obj[0]}")
    out.extend(f"   {line}" for line in obj[1:])
    out.append("Subject To")
    structural = len(model.constraints)
    for k, row in enumerate(model.rows()):
        if k >= structural:
            cut = model.cuts[k - structural]
            out.append(f"\\ {row.name} nodes: {' '.join(map(str, cut.key))}")
        body = _expr(row.terms)
        rhs = int(row.rhs) if float(row.rhs).is_integer() else row.rhs
        if len(body) == 1:
            out.append(f" {row.name}: {body[0]} {row.sense} {rhs}")
        else:
            out.append(f" {row.name}: {body[0]}")
            out.extend(f"   {line}" for line in body[1:-1])
            out.append(f"   {body[-1]} {row.sense} {rhs}")
    out.append("Binaries")
    for k in range(0, len(model.variables), 10):
        out.append(" " + " ".join(model.variables[k:k + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(model: ModelSpec, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(format_lp(model))
    return path


_TERM = re.compile(r"([+-]?)\s*([0-9.eE+-]+)?\s*([A-Za-z_][A-Za-z0-9_]*)")
_HEAD = re.compile(r"^(\\ (simplified|generalized) model, n=(\d+), cuts=\d+)")


def _parse_terms(text: str) -> list[tuple[str, float]]:
    terms = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse expression near {text[pos:pos + 20]!r}")
        sign, coef, var = m.groups()
        c = float(coef) if coef else 1.0
        terms.append((var, -c if sign == "-" else c))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return terms


def parse_lp(text: str) -> ModelSpec:
    """Read LP text written by :func:`format_lp` back into a :class:`ModelSpec`.

    Only the subset of the LP format that :func:`format_lp` emits is
    understood.  Cut rows (``sec_*``) are turned back into node sets.
    """
    lines = text.splitlines()
    head = _HEAD.match(lines[0]) if lines else None
    if not head:
        raise ProtocolError(1, lines[0] if lines else "", "unrecognized LP header")
    variant, n = head.group(2), int(head.group(3))

    # join continuation lines into logical statements
    section, statements = None, {"Minimize": [], "Subject To": [], "Binaries": []}
    cut_nodes: list[frozenset] = []
    for line_no, line in enumerate(lines[1:], start=2):
        key = line.strip()
        if key.startswith("\\"):
            m = re.match(r"^\\ sec_\d+ nodes: ([\d ]+)$", key)
            if m:
                cut_nodes.append(frozenset(int(v) for v in m.group(1).split()))
            continue
        if key in statements:
            section = key
            continue
        if key == "End":
            break
        if section is None or not key:
            continue
        if line.startswith("   ") and statements[section]:
            statements[section][-1] = (statements[section][-1][0], statements[section][-1][1] + " " + key)
        else:
            statements[section].append((line_no, key))

    objective = {}
    for line_no, stmt in statements["Minimize"]:
        _, _, body = stmt.partition(":")
        try:
            objective.update(dict(_parse_terms(body)))
        except ValueError:
            raise ProtocolError(line_no, stmt, "bad objective") from None
    variables = []
    for _, stmt in statements["Binaries"]:
        variables.extend(stmt.split())

    rows, cuts = [], []
    for line_no, stmt in statements["Subject To"]:
        m = re.match(r"^(\S+):\s*(.*?)\s*(<=|>=|=)\s*(\S+)$", stmt)
        if not m:
            raise ProtocolError(line_no, stmt, "bad constraint")
        name, body, sense, rhs = m.groups()
        try:
            terms = tuple(_parse_terms(body)) if body != "0" else ()
        except ValueError:
            raise ProtocolError(line_no, stmt, "bad constraint") from None
        if not name.startswith("sec_"):
            rows.append(Constraint(name, terms, sense, float(rhs)))
        elif len(cuts) < len(cut_nodes):
            cuts.append(SubtourCut(cut_nodes[len(cuts)]))
        else:
            nodes = set()
            for v, _ in terms:
                _, a, b = parse_name(v)
                nodes.update((a, b))
            cuts.append(SubtourCut(frozenset(nodes)))
    fixed = any(r.name == "fix_x" for r in rows)
    return ModelSpec(variant, n, fixed, variables, objective, rows, cuts)


def model_costs(model: ModelSpec) -> np.ndarray:
    """Recover the ``[item, local placeholder]`` cost matrix from objective coefficients."""
    n = model.n
    d = np.zeros((n, n))
    for name, c in model.objective.items():
        kind, u, v = parse_name(name)
        if kind != "x":
            continue
        i, p = (u, v) if u < v else (v, u)
        d[i, p - n] = c
    return d

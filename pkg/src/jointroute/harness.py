"""Benchmark runner, results files, SVG rendering and the external-solver cut loop.

Results files use the header ``experiment_id,best_cost,dt,assignment,edges,status``.
``assignment`` is ``i:p`` pairs joined by ``;`` (sorted by item), ``edges`` the
directed tour as ``u-v`` pairs joined by ``;`` starting at the tour start.
``best_cost`` and ``dt`` are written with four decimals; both are empty
when no tour was found.  Solver statistics that have no column in that
schema (nodes, bound) go to a sidecar ``..._stats.csv`` next to it.
"""

from __future__ import annotations

import csv
import io
import math
import re
import shlex
import statistics
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace
from typing import Callable, Iterable, Optional, Sequence

from .errors import (
    InfeasibleError,
    InvalidCompatibilityError,
    InvalidParameterError,
    NonConvergenceError,
    NotATwoFactorError,
    ProtocolError,
    SchemaError,
    TimeoutWithoutSolutionError,
)
from .exact import solve_exact
from .heuristics import local_search
from .instance import CostMatrix, Instance, cost_matrix, load_csv
from .model import (
    EdgeSolution,
    ModelSpec,
    add_subtour_cut,
    detect_subtours,
    export_lp,
    parse_name,
    validate_solution,
)
from .tour import CycleSolution, SolveStats, make_solution

RESULTS_HEADER = ("experiment_id", "best_cost", "dt", "assignment", "edges", "status")
STATS_HEADER = ("experiment_id", "n", "solver", "nodes", "best_bound", "gap")
STATUSES = ("optimal", "timeout", "infeasible")
DEFAULT_TIME_LIMIT = 300.0


# ---------------------------------------------------------------------------
# results rows


@dataclass
class ResultRow:
    experiment_id: int
    best_cost: float
    dt: float
    assignment: dict[int, int]
    edges: list[tuple[int, int]]
    status: str
    nodes: int = 0
    best_bound: float = math.nan
    solver: str = ""

    @property
    def n(self) -> int:
        return len(self.edges) // 2

    def order(self) -> list[int]:
        return [u for u, _ in self.edges]

    def to_csv(self) -> list[str]:
        return [
            str(self.experiment_id),
            "" if math.isnan(self.best_cost) else f"{self.best_cost:.4f}",
            "" if math.isnan(self.dt) else f"{self.dt:.4f}",
            ";".join(f"{i}:{p}" for i, p in sorted(self.assignment.items())),
            ";".join(f"{u}-{v}" for u, v in self.edges),
            self.status,
        ]


def row_from_solution(experiment_id: int, sol: CycleSolution, dt: float, status: str) -> ResultRow:
    return ResultRow(experiment_id, sol.cost, dt, dict(sol.assignment), sol.directed_edges(), status,
                     sol.stats.nodes_explored, sol.stats.best_bound, sol.stats.solver)


def _pairs(text: str, sep: str, field_name: str, row_no: int) -> list[tuple[int, int]]:
    if not text.strip():
        return []
    out = []
    for tok in text.split(";"):
        a, s, b = tok.partition(sep)
        try:
            if not s:
                raise ValueError(tok)
            out.append((int(a), int(b)))
        except ValueError:
            raise SchemaError(f"row {row_no}: bad {field_name} entry {tok!r}") from None
    return out


def format_results(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in rows:
        w.writerow(r.to_csv())
    return buf.getvalue()


def parse_results(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise SchemaError("empty results file")
    if tuple(h.strip() for h in header) != RESULTS_HEADER:
        raise SchemaError(f"expected header {','.join(RESULTS_HEADER)}, got {','.join(header)}")
    rows = []
    for row_no, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(RESULTS_HEADER):
            raise SchemaError(f"row {row_no}: expected {len(RESULTS_HEADER)} fields, got {len(rec)}")
        eid, cost, dt, asg, edges, status = rec
        if status not in STATUSES:
            raise SchemaError(f"row {row_no}: unknown status {status!r}")
        try:
            eid_i = int(eid)
            cost_f = float(cost) if cost.strip() else math.nan
            dt_f = float(dt) if dt.strip() else math.nan
        except ValueError as exc:
            raise SchemaError(f"row {row_no}: {exc}") from None
        rows.append(ResultRow(eid_i, cost_f, dt_f, dict(_pairs(asg, ":", "assignment", row_no)),
                              _pairs(edges, "-", "edges", row_no), status))
    if not rows:
        raise SchemaError("results file has no rows")
    return rows


def load_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        return parse_results(fh.read())


def save_results(rows: Sequence[ResultRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(format_results(rows))
    return path


def stats_path_for(results_path) -> Path:
    p = Path(results_path)
    stem = p.stem[:-len("_results")] if p.stem.endswith("_results") else p.stem
    return p.with_name(f"{stem}_stats.csv")


def save_stats(rows: Sequence[ResultRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for r in rows:
            gap = ""
            if not math.isnan(r.best_cost) and not math.isnan(r.best_bound) and r.best_cost > 0:
                gap = f"{max(0.0, (r.best_cost - r.best_bound) / r.best_cost):.6f}"
            bound = "" if math.isnan(r.best_bound) else f"{r.best_bound:.6f}"
            w.writerow([r.experiment_id, r.n, r.solver, r.nodes, bound, gap])
    return path


def rescore(row: ResultRow, instance: Instance, cost: Optional[CostMatrix] = None) -> float:
    """Tour cost recomputed from a row's ``edges`` against the dataset."""
    cost = cost or cost_matrix(instance)
    return float(sum(cost.edge(u, v) for u, v in row.edges))


def check_results(instances: dict[int, Instance], rows: Sequence[ResultRow], tol: float = 1e-4) -> list[str]:
    """Problems found re-validating a results file against its dataset (empty if clean)."""
    problems = []
    for r in rows:
        inst = instances.get(r.experiment_id)
        if inst is None:
            problems.append(f"experiment {r.experiment_id}: not in dataset")
            continue
        if not r.edges and r.status != "optimal":
            continue
        order = r.order()
        if len(order) != 2 * inst.n or sorted(order) != list(range(2 * inst.n)):
            problems.append(f"experiment {r.experiment_id}: edges do not visit every node once")
            continue
        rep = validate_solution(inst, SimpleNamespace(order=order, cost=None))
        if not rep.ok:
            problems.append(f"experiment {r.experiment_id}: invalid tour ({'; '.join(rep.messages[:3])})")
            continue
        if any(r.edges[k][1] != r.edges[(k + 1) % len(r.edges)][0] for k in range(len(r.edges))):
            problems.append(f"experiment {r.experiment_id}: edges are not a directed cycle")
            continue
        c = rescore(r, inst)
        if math.isnan(r.best_cost) or abs(c - r.best_cost) > tol:
            problems.append(f"experiment {r.experiment_id}: best_cost {r.best_cost} but edges cost {c:.6f}")
    return problems


def results_filename(tag) -> str:
    return f"updated_experiment_n_{tag}_results.csv"


def image_dirname(tag) -> str:
    return f"img_update{tag}"


_DATA_TAG = re.compile(r"experimental_n_(.+?)_data")
_RESULTS_TAG = re.compile(r"updated_experiment_n_(.+?)_results")


def dataset_tag(path, instances: dict[int, Instance]) -> str:
    m = _DATA_TAG.search(Path(path).name)
    if m:
        return m.group(1)
    sizes = sorted({inst.n for inst in instances.values()})
    return "_".join(map(str, sizes))


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchmarkRun:
    rows: list[ResultRow]
    results_path: Path
    stats_path: Path
    image_dir: Optional[Path]


def solve_one(instance: Instance, solver: str = "exact", time_limit: float = DEFAULT_TIME_LIMIT,
              workers: int = 1, seed: int = 0) -> ResultRow:
    """One benchmark row; solver failures become status rows instead of raising."""
    cost = cost_matrix(instance)
    t0 = time.perf_counter()
    try:
        if solver == "exact":
            sol = solve_exact(instance, time_limit=time_limit, workers=workers, seed=seed, cost=cost)
            status = "timeout" if sol.stats.timed_out else "optimal"
        elif solver == "heuristic":
            sol = local_search(instance, seed=seed, time_limit=time_limit, cost=cost)
            status = "timeout"  # no optimality proof
        else:
            raise InvalidParameterError(f"unknown solver {solver!r}")
    except (InfeasibleError, InvalidCompatibilityError):
        return ResultRow(instance.experiment_id, math.nan, time.perf_counter() - t0, {}, [], "infeasible",
                         solver=solver)
    except TimeoutWithoutSolutionError:
        return ResultRow(instance.experiment_id, math.nan, time.perf_counter() - t0, {}, [], "timeout",
                         solver=solver)
    dt = time.perf_counter() - t0
    return row_from_solution(instance.experiment_id, sol, dt, status)


def run_benchmark(data_csv, solver: str = "exact", time_limit: float = DEFAULT_TIME_LIMIT,
                  workers: int = 1, seed: int = 0, out_results=None, out_img=None,
                  render: bool = True) -> BenchmarkRun:
    """Solve every experiment of a dataset file and write the results CSV and SVGs.

    With ``workers > 1`` and several experiments, experiments run
    concurrently and each solve is single-threaded; otherwise the single
    solve gets all workers.
    """
    if solver not in ("exact", "heuristic"):
        raise InvalidParameterError(f"unknown solver {solver!r}")
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    instances = load_csv(data_csv)  # I/O and schema errors surface here, before any row
    if not instances:
        raise SchemaError(f"{data_csv}: dataset has no experiments")
    tag = dataset_tag(data_csv, instances)
    out_results = Path(out_results) if out_results else Path(data_csv).with_name(results_filename(tag))
    img_dir = None
    if render:
        img_dir = Path(out_img) if out_img else out_results.with_name(image_dirname(tag))
        img_dir.mkdir(parents=True, exist_ok=True)

    eids = sorted(instances)
    if workers > 1 and len(eids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda e: solve_one(instances[e], solver, time_limit, 1, seed), eids))
    else:
        rows = [solve_one(instances[e], solver, time_limit, workers, seed) for e in eids]

    save_results(rows, out_results)
    stats = save_stats(rows, stats_path_for(out_results))
    if img_dir is not None:
        for r in rows:
            if r.edges:
                inst = instances[r.experiment_id]
                sol = make_solution(inst, cost_matrix(inst), order=r.order())
                render_svg(inst, sol, img_dir / f"experiment_{r.experiment_id}.svg")
    return BenchmarkRun(rows, out_results, stats, img_dir)


# ---------------------------------------------------------------------------
# SVG


VIEW = 1000.0
MARGIN = 60.0


def _project(instance: Instance):
    pts = instance.all_coords()
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    scale = (VIEW - 2 * MARGIN) / max(float(span.max()), 1e-12)
    off = (VIEW - scale * span) / 2

    def xy(v: int) -> tuple[float, float]:
        x, y = pts[v]
        # y grows upwards in the data, downwards in SVG
        return off[0] + scale * (x - lo[0]), VIEW - (off[1] + scale * (y - lo[1]))
    return xy


def svg_text(instance: Instance, sol: CycleSolution, title: Optional[str] = None) -> str:
    xy = _project(instance)
    n = instance.n
    f = "{:.2f}".format
    title = title or f"Experiment {instance.experiment_id} - cost {sol.cost:.4f}"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{VIEW:.0f}" height="{VIEW:.0f}" '
        f'viewBox="0 0 {VIEW:.0f} {VIEW:.0f}">',
        f"<title>{title}</title>",
        '<rect x="0" y="0" width="1000" height="1000" fill="white"/>',
        f'<text x="500" y="32" font-family="sans-serif" font-size="22" text-anchor="middle">{title}</text>',
    ]
    order = list(sol.order) + [sol.order[0]]
    pts = " ".join(f"{f(x)},{f(y)}" for x, y in map(xy, order))
    out.append(f'<polyline class="tour" points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for a, b in zip(order, order[1:]):
        (x1, y1), (x2, y2) = xy(a), xy(b)
        dx, dy = x2 - x1, y2 - y1
        length = math.hypot(dx, dy)
        if length < 1e-9:
            continue
        ux, uy = dx / length, dy / length
        tx, ty = x1 + 0.6 * dx, y1 + 0.6 * dy  # arrow tip
        bx, by = tx - 10 * ux, ty - 10 * uy
        p1 = (bx - 5 * uy, by + 5 * ux)
        p2 = (bx + 5 * uy, by - 5 * ux)
        out.append(f'<path class="arrow" d="M{f(tx)},{f(ty)} L{f(p1[0])},{f(p1[1])} '
                   f'L{f(p2[0])},{f(p2[1])} Z" fill="#1f77b4"/>')
    for i in range(n):
        x, y = xy(i)
        out.append(f'<circle class="item" cx="{f(x)}" cy="{f(y)}" r="6" fill="#d62728"/>')
    for p in range(n, 2 * n):
        x, y = xy(p)
        out.append(f'<rect class="placeholder" x="{f(x - 6)}" y="{f(y - 6)}" width="12" height="12" '
                   f'fill="none" stroke="#2ca02c" stroke-width="2"/>')
    sx, sy = xy(sol.order[0])
    out.append(f'<circle class="start" cx="{f(sx)}" cy="{f(sy)}" r="13" fill="none" stroke="#ff7f0e" '
               f'stroke-width="3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(instance: Instance, solution: CycleSolution, path, title: Optional[str] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(svg_text(instance, solution, title))
    return path


# ---------------------------------------------------------------------------
# scaling report


@dataclass
class ScalingReport:
    rows: list[dict]
    text: str
    csv: str


def _summary(values: list[float]) -> tuple:
    if not values:
        return (math.nan, math.nan, math.nan)
    return (statistics.fmean(values), statistics.median(values), max(values))


def _load_stats(path: Path) -> dict[int, int]:
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != STATS_HEADER:
            raise SchemaError(f"{path}: not a stats file")
        return {int(r[0]): int(r[3]) for r in reader if r}


def scaling_report(results_paths: Sequence) -> ScalingReport:
    """Per-size mean/median/max of solve time (and search nodes when a stats sidecar exists)."""
    if not results_paths:
        raise SchemaError("no results files given")
    groups: dict[str, dict[str, list]] = {}
    for path in results_paths:
        path = Path(path)
        rows = load_results(path)
        nodes = _load_stats(stats_path_for(path))
        m = _RESULTS_TAG.search(path.name)
        for r in rows:
            key = m.group(1) if m else str(r.n)
            g = groups.setdefault(key, {"dt": [], "nodes": [], "count": 0, "optimal": 0})
            g["count"] += 1
            g["optimal"] += r.status == "optimal"
            if not math.isnan(r.dt):
                g["dt"].append(r.dt)
            if r.experiment_id in nodes:
                g["nodes"].append(nodes[r.experiment_id])

    def sort_key(k):
        m = re.match(r"\d+", k)
        return (int(m.group()) if m else math.inf, k)

    table = []
    for key in sorted(groups, key=sort_key):
        g = groups[key]
        dt = _summary(g["dt"])
        nd = _summary(g["nodes"])
        table.append({"n": key, "count": g["count"], "optimal": g["optimal"],
                      "dt_mean": dt[0], "dt_median": dt[1], "dt_max": dt[2],
                      "nodes_mean": nd[0], "nodes_median": nd[1], "nodes_max": nd[2]})

    def cell(v, fmt):
        return "-" if isinstance(v, float) and math.isnan(v) else fmt.format(v)

    cols = ["n", "count", "optimal", "dt_mean", "dt_median", "dt_max", "nodes_mean", "nodes_median", "nodes_max"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for t in table:
        w.writerow(["" if isinstance(t[c], float) and math.isnan(t[c]) else
                    (f"{t[c]:.4f}" if isinstance(t[c], float) else t[c]) for c in cols])

    lines = [f"{'n':>8} {'runs':>5} {'opt':>5} {'dt mean':>10} {'dt median':>10} {'dt max':>10} "
             f"{'nodes mean':>11} {'nodes max':>10}"]
    for t in table:
        lines.append(f"{t['n']:>8} {t['count']:>5} {t['optimal']:>5} {cell(t['dt_mean'], '{:.4f}'):>10} "
                     f"{cell(t['dt_median'], '{:.4f}'):>10} {cell(t['dt_max'], '{:.4f}'):>10} "
                     f"{cell(t['nodes_mean'], '{:.1f}'):>11} {cell(t['nodes_max'], '{:.0f}'):>10}")
    return ScalingReport(table, "\n".join(lines) + "\n", buf.getvalue())


# ---------------------------------------------------------------------------
# external solver loop


def parse_solver_output(text: str, model: Optional[ModelSpec] = None, tol: float = 1e-6) -> dict[str, int]:
    """``variable value`` lines to integral values; ``#`` comments and blank lines are skipped."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise ProtocolError(line_no, line, "expected 'variable value'")
        name, raw = parts
        try:
            val = float(raw)
        except ValueError:
            raise ProtocolError(line_no, line, "value is not a number") from None
        if not math.isfinite(val) or abs(val - round(val)) > tol:
            raise ProtocolError(line_no, line, "value is not integral")
        if model is not None and not model.has_variable(name):
            raise ProtocolError(line_no, line, "unknown variable")
        if round(val):
            values[name] = int(round(val))
    return values


def _directed_order(values: dict[str, int], instance: Instance) -> Optional[list[int]]:
    nxt = {}
    for name in values:
        kind, u, v = parse_name(name)
        if kind == "x":
            nxt[u] = v
    n = instance.n
    start = 2 * n - 1 if instance.fixed_pair else n
    order, cur = [start], nxt.get(start)
    while cur is not None and cur != start and len(order) <= 2 * n:
        order.append(cur)
        cur = nxt.get(cur)
    return order if cur == start and len(order) == 2 * n else None


def external_solve_loop(model: ModelSpec, instance: Instance, solver_command: str, max_rounds: int = 50,
                        workdir=None, timeout: Optional[float] = None,
                        on_round: Optional[Callable] = None) -> CycleSolution:
    """Solve ``model`` with an external program, adding subtour cuts until one cycle remains.

    ``solver_command`` is a shell-style template; ``{lp}`` is replaced by the
    LP file path (appended when absent).  ``model`` gains the cuts in place.
    ``on_round(round, subtours, model)`` is called after every solve.
    """
    if max_rounds < 1:
        raise NonConvergenceError(0, len(model.cuts))
    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="jointroute_")
        workdir = tmp.name
    workdir = Path(workdir)
    t0 = time.perf_counter()
    try:
        for rnd in range(1, max_rounds + 1):
            lp = export_lp(model, workdir / f"round_{rnd}.lp")
            if "{lp}" in solver_command:
                argv = shlex.split(solver_command.replace("{lp}", shlex.quote(str(lp))))
            else:
                argv = shlex.split(solver_command) + [str(lp)]
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
            if proc.returncode != 0:
                tail = (proc.stderr.strip().splitlines() or [""])[-1]
                raise ProtocolError(0, tail, f"solver exited with code {proc.returncode}")
            values = parse_solver_output(proc.stdout, model)
            sol = EdgeSolution(values, source="external")
            try:
                subtours = detect_subtours(instance, sol)
            except NotATwoFactorError as exc:
                raise ProtocolError(0, "", f"solution is not a 2-factor ({exc})") from None
            if on_round is not None:
                on_round(rnd, subtours, model)
            if len(subtours) > 1:
                for s in subtours:
                    add_subtour_cut(model, s)
                continue

            rep = validate_solution(instance, sol, model)
            if not (rep.valid_edges and rep.degree and rep.connected and rep.model_rows):
                raise ProtocolError(0, "", "solution fails validation: " + "; ".join(rep.messages[:3]))
            cost = cost_matrix(instance)
            stats = SolveStats(solver="external", nodes_explored=rnd, subtours_branched=len(model.cuts),
                               binary_var_count=len(model.variables))
            order = _directed_order(values, instance) if model.variant == "generalized" else None
            out = make_solution(instance, cost, order=order, edges=sol.support(), stats=stats)
            stats.incumbent_cost = stats.best_bound = out.cost
            stats.dt = time.perf_counter() - t0
            return out
        raise NonConvergenceError(max_rounds, len(model.cuts))
    finally:
        if tmp is not None:
            tmp.cleanup()


def stub_command(mode: str = "exact") -> str:
    """Command template running the bundled stub solver with this interpreter."""
    import sys

    return f"{shlex.quote(sys.executable)} -m jointroute.stub_solver --mode {mode} {{lp}}"


__all__ = [
    "ResultRow",
    "run_benchmark",
    "render_svg",
    "scaling_report",
    "external_solve_loop",
    "parse_results",
    "format_results",
    "check_results",
]

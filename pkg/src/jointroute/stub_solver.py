"""A stand-in external MIP solver for the cut loop.

    python -m jointroute.stub_solver [--mode exact|lp] MODEL.lp

Reads an LP file written by :func:`jointroute.model.export_lp` and prints
one ``variable value`` line per nonzero variable (``#`` lines are
comments).  ``exact`` solves the full tour problem and ignores the cuts in
the file, the way a solver with its own subtour callback would.  ``lp``
only enforces the degree rows, fixings, type rows and the cuts present in
the file, so the answer may still split into several cycles.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .exact import compat_separator, cut_separator, search, subtour_separator
from .model import ModelSpec, aname, model_costs, parse_lp, parse_name, xname
from .relaxation import EdgeFixings, cycle_walks


def _fixings(model: ModelSpec) -> tuple[EdgeFixings, np.ndarray | None]:
    n = model.n
    forced = {(n - 1, 2 * n - 1)} if model.fixed_pair else set()
    mask = None
    for row in model.constraints:
        if row.name.startswith("type_"):
            _, i, p = parse_name(row.terms[0][0])
            if mask is None:
                mask = np.ones((n, n), dtype=bool)
            mask[i, p - n] = False
    return EdgeFixings(forced=forced), mask


def _orient_cycle(walk: list[int], mask, n: int, fixed_pair: bool) -> list[int]:
    """Direction of one cycle: fixed pair goal -> start, then type compatibility."""
    options = [walk, [walk[0]] + walk[:0:-1]]
    if fixed_pair and 2 * n - 1 in walk:
        s, g = 2 * n - 1, n - 1
        options = [o for o in options if o[(o.index(g) + 1) % len(o)] == s]
    if mask is not None:
        good = [o for o in options
                if all(mask[o[k], o[(k + 1) % len(o)] - n] for k in range(len(o)) if o[k] < n)]
        options = good or options
    return options[0]


def _cycle_compat(mask, fixed_pair: bool, inner):
    """Wrap a separator so every cycle must also have a type-respecting direction."""
    def separate(x):
        edges = inner(x)
        if edges is not None or mask is None:
            return edges
        n = x.shape[0]
        for w in cycle_walks(x):
            walk = [int(v) for v in w]
            o = _orient_cycle(walk, mask, n, fixed_pair)
            bad = [(o[k], o[(k + 1) % len(o)] - n) for k in range(len(o))
                   if o[k] < n and not mask[o[k], o[(k + 1) % len(o)] - n]]
            if bad:
                rest = []
                for k in range(len(walk)):
                    u, v = walk[k], walk[(k + 1) % len(walk)]
                    e = (u, v - n) if u < n else (v, u - n)
                    if e not in bad:
                        rest.append(e)
                return bad + rest
        return None
    return separate


def solve_model(model: ModelSpec, mode: str = "exact", time_limit: float = 120.0) -> dict[str, int]:
    """Variable values (nonzero only) of an optimal solution of ``model``."""
    n = model.n
    d = model_costs(model)
    base, mask = _fixings(model)
    if mode == "exact":
        separate = subtour_separator if mask is None else compat_separator(mask, model.fixed_pair)
    elif mode == "lp":
        separate = _cycle_compat(mask, model.fixed_pair, cut_separator([c.nodes for c in model.cuts]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    res = search(d, base, separate, None, time_limit)
    if res.x is None:
        raise RuntimeError("model is infeasible")
    values: dict[str, int] = {}
    for w in cycle_walks(res.x):
        walk = [int(v) for v in w]
        if model.variant == "simplified":
            for k in range(len(walk)):
                u, v = walk[k], walk[(k + 1) % len(walk)]
                values[xname(min(u, v), max(u, v))] = 1
        else:
            o = _orient_cycle(walk, mask, n, model.fixed_pair)
            for k in range(len(o)):
                u, v = o[k], o[(k + 1) % len(o)]
                values[xname(u, v)] = 1
                values[aname(min(u, v), max(u, v))] = 1
    return values


def format_values(values: dict[str, int], objective: float | None = None) -> str:
    lines = []
    if objective is not None:
        lines.append(f"# objective {objective!r}")
    lines.extend(f"{k} {v}" for k, v in sorted(values.items()))
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m jointroute.stub_solver")
    ap.add_argument("--mode", choices=("exact", "lp"), default="exact")
    ap.add_argument("--time-limit", type=float, default=120.0)
    ap.add_argument("lp_file")
    args = ap.parse_args(argv)
    model = parse_lp(Path(args.lp_file).read_text())
    try:
        values = solve_model(model, args.mode, args.time_limit)
    except RuntimeError as exc:
        print(f"# {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_values(values, model.objective_value(values)))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``jointroute <command> ...`` (or ``python -m jointroute``).

Exit codes: 0 success, 2 infeasible, 3 timeout without a solution (or no
convergence of the external loop), 4 I/O, schema or protocol error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import (
    DatasetParseError,
    InfeasibleError,
    InvalidCompatibilityError,
    MalformedDatasetError,
    NonConvergenceError,
    ProtocolError,
    SchemaError,
    TimeoutWithoutSolutionError,
)
from .exact import solve_exact
from .harness import (
    check_results,
    external_solve_loop,
    load_results,
    render_svg,
    run_benchmark,
    scaling_report,
)
from .instance import cost_matrix, dataset_filename, generate, load_csv, load_types, save_csv
from .model import build_generalized, build_simplified, export_lp
from .tour import make_solution

EXIT_OK, EXIT_INFEASIBLE, EXIT_TIMEOUT, EXIT_IO = 0, 2, 3, 4


def _instance(args):
    instances = load_csv(args.data)
    if args.experiment not in instances:
        raise SchemaError(f"experiment {args.experiment} not in {args.data}")
    inst = instances[args.experiment]
    if getattr(args, "free", False):
        inst = inst.with_fixed_pair(False)
    if getattr(args, "types", None):
        inst = inst.with_types(load_types(args.types))
    return inst


def _model(inst, variant):
    cost = cost_matrix(inst)
    return build_simplified(inst, cost) if variant == "simplified" else build_generalized(inst, cost)


def cmd_gen(args):
    out = Path(args.out or dataset_filename(args.n))
    save_csv(generate(args.n, args.count, args.seed), out)
    print(out)
    return EXIT_OK


def cmd_solve(args):
    inst = _instance(args)
    sol = solve_exact(inst, time_limit=args.time_limit, workers=args.workers, seed=args.seed, model=args.model)
    st = sol.stats
    print(json.dumps({
        "experiment_id": inst.experiment_id,
        "cost": round(sol.cost, 10),
        "status": "timeout" if st.timed_out else "optimal",
        "gap": st.gap,
        "nodes": st.nodes_explored,
        "dt": round(st.dt, 4),
        "order": sol.order,
        "assignment": {str(k): v for k, v in sorted(sol.assignment.items())},
    }))
    return EXIT_OK


def cmd_bench(args):
    run = run_benchmark(args.data, solver=args.solver, time_limit=args.time_limit, workers=args.workers,
                        seed=args.seed, out_results=args.out_results, out_img=args.out_img,
                        render=not args.no_img)
    for r in run.rows:
        cost = "-" if r.best_cost != r.best_cost else f"{r.best_cost:.4f}"
        print(f"{r.experiment_id}\t{cost}\t{r.dt:.4f}\t{r.status}")
    print(f"results: {run.results_path}")
    return EXIT_OK


def cmd_export_lp(args):
    inst = _instance(args)
    out = export_lp(_model(inst, args.model), args.out)
    print(out)
    return EXIT_OK


def cmd_external(args):
    inst = _instance(args)
    model = _model(inst, args.model)
    sol = external_solve_loop(model, inst, args.solver_cmd, max_rounds=args.max_rounds)
    print(json.dumps({
        "experiment_id": inst.experiment_id,
        "cost": round(sol.cost, 10),
        "rounds": sol.stats.nodes_explored,
        "cuts": sol.stats.subtours_branched,
        "order": sol.order,
    }))
    return EXIT_OK


def cmd_check(args):
    instances = load_csv(args.data)
    rows = load_results(args.results)
    problems = check_results(instances, rows)
    for p in problems:
        print(p)
    print(f"{len(rows)} rows, {len(problems)} problems")
    return EXIT_OK if not problems else EXIT_IO


def cmd_render(args):
    instances = load_csv(args.data)
    rows = {r.experiment_id: r for r in load_results(args.results)}
    if args.experiment not in rows or args.experiment not in instances:
        raise SchemaError(f"experiment {args.experiment} missing from data or results")
    r = rows[args.experiment]
    if not r.edges:
        raise SchemaError(f"experiment {args.experiment} has no tour")
    inst = instances[args.experiment]
    sol = make_solution(inst, cost_matrix(inst), order=r.order())
    print(render_svg(inst, sol, args.out))
    return EXIT_OK


def cmd_report(args):
    rep = scaling_report(args.results)
    sys.stdout.write(rep.text)
    if args.csv:
        Path(args.csv).write_text(rep.csv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jointroute", description="Joint assignment-routing solver")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    def instance_args(p, model=True):
        p.add_argument("--data", required=True)
        p.add_argument("--experiment", type=int, required=True)
        if model:
            p.add_argument("--model", choices=("simplified", "generalized"), default="simplified")
        p.add_argument("--types", help="node,type CSV restricting deliveries to same-type placeholders")
        p.add_argument("--free", action="store_true", help="no fixed start/goal pair")

    p = sub.add_parser("solve", help="solve one experiment exactly")
    instance_args(p)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="solve every experiment and write results and SVGs")
    p.add_argument("--data", required=True)
    p.add_argument("--solver", choices=("exact", "heuristic"), default="exact")
    p.add_argument("--out-results")
    p.add_argument("--out-img")
    p.add_argument("--no-img", action="store_true")
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-lp", help="write the model in LP format")
    instance_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("external", help="solve with an external MIP solver and lazy subtour cuts")
    instance_args(p)
    p.add_argument("--solver-cmd", required=True, help="command template; {lp} is the LP file path")
    p.add_argument("--max-rounds", type=int, default=50)
    p.set_defaults(func=cmd_external)

    p = sub.add_parser("check", help="re-validate a results CSV against its dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--results", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("render", help="draw one result as SVG")
    p.add_argument("--data", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--experiment", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("report", help="per-size timing summary of results files")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InfeasibleError, InvalidCompatibilityError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TimeoutWithoutSolutionError, NonConvergenceError) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (OSError, SchemaError, DatasetParseError, MalformedDatasetError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

# Benchmark runs, results files, checks, rendering and the external-solver loop.
import tempfile
from pathlib import Path

from jointroute.harness import (
    check_results,
    external_solve_loop,
    load_results,
    run_benchmark,
    scaling_report,
    stub_command,
)
from jointroute.instance import cost_matrix, dataset_filename, generate, load_csv, save_csv
from jointroute.model import build_simplified

work = Path(tempfile.mkdtemp())
for n in (8, 16):
    save_csv(generate(n, 4, seed=n), work / dataset_filename(n))

# One results CSV (plus a stats sidecar and one SVG per experiment) per dataset
runs = [run_benchmark(work / dataset_filename(n), time_limit=60) for n in (8, 16)]
for run in runs:
    print(run.results_path.name, [f"{r.best_cost:.4f}" for r in run.rows], sorted(p.name for p in run.image_dir.iterdir())[:2])

# Results re-score against their dataset
data = load_csv(work / dataset_filename(8))
print("problems", check_results(data, load_results(runs[0].results_path)))

# Timing summary across sizes
print(scaling_report([r.results_path for r in runs]).text)

# External solver: any program that reads an LP file and prints "name value" lines
inst = data[1000]
model = build_simplified(inst, cost_matrix(inst))
sol = external_solve_loop(model, inst, stub_command("lp"))
print("external", sol.cost, "rounds", sol.stats.nodes_explored, "cuts", len(model.cuts))

import math
import re
import sys

import numpy as np
import pytest

from conftest import clustered, suite, unit_square
from jointroute.errors import NonConvergenceError, ProtocolError, SchemaError
from jointroute.exact import solve_exact
from jointroute.harness import (
    RESULTS_HEADER,
    ResultRow,
    check_results,
    external_solve_loop,
    format_results,
    load_results,
    parse_results,
    parse_solver_output,
    render_svg,
    rescore,
    run_benchmark,
    save_results,
    scaling_report,
    solve_one,
    stub_command,
    svg_text,
)
from jointroute.instance import Instance, cost_matrix, dataset_filename, generate, load_csv, save_csv
from jointroute.model import build_generalized, build_simplified
from jointroute.oracle import brute_force_optimum, enumerate_tours


@pytest.fixture
def n3_data(tmp_path):
    return save_csv(generate(3, 10, 42), tmp_path / dataset_filename(3))


def _strip_dt(text):
    return [re.sub(r"^(\d+,[^,]*),[^,]*,", r"\1,,", line) for line in text.splitlines()]


def test_benchmark_n3_batch(n3_data, tmp_path):
    run = run_benchmark(n3_data, solver="exact", time_limit=30)
    assert run.results_path == tmp_path / "updated_experiment_n_3_results.csv"
    assert run.image_dir == tmp_path / "img_update3"
    assert len(run.rows) == 10
    assert [r.experiment_id for r in run.rows] == list(range(1000, 1010))
    instances = load_csv(n3_data)
    for r in run.rows:
        assert r.status == "optimal"
        assert abs(r.best_cost - brute_force_optimum(instances[r.experiment_id]).cost) <= 1e-9
    text = run.results_path.read_text()
    assert text.splitlines()[0] == ",".join(RESULTS_HEADER)
    assert sorted(p.name for p in run.image_dir.iterdir()) == [f"experiment_{k}.svg" for k in range(1000, 1010)]
    assert check_results(instances, load_results(run.results_path)) == []
    again = run_benchmark(n3_data, solver="exact", time_limit=30, out_results=tmp_path / "b.csv", render=False)
    assert _strip_dt(again.results_path.read_text()) == _strip_dt(text)


def test_benchmark_concurrent_and_heuristic(n3_data, tmp_path):
    seq = run_benchmark(n3_data, out_results=tmp_path / "s.csv", render=False)
    par = run_benchmark(n3_data, workers=3, out_results=tmp_path / "p.csv", render=False)
    assert [(r.experiment_id, r.edges, r.best_cost) for r in seq.rows] == \
           [(r.experiment_id, r.edges, r.best_cost) for r in par.rows]
    heur = run_benchmark(n3_data, solver="heuristic", out_results=tmp_path / "h.csv", render=False)
    for h, e in zip(heur.rows, seq.rows):
        assert h.best_cost >= e.best_cost - 1e-9
        assert h.status == "timeout"


def test_benchmark_unreadable_dataset(tmp_path):
    with pytest.raises(OSError):
        run_benchmark(tmp_path / "missing.csv", out_results=tmp_path / "r.csv")
    assert not (tmp_path / "r.csv").exists()


def test_infeasible_experiment_becomes_a_status_row():
    pts = [(0, 0), (1, 1)]
    inst = Instance(5, pts, pts, types={0: "a", 1: "b", 2: "b", 3: "a"})
    row = solve_one(inst)
    assert row.status == "infeasible" and math.isnan(row.best_cost) and row.edges == []
    parsed = parse_results(format_results([row]))[0]
    assert parsed.status == "infeasible" and math.isnan(parsed.best_cost)


def test_results_rows_round_trip_and_rescore():
    insts = generate(9, 5, 3)
    rows = [solve_one(i) for i in insts.values()]
    text = format_results(rows)
    back = parse_results(text)
    assert format_results(back) == text
    for r, b in zip(rows, back):
        assert b.edges == r.edges and b.assignment == r.assignment
        assert abs(rescore(b, insts[b.experiment_id]) - b.best_cost) <= 1e-4
        assert f"{r.best_cost:.4f}" == text.splitlines()[1 + rows.index(r)].split(",")[1]
    line = text.splitlines()[1].split(",")
    assert re.fullmatch(r"(\d+:\d+;)*\d+:\d+", line[3])
    assert re.fullmatch(r"(\d+-\d+;)*\d+-\d+", line[4])
    assert line[4].startswith("17-")


def test_check_detects_tampering(tmp_path):
    insts = generate(6, 2, 1)
    rows = [solve_one(i) for i in insts.values()]
    assert check_results(insts, rows) == []
    rows[0].best_cost += 0.01
    rows[1].edges = rows[1].edges[1:] + rows[1].edges[:1]  # tour no longer starts at 2n-1
    problems = check_results(insts, rows)
    assert len(problems) == 2


@pytest.mark.parametrize("text", ["", "a,b\n1,2\n", ",".join(RESULTS_HEADER) + "\n",
                                  ",".join(RESULTS_HEADER) + "\n1,2.0,0.1,,,done\n"])
def test_results_schema_errors(text):
    with pytest.raises(SchemaError):
        parse_results(text)


def test_svg_unit_square(tmp_path):
    inst = unit_square()
    inst = Instance(1000, inst.items, inst.placeholders)
    sol = solve_exact(inst)
    p1 = render_svg(inst, sol, tmp_path / "a.svg")
    p2 = render_svg(inst, sol, tmp_path / "b.svg")
    text = p1.read_text()
    assert p1.read_bytes() == p2.read_bytes()
    assert "4.8284" in text and "1000" in text.split("<title>")[1]
    assert 'viewBox="0 0 1000 1000"' in text
    pts = re.search(r'<polyline class="tour" points="([^"]+)"', text).group(1).split()
    assert len(pts) == 5 and pts[0] == pts[-1] and len(set(pts)) == 4
    assert text.count('class="item"') == 2 and text.count('class="placeholder"') == 2
    assert text.count('class="arrow"') == 4 and text.count('class="start"') == 1
    coords = [tuple(map(float, p.split(","))) for p in pts]
    assert all(0 <= x <= 1000 and 0 <= y <= 1000 for x, y in coords)


def test_svg_preserves_aspect():
    inst = Instance(0, [(0, 0), (4, 0)], [(0, 1), (4, 1)])
    text = svg_text(inst, solve_exact(inst))
    pts = re.search(r'points="([^"]+)"', text).group(1).split()
    xy = np.array([tuple(map(float, p.split(","))) for p in pts])
    width = xy[:, 0].max() - xy[:, 0].min()
    height = xy[:, 1].max() - xy[:, 1].min()
    assert width / height == pytest.approx(4.0, rel=1e-3)


def test_svg_unwritable(tmp_path):
    inst = unit_square()
    with pytest.raises(OSError):
        render_svg(inst, solve_exact(inst), tmp_path / "missing" / "x.svg")


# Table 5 columns as printed: n=32 XQ and n=100 times for experiments 1..10
TABLE5 = {
    "32_xq": [0.1749, 0.0184, 0.2018, 0.0195, 0.0450, 0.0611, 0.0149, 0.1165, 0.0742, 0.0331],
    "100": [0.5980, 0.7149, 0.8715, 0.9859, 2.0169, 1.5554, 0.8501, 0.2294, 0.2498, 2.6301],
}


def _table_file(tmp_path, tag, dts):
    rows = [ResultRow(k + 1, math.nan, dt, {}, [], "optimal") for k, dt in enumerate(dts)]
    return save_results(rows, tmp_path / f"updated_experiment_n_{tag}_results.csv")


def test_scaling_report_from_table5_rows(tmp_path):
    paths = [_table_file(tmp_path, tag, dts) for tag, dts in TABLE5.items()]
    rep = scaling_report(paths)
    by = {r["n"]: r for r in rep.rows}
    assert by["100"]["dt_mean"] == pytest.approx(1.07020, abs=1e-4)
    assert by["32_xq"]["dt_mean"] == pytest.approx(0.07594, abs=1e-4)
    assert by["100"]["dt_max"] == 2.6301 and by["100"]["count"] == 10
    assert [r["n"] for r in rep.rows] == ["32_xq", "100"]
    assert rep.csv.splitlines()[0].startswith("n,count,optimal,dt_mean")
    assert "1.0702" in rep.text


def test_scaling_report_single_row_and_nodes(tmp_path):
    data = save_csv(generate(6, 1, 0), tmp_path / dataset_filename(6))
    run = run_benchmark(data, render=False)
    rep = scaling_report([run.results_path])
    row = rep.rows[0]
    assert row["n"] == "6" and row["dt_mean"] == pytest.approx(round(run.rows[0].dt, 4), abs=1e-9)
    assert row["nodes_mean"] == run.rows[0].nodes


def test_scaling_report_errors(tmp_path):
    empty = tmp_path / "updated_experiment_n_5_results.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        scaling_report([empty])
    mixed = save_csv(generate(3, 1, 0), tmp_path / "data.csv")
    with pytest.raises(SchemaError):
        scaling_report([mixed])
    with pytest.raises(SchemaError):
        scaling_report([])


def test_solver_output_protocol():
    assert parse_solver_output("# comment\n\nx_0_2 1\nx_0_3 0\nx_1_2 1.0000000001\n") == {"x_0_2": 1, "x_1_2": 1}
    for bad, line_no in (("x_0_2 1\nx_0_3 0.5\n", 2), ("x_0_2\n", 1), ("x_0_2 one\n", 1), ("a b c\n", 1)):
        with pytest.raises(ProtocolError) as exc:
            parse_solver_output(bad)
        assert exc.value.line_no == line_no
    inst = unit_square()
    model = build_simplified(inst, cost_matrix(inst))
    with pytest.raises(ProtocolError):
        parse_solver_output("x_9_9 1\n", model)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_external_loop_with_exact_stub(n):
    for inst in suite(n, count=2):
        model = build_simplified(inst, cost_matrix(inst))
        sol = external_solve_loop(model, inst, stub_command("exact"), max_rounds=5)
        assert sol.stats.nodes_explored == 1 and not model.cuts
        assert abs(sol.cost - brute_force_optimum(inst).cost) <= 1e-9
        assert sol.order[0] == 2 * n - 1


def test_external_loop_clustered_needs_cuts():
    inst = clustered(n_per=2)
    rounds = []
    model = build_simplified(inst, cost_matrix(inst))
    sol = external_solve_loop(model, inst, stub_command("lp"), max_rounds=10,
                              on_round=lambda r, subs, m: rounds.append((r, len(subs), len(m.cuts))))
    assert rounds[0] == (1, 2, 0)
    assert rounds[1][0] == 2 and rounds[1][2] >= 2
    assert rounds[-1][1] == 1
    assert abs(sol.cost - brute_force_optimum(inst).cost) <= 1e-9
    for tour in enumerate_tours(4, False):
        vals = {f"x_{i}_{p}": 1 for i, p in tour}
        assert model.violated(vals) == []


def test_external_loop_generalized_with_types():
    rng = np.random.default_rng(3)
    n = 5
    types = {v: ("a" if v % n < 2 else "b") for v in range(2 * n)}
    inst = Instance(0, rng.random((n, 2)), rng.random((n, 2)), types=types, fixed_pair=False)
    for mode in ("exact", "lp"):
        model = build_generalized(inst, cost_matrix(inst))
        sol = external_solve_loop(model, inst, stub_command(mode), max_rounds=20)
        assert abs(sol.cost - brute_force_optimum(inst).cost) <= 1e-9
        assert all(types[i] == types[p] for i, p in sol.assignment.items())


def test_external_loop_failures():
    inst = clustered(n_per=2)
    with pytest.raises(NonConvergenceError) as exc:
        external_solve_loop(build_simplified(inst, cost_matrix(inst)), inst, stub_command("lp"), max_rounds=0)
    assert exc.value.cut_count == 0
    with pytest.raises(NonConvergenceError) as exc:
        external_solve_loop(build_simplified(inst, cost_matrix(inst)), inst, stub_command("lp"), max_rounds=1)
    assert exc.value.rounds == 1 and exc.value.cut_count == 2
    py = sys.executable
    model = build_simplified(inst, cost_matrix(inst))
    with pytest.raises(ProtocolError) as exc:
        external_solve_loop(model, inst, f"{py} -c \"print('x_0_4 maybe')\"", max_rounds=2)
    assert exc.value.line == "x_0_4 maybe"
    with pytest.raises(ProtocolError):
        external_solve_loop(model, inst, f"{py} -c \"import sys; sys.exit(1)\"", max_rounds=2)
    with pytest.raises(ProtocolError):
        external_solve_loop(model, inst, f"{py} -c \"print('x_0_4 1')\"", max_rounds=2)

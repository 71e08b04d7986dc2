import json
import math

import numpy as np
import pytest

from srdescent.bench.cli import main
from srdescent.bench.experiment import (
    TRACE_COLUMNS,
    ExperimentSpec,
    SpecError,
    aggregate_from_traces,
    aggregate_summary,
    emit_plot_data,
    estimate_fstar,
    parse_seeds,
    read_csv,
    render_table,
    run_experiment,
    solver_stream,
    start_point,
)
from srdescent.bench.verify import PROPERTIES


def maxquad_spec(**kw):
    d = dict(family="maxquad", n=20, m=5, seeds=[1], solvers=["srdescent", "srdescent-adapt"],
             max_calls=20000, max_time_s=30.0, target_gap=1e-8)
    d.update(kw)
    return ExperimentSpec(**d)


def test_seed_parsing():
    assert parse_seeds("1..4") == [1, 2, 3, 4]
    assert parse_seeds("1..3,7") == [1, 2, 3, 7]
    assert parse_seeds("5") == [5]
    assert parse_seeds([2, 3]) == [2, 3]
    with pytest.raises(SpecError):
        parse_seeds("4..1")


def test_spec_validation():
    with pytest.raises(SpecError):
        maxquad_spec(solvers=[])
    with pytest.raises(SpecError):
        maxquad_spec(solvers=["newton"])
    with pytest.raises(SpecError):
        maxquad_spec(seeds="")
    with pytest.raises(SpecError):
        ExperimentSpec(family="maxquad", n=5)  # no m
    with pytest.raises(SpecError):
        ExperimentSpec(family="banana", n=5)
    with pytest.raises(SpecError):
        maxquad_spec(cfg={"bogus": 1})
    with pytest.raises(ValueError):
        maxquad_spec(cfg={"theta_eps": 2.0})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"family": "nesterov", "n": 3, "extra": 1})


def test_spec_json_round_trip(tmp_path):
    spec = maxquad_spec(seeds="1..3", solvers=["sr", "adapt", "polyak"], cfg={"eps00": 2.0})
    p = tmp_path / "s.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert ExperimentSpec.from_json(p) == spec
    assert spec.solvers == ["srdescent", "srdescent-adapt", "polyak"]


def test_estimate_fstar():
    assert estimate_fstar(maxquad_spec()) == 0.0
    assert estimate_fstar(ExperimentSpec(family="nesterov", n=3)) == 0.0
    assert estimate_fstar(ExperimentSpec(family="minquad", n=3, m=2)) == 0.0
    mspec = ExperimentSpec(family="marginal", n=3, m=2)
    assert estimate_fstar(mspec) is None
    assert estimate_fstar(mspec, [0.5, -1.25, float("nan")]) == -1.25


def test_streams_are_independent_and_stable():
    a = solver_stream(3, "gs").normal(4)
    assert np.array_equal(a, solver_stream(3, "gs").normal(4))
    assert not np.array_equal(a, solver_stream(3, "polyak").normal(4))
    assert not np.array_equal(a, start_point(3, 4))


def test_maxquad_two_traces_strictly_decreasing(tmp_path):
    assert run_experiment(maxquad_spec(), tmp_path) == 0
    for s in ("srdescent", "srdescent-adapt"):
        rows = read_csv(tmp_path / f"trace_{s}_seed1.csv")
        assert tuple(rows[0]) == TRACE_COLUMNS
        fs = [r["f"] for r in rows]
        assert all(b < a for a, b in zip(fs, fs[1:]))
        assert rows[0]["wall_time_s"] is None
    summ = read_csv(tmp_path / "summary.csv")
    assert [r["status"] for r in summ] == ["TargetReached"] * 2
    assert all(r["fail_flag"] == 0 and r["gap"] <= 1e-8 for r in summ)


def test_nesterov_n3_row():
    spec = ExperimentSpec(family="nesterov", n=3, seeds=[1], solvers=["srdescent"], target_gap=1e-5,
                          max_calls=10**5, max_time_s=60)
    from srdescent.bench.experiment import run_all, summary_row

    results, fstar = run_all(spec)
    row = summary_row(results[0], fstar, spec)
    assert row[2] in ("ApproxStationary", "Budget", "TargetReached")
    assert not row[-1] and row[4] <= 1e-5


def test_plot_data_and_seed_suffix(tmp_path):
    spec = maxquad_spec(n=10, m=4, seeds=[1, 2], solvers=["srdescent", "polyak"], max_calls=3000)
    assert run_experiment(spec, tmp_path) == 0
    files = emit_plot_data(tmp_path)
    names = sorted(p.name for p in files)
    assert names == ["plot_polyak_seed1_calls.csv", "plot_polyak_seed2_calls.csv",
                     "plot_srdescent_seed1_calls.csv", "plot_srdescent_seed2_calls.csv"]
    for p in files:
        rows = read_csv(p)
        lg = [r["log10_gap"] for r in rows]
        assert all(b <= a for a, b in zip(lg, lg[1:]))
        xs = [r["x"] for r in rows]
        assert all(b >= a for a, b in zip(xs, xs[1:]))
    idx = json.loads((tmp_path / "plot_index.json").read_text())
    assert {e["reference"] for e in idx} == {"fstar"}
    # Polyak trace stores best-so-far values
    fs = [r["f"] for r in read_csv(tmp_path / "trace_polyak_seed1.csv")]
    assert all(b <= a for a, b in zip(fs, fs[1:]))


def test_plot_relative_to_best_without_fstar(tmp_path):
    spec = ExperimentSpec(family="marginal", n=4, m=3, seeds=[1], solvers=["srdescent"], max_calls=300,
                          cfg={"eps_tol": 1e-3, "nu_tol": 1e-3})
    assert run_experiment(spec, tmp_path) == 0
    # strip the gap column to emulate traces whose f* is unknown
    p = tmp_path / "trace_srdescent_seed1.csv"
    lines = p.read_text().splitlines()
    rows = [lines[0]] + [",".join(c if i != 2 else "" for i, c in enumerate(ln.split(","))) for ln in lines[1:]]
    p.write_text("\n".join(rows) + "\n")
    emit_plot_data(tmp_path)
    idx = json.loads((tmp_path / "plot_index.json").read_text())
    assert idx[0]["reference"] == "relative-to-best"


def test_marginal_polyak_runs_after_fstar_estimate(tmp_path):
    spec = ExperimentSpec(family="marginal", n=4, m=3, seeds=[1], solvers=["polyak", "srdescent"],
                          max_calls=500, cfg={"eps_tol": 1e-3, "nu_tol": 1e-3})
    assert run_experiment(spec, tmp_path) == 0
    summ = read_csv(tmp_path / "summary.csv")
    assert [r["solver"] for r in summ] == ["polyak", "srdescent"]
    assert summ[0]["status"] != "Error"
    assert min(r["gap"] for r in summ) == 0.0


def test_rerun_is_byte_identical_and_aggregates(tmp_path):
    spec = maxquad_spec(n=10, m=4, seeds="1..2", solvers=["srdescent", "srdescent-adapt", "polyak", "gs"],
                        max_calls=2000)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_experiment(spec, a) == 0 and run_experiment(spec, b) == 0
    run_experiment(spec, a)  # overwrite in place
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name
    agg = aggregate_summary(read_csv(a / "summary.csv"))
    agg2 = aggregate_from_traces(a)
    for s, v in agg.items():
        for k in ("final_f", "gap", "oracle1_calls", "oracle2_calls"):
            assert math.isclose(v[k], agg2[s][k], rel_tol=1e-12, abs_tol=1e-12)
    assert set(agg) == {"srdescent", "srdescent-adapt", "polyak", "gs"}


def test_unwritable_output_returns_nonzero(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    assert run_experiment(maxquad_spec(), f / "sub") == 2


def test_render_table():
    text = render_table([{"solver": "gs", "seed": 1, "status": "Budget", "final_f": 0.5, "gap": None,
                          "oracle1_calls": 3, "oracle2_calls": 0, "wall_time_s": None, "fail_flag": 1}])
    lines = text.splitlines()
    assert lines[0].split() == ["solver", "seed", "status", "final_f", "gap", "oracle1_calls",
                                "oracle2_calls", "wall_time_s", "fail_flag"]
    assert "5.000e-01" in lines[2] and len({len(ln) for ln in lines}) == 1


def test_cli_run_table_plot(tmp_path, capsys):
    out = tmp_path / "r"
    code = main(["run", "--family", "maxquad", "--n", "10", "--m", "4", "--seeds", "1..2",
                 "--solvers", "srdescent,srdescent-adapt", "--target-gap", "1e-8", "--max-calls", "5000",
                 "--out", str(out)])
    assert code == 0
    assert "4 runs, 0 failures" in capsys.readouterr().out
    assert main(["table", str(out / "summary.csv"), "--means"]) == 0
    assert "srdescent-adapt" in capsys.readouterr().out
    assert main(["plot", str(out)]) == 0
    assert main(["run", "--family", "maxquad", "--n", "10", "--m", "4", "--solvers", "", "--out",
                 str(out)]) == 2
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"family": "nesterov", "n": 3, "seeds": [1], "solvers": ["srdescent"],
                                "target_gap": 1e-4}))
    assert main(["run", "--spec", str(spec), "--quiet", "--out", str(tmp_path / "s")]) == 0
    assert main(["table", str(tmp_path / "missing.csv")]) == 2


def test_cli_verify_single_module(capsys):
    assert main(["verify", "--module", "linalg"]) == 0
    assert "PASS" in capsys.readouterr().out


@pytest.mark.parametrize("name,fn", PROPERTIES["bench"], ids=[n for n, _ in PROPERTIES["bench"]])
def test_bench_properties(name, fn):
    ok, detail = fn()
    assert ok, detail

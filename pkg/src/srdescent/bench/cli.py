"""``bench`` command line: run experiments, render summaries, run property suites.

Examples::

    bench run --family maxquad --n 50 --m 10 --seeds 1..5 \\
        --solvers srdescent,srdescent-adapt,polyak,gs --target-gap 1e-8 --max-time 60 --out results/
    bench run --spec experiment.json --out results/
    bench table results/summary.csv
    bench plot results/
    bench verify [--module qp --module oracles]
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import (
    DESK_DIMS,
    ExperimentSpec,
    SpecError,
    aggregate_summary,
    emit_plot_data,
    estimate_fstar,
    normalize_family,
    full_scale_dims,
    read_csv,
    render_table,
    run_experiment,
)


def _spec_from_args(a) -> ExperimentSpec:
    if a.spec:
        with open(a.spec) as fh:
            d = json.load(fh)
    else:
        if not a.family:
            raise SpecError("give --family or --spec")
        d = {"family": a.family}
    fam = normalize_family(d["family"])
    dims = full_scale_dims(fam) if a.full_scale else dict(DESK_DIMS[fam])
    for key in ("n", "m", "d"):
        if key not in d and key in dims:
            d[key] = dims[key]
    overrides = {
        "n": a.n, "m": a.m, "d": a.d, "seeds": a.seeds, "max_calls": a.max_calls,
        "max_time_s": a.max_time, "target_gap": a.target_gap, "gs_samples": a.gs_samples,
    }
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    if a.solvers is not None:
        d["solvers"] = [s for s in a.solvers.split(",") if s.strip()]
    if a.preset_start:
        d["start"] = "preset"
    if a.wall_time:
        d["record_wall_time"] = True
    cfg = dict(d.get("cfg", {}))
    for kv in a.cfg or []:
        key, _, val = kv.partition("=")
        cfg[key.strip()] = float(val) if key.strip() not in ("max_outer", "max_inner") else int(val)
    if cfg:
        d["cfg"] = cfg
    return ExperimentSpec.from_dict(d)


def cmd_run(a) -> int:
    try:
        spec = _spec_from_args(a)
    except (SpecError, ValueError, OSError, KeyError) as exc:
        print(f"bench run: invalid spec: {exc}", file=sys.stderr)
        return 2
    code = run_experiment(spec, a.out)
    if code == 0 and not a.quiet:
        rows = read_csv(f"{a.out}/summary.csv")
        print(render_table(rows), end="")
        fails = sum(int(r["fail_flag"]) for r in rows)
        print(f"{len(rows)} runs, {fails} failures, f* = {estimate_fstar(spec, [r['final_f'] for r in rows])}")
    return code


def cmd_table(a) -> int:
    try:
        rows = read_csv(a.summary)
    except OSError as exc:
        print(f"bench table: {exc}", file=sys.stderr)
        return 2
    print(render_table(rows), end="")
    if a.means:
        agg = aggregate_summary(rows)
        cols = ("solver", "runs", "fails", "final_f", "gap", "oracle1_calls", "oracle2_calls")
        print()
        print(render_table([dict(solver=s, **v) for s, v in agg.items()], cols), end="")
    return 0


def cmd_plot(a) -> int:
    try:
        files = emit_plot_data(a.out_dir)
    except (OSError, ValueError) as exc:
        print(f"bench plot: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(files)} series files")
    return 0


def cmd_verify(a) -> int:
    from .verify import run_suites

    return 0 if run_suites(a.module) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment and write CSV traces")
    r.add_argument("--spec", help="JSON file mirroring ExperimentSpec")
    r.add_argument("--family", help="maxquad | nesterov | minquad | marginal")
    r.add_argument("--n", type=int)
    r.add_argument("--m", type=int)
    r.add_argument("--d", type=int)
    r.add_argument("--seeds", help='e.g. "1..10" or "1,3,5"')
    r.add_argument("--solvers", help="comma list of srdescent, srdescent-adapt, polyak, gs")
    r.add_argument("--target-gap", type=float)
    r.add_argument("--max-time", type=float, help="seconds per run")
    r.add_argument("--max-calls", type=int, help="oracle1 + oracle2 calls per run")
    r.add_argument("--gs-samples", type=int, help="gradient-sampling sample count (default n+1)")
    r.add_argument("--cfg", action="append", metavar="KEY=VALUE", help="SolverConfig override")
    r.add_argument("--preset-start", action="store_true", help="nesterov fixed start point")
    r.add_argument("--full-scale", action="store_true", help="use the full-scale problem sizes")
    r.add_argument("--wall-time", action="store_true",
                   help="record wall-clock columns (outputs are then not byte-reproducible)")
    r.add_argument("--quiet", action="store_true")
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_run)

    t = sub.add_parser("table", help="render a summary CSV as an aligned table")
    t.add_argument("summary")
    t.add_argument("--means", action="store_true", help="also print per-solver means")
    t.set_defaults(fn=cmd_table)

    pl = sub.add_parser("plot", help="write gap-vs-calls/time series from trace files")
    pl.add_argument("out_dir")
    pl.set_defaults(fn=cmd_plot)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--module", action="append", help="restrict to a module (repeatable)")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    return a.fn(a)


if __name__ == "__main__":
    sys.exit(main())

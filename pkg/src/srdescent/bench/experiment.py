"""Experiment specs, runs, CSV traces and plot data.

Output layout of ``run_experiment(spec, out)``::

    out/trace_<solver>_seed<seed>.csv   one per (solver, seed)
    out/summary.csv                      one row per (solver, seed)

Every file is written atomically (temp file + rename).  Floats are written
with ``repr`` so that rerunning a spec gives byte-identical files; wall-clock
columns stay empty unless ``spec.record_wall_time`` is set.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..linalg import RngStream
from ..problems import (
    gen_marginal_qp,
    gen_max_quad,
    gen_min_quad,
    gen_nesterov_cr,
    oracle1_view,
    oracle2_view,
)
from ..solvers import (
    RunTrace,
    SolverConfig,
    Status,
    run_algorithm1,
    run_algorithm2,
    run_gradient_sampling,
    run_polyak,
)

FAMILIES = ("maxquad", "nesterov", "minquad", "marginal")
SOLVERS = ("srdescent", "srdescent-adapt", "polyak", "gs")

_FAMILY_ALIASES = {
    "maxquad": "maxquad", "max-quad": "maxquad",
    "nesterov": "nesterov", "nesterovcr": "nesterov", "nesterov-cr": "nesterov",
    "minquad": "minquad", "min-quad": "minquad",
    "marginal": "marginal", "marginalqp": "marginal", "marginal-qp": "marginal",
}
_SOLVER_ALIASES = {
    "srdescent": "srdescent", "sr": "srdescent",
    "srdescent-adapt": "srdescent-adapt", "srdescentadapt": "srdescent-adapt", "adapt": "srdescent-adapt",
    "polyak": "polyak",
    "gs": "gs", "gradsampling": "gs", "gradient-sampling": "gs",
}

TRACE_COLUMNS = ("k", "f", "gap", "gnorm", "eps_ki", "eta", "inner_iters",
                 "oracle1_calls", "oracle2_calls", "wall_time_s")
SUMMARY_COLUMNS = ("solver", "seed", "status", "final_f", "gap", "oracle1_calls",
                   "oracle2_calls", "wall_time_s", "fail_flag")

# Full-scale grids, available through ``full_scale_dims``.
FULL_DIMS = {
    "maxquad": {"n": 200, "m": 50},
    "nesterov": {"n": 20},
    "minquad": {"n": 300, "d": 300, "m": 50},
    "marginal": {"n": 200, "m": 100},
}
DESK_DIMS = {
    "maxquad": {"n": 50, "m": 10},
    "nesterov": {"n": 3},
    "minquad": {"n": 50, "d": 50, "m": 10},
    "marginal": {"n": 50, "m": 10},
}


class SpecError(ValueError):
    """Invalid experiment specification."""


def normalize_family(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    if key not in _FAMILY_ALIASES:
        raise SpecError(f"unknown family {name!r}; choose from {', '.join(FAMILIES)}")
    return _FAMILY_ALIASES[key]


def normalize_solver(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    if key not in _SOLVER_ALIASES:
        raise SpecError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")
    return _SOLVER_ALIASES[key]


def parse_seeds(text) -> list[int]:
    """``"1..10"``, ``"1,2,5"``, ``"1..3,7"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise SpecError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    return seeds


# SolverConfig fields that may be set from a spec (a_seq is code, not data).
_CFG_FIELDS = ("eps00", "nu0", "theta_eps", "theta_nu", "alpha", "eps_tol", "nu_tol",
               "max_outer", "max_inner")


@dataclass
class ExperimentSpec:
    family: str
    n: int
    m: int | None = None
    d: int | None = None
    seeds: list = field(default_factory=lambda: [1])
    solvers: list = field(default_factory=lambda: ["srdescent", "srdescent-adapt"])
    cfg: dict = field(default_factory=dict)
    max_calls: int | None = 10**5
    max_time_s: float = 60.0
    target_gap: float | None = 1e-8
    gs_samples: int | None = None  # default n + 1
    start: str = "random"  # or "preset" (NesterovCR only)
    record_wall_time: bool = False

    def __post_init__(self):
        self.family = normalize_family(self.family)
        self.seeds = parse_seeds(self.seeds)
        self.solvers = [normalize_solver(s) for s in self.solvers]
        self.validate()

    def validate(self):
        if not self.seeds:
            raise SpecError("seeds must be non-empty")
        if not self.solvers:
            raise SpecError("solvers must be non-empty")
        if len(set(self.solvers)) != len(self.solvers):
            raise SpecError("duplicate solver")
        if self.n is None or self.n < 1:
            raise SpecError("n must be a positive integer")
        if self.family in ("maxquad", "minquad", "marginal") and not self.m:
            raise SpecError(f"family {self.family} needs m")
        if self.family == "minquad" and self.d is None:
            self.d = self.n
        if self.family == "nesterov" and self.n < 2:
            raise SpecError("nesterov needs n >= 2")
        if self.family == "maxquad" and self.m < 2:
            raise SpecError("maxquad needs m >= 2")
        if self.family == "minquad" and self.d < self.n:
            raise SpecError("minquad needs d >= n")
        if self.start not in ("random", "preset"):
            raise SpecError("start must be 'random' or 'preset'")
        if self.start == "preset" and self.family != "nesterov":
            raise SpecError("the preset start exists only for nesterov")
        if self.family == "marginal" and self.solvers == ["polyak"]:
            raise SpecError("polyak needs f*; on marginal it must run with another solver")
        bad = set(self.cfg) - set(_CFG_FIELDS)
        if bad:
            raise SpecError(f"unknown cfg keys {sorted(bad)}")
        self.solver_config()  # surfaces SolverConfig validation errors early

    def solver_config(self, f_target=None) -> SolverConfig:
        return SolverConfig(max_calls=self.max_calls, max_time_s=self.max_time_s,
                            f_target=f_target, **self.cfg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise SpecError(f"unknown spec keys {sorted(bad)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def full_scale_dims(family: str) -> dict:
    return dict(FULL_DIMS[normalize_family(family)])


# ---------------------------------------------------------------------------
# instances, starts and streams


def make_instance(family: str, n: int, m=None, d=None, seed: int = 1):
    """Instance of ``family`` generated from ``RngStream(seed)``."""
    family = normalize_family(family)
    rng = RngStream(seed)
    if family == "maxquad":
        return gen_max_quad(n, m, rng)
    if family == "nesterov":
        return gen_nesterov_cr(n)
    if family == "minquad":
        return gen_min_quad(n, n if d is None else d, m, rng)
    return gen_marginal_qp(n, m, rng)


def start_point(seed: int, n: int, inst=None, preset: bool = False) -> np.ndarray:
    """Shared start for every solver of a seed: standard normal from a child stream."""
    if preset:
        return inst.preset_start()
    return RngStream(seed).spawn(1).normal(n)


def solver_stream(seed: int, solver: str) -> RngStream:
    # hash(spec seed, solver id); crc32 is stable across processes
    return RngStream(seed).spawn(2, zlib.crc32(solver.encode()))


def known_fstar(family: str):
    family = normalize_family(family)
    return None if family == "marginal" else 0.0


def estimate_fstar(spec: ExperimentSpec, final_values=None):
    """f* of the family, or the best final value over ``final_values`` when unknown.

    Returns ``None`` (unknown) for the marginal family without run results.
    """
    fs = known_fstar(spec.family)
    if fs is not None:
        return fs
    vals = [v for v in (final_values or []) if v is not None and math.isfinite(v)]
    return min(vals) if vals else None


@dataclass
class RunResult:
    solver: str
    seed: int
    trace: RunTrace | None
    error: str | None = None


def run_single(spec: ExperimentSpec, solver: str, seed: int, fstar=None) -> RunResult:
    """One (solver, seed) run.  Oracle failures become an ``error`` result."""
    try:
        inst = make_instance(spec.family, spec.n, spec.m, spec.d, seed)
        x0 = start_point(seed, inst.n, inst, preset=(spec.start == "preset"))
        fs = known_fstar(spec.family)
        target = None
        if fs is not None and spec.target_gap is not None:
            target = fs + spec.target_gap
        cfg = spec.solver_config(target)
        if solver == "srdescent":
            tr = run_algorithm1(oracle2_view(inst), x0, cfg)
        elif solver == "srdescent-adapt":
            tr = run_algorithm2(oracle2_view(inst), x0, cfg)
        elif solver == "polyak":
            fps = fs if fs is not None else fstar
            if fps is None:
                return RunResult(solver, seed, None, "f* unknown")
            tr = run_polyak(oracle1_view(inst), fps, x0, spec.max_calls or 10**5,
                            f_target=target, max_time_s=spec.max_time_s)
        else:
            k = spec.gs_samples if spec.gs_samples else inst.n + 1
            tr = run_gradient_sampling(oracle1_view(inst), x0, k, cfg,
                                       solver_stream(seed, solver))
        return RunResult(solver, seed, tr)
    except Exception as exc:  # recorded as a failed row, not a crash
        return RunResult(solver, seed, None, f"{type(exc).__name__}: {exc}")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BENCH_THREADS", "1")))
    except ValueError:
        return 1


def _map_runs(spec, jobs, fstar=None):
    if not jobs:
        return []
    nt = min(_threads(), len(jobs))
    if nt == 1:
        return [run_single(spec, s, seed, fstar) for s, seed in jobs]
    with ThreadPoolExecutor(nt) as ex:
        return list(ex.map(lambda j: run_single(spec, j[0], j[1], fstar), jobs))


def run_all(spec: ExperimentSpec):
    """Run every (solver, seed) pair; returns (results in spec order, f*)."""
    order = [(s, seed) for s in spec.solvers for seed in spec.seeds]
    first = [j for j in order if not (j[0] == "polyak" and known_fstar(spec.family) is None)]
    done = dict(zip(first, _map_runs(spec, first)))
    fstar = estimate_fstar(spec, [r.trace.final_f for r in done.values() if r.trace is not None])
    rest = [j for j in order if j not in done]
    done.update(zip(rest, _map_runs(spec, rest, fstar)))
    if known_fstar(spec.family) is None:
        # the Polyak second pass may improve on the estimate
        fstar = estimate_fstar(spec, [r.trace.final_f for r in done.values() if r.trace is not None])
    return [done[j] for j in order], fstar


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def atomic_write_text(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


def trace_filename(solver: str, seed: int) -> str:
    return f"trace_{solver}_seed{seed}.csv"


def trace_rows(trace: RunTrace, fstar, wall_time: bool):
    """One row per record, plus a terminal row when calls were spent after the last record.

    The terminal row (nan step columns, unchanged f) makes the last row's
    counters equal the run totals, e.g. for budget stops mid inner loop.
    """
    rows = []
    for r in trace.records:
        gap = None if fstar is None else r.f - fstar
        rows.append([r.k, r.f, gap, r.gnorm, r.eps_ki, r.eta, r.inner_iters,
                     r.oracle1_calls, r.oracle2_calls, r.wall_time_s if wall_time else None])
    last = trace.records[-1]
    if (trace.oracle1_calls, trace.oracle2_calls) != (last.oracle1_calls, last.oracle2_calls):
        gap = None if fstar is None else trace.final_f - fstar
        rows.append([last.k, trace.final_f, gap, math.nan, math.nan, math.nan, 0,
                     trace.oracle1_calls, trace.oracle2_calls,
                     trace.wall_time_s if wall_time else None])
    return rows


_SUCCESS = (Status.TARGET_REACHED, Status.APPROX_STATIONARY)


def summary_row(res: RunResult, fstar, spec: ExperimentSpec):
    if res.trace is None:
        return [res.solver, res.seed, "Error", None, None, 0, 0, None, True]
    tr = res.trace
    gap = None if fstar is None else tr.final_f - fstar
    fail = tr.status not in _SUCCESS
    if known_fstar(spec.family) is not None and spec.target_gap is not None:
        fail = gap > spec.target_gap
    elif tr.status == Status.LINE_SEARCH_FAIL:
        fail = True
    return [res.solver, res.seed, tr.status.value, tr.final_f, gap, tr.oracle1_calls,
            tr.oracle2_calls, tr.wall_time_s if spec.record_wall_time else None, fail]


def run_experiment(spec: ExperimentSpec, out_dir) -> int:
    """Run ``spec`` and write traces plus ``summary.csv`` into ``out_dir``.

    Returns 0 on success, 2 on I/O failure.  Solver failures are rows.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
    except OSError as exc:
        print(f"bench: cannot write to {out}: {exc}", file=sys.stderr)
        return 2
    results, fstar = run_all(spec)
    try:
        for res in results:
            if res.trace is None:
                continue
            text = _csv_text(TRACE_COLUMNS, trace_rows(res.trace, fstar, spec.record_wall_time))
            atomic_write_text(out / trace_filename(res.solver, res.seed), text)
        rows = [summary_row(r, fstar, spec) for r in results]
        atomic_write_text(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, rows))
        atomic_write_text(out / "spec.json", json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"bench: write failed: {exc}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# reading back, aggregates, plot data


def _parse(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def aggregate_summary(rows) -> dict:
    """Per-solver means over seeds of final_f, gap and call counts, plus the fail count."""
    out = {}
    for solver in dict.fromkeys(r["solver"] for r in rows):
        rs = [r for r in rows if r["solver"] == solver]
        agg = {"runs": len(rs), "fails": sum(int(r["fail_flag"]) for r in rs)}
        for key in ("final_f", "gap", "oracle1_calls", "oracle2_calls"):
            vals = [r[key] for r in rs if r[key] is not None]
            agg[key] = float(np.mean(vals)) if vals else None
        out[solver] = agg
    return out


def aggregate_from_traces(out_dir) -> dict:
    """Same aggregates as :func:`aggregate_summary`, rebuilt from trace files."""
    out_dir = Path(out_dir)
    summary = read_csv(out_dir / "summary.csv")
    rows = []
    for r in summary:
        path = out_dir / trace_filename(r["solver"], r["seed"])
        if not path.exists():
            rows.append(dict(r))
            continue
        last = read_csv(path)[-1]
        rows.append({"solver": r["solver"], "fail_flag": r["fail_flag"], "final_f": last["f"],
                     "gap": last["gap"], "oracle1_calls": last["oracle1_calls"],
                     "oracle2_calls": last["oracle2_calls"]})
    return aggregate_summary(rows)


def emit_plot_data(out_dir, fstar=None) -> list[Path]:
    """Write gap-vs-calls (and gap-vs-time, when recorded) series per trace.

    Series files are ``plot_<solver>_seed<seed>_<calls|time>.csv`` with columns
    ``x, log10_gap``.  The gap is taken against ``fstar`` when given, then the
    trace's own gap column; if neither exists it is taken relative to the best
    value among all traces and the series is marked so in ``plot_index.json``.
    Values are running minima, which is the best-so-far curve for Polyak.
    """
    out_dir = Path(out_dir)
    traces = sorted(out_dir.glob("trace_*_seed*.csv"))
    if not traces:
        raise FileNotFoundError(f"no trace files in {out_dir}")
    data = {p: read_csv(p) for p in traces}
    reference = "fstar"
    if fstar is None and any(row["gap"] is None for rows in data.values() for row in rows):
        fstar = min(row["f"] for rows in data.values() for row in rows)
        reference = "relative-to-best"
    written, index = [], []
    for p, rows in data.items():
        stem = p.stem[len("trace_"):]
        gaps = [row["f"] - fstar if fstar is not None else row["gap"] for row in rows]
        best = np.minimum.accumulate(np.asarray(gaps, dtype=float))
        with np.errstate(divide="ignore"):
            lg = np.log10(np.maximum(best, 0.0))
        calls = [row["oracle1_calls"] + row["oracle2_calls"] for row in rows]
        series = {"calls": calls}
        if all(row["wall_time_s"] is not None for row in rows):
            series["time"] = [row["wall_time_s"] for row in rows]
        for axis, xs in series.items():
            path = out_dir / f"plot_{stem}_{axis}.csv"
            atomic_write_text(path, _csv_text(("x", "log10_gap"), zip(xs, lg)))
            written.append(path)
            index.append({"file": path.name, "axis": axis, "reference": reference})
    atomic_write_text(out_dir / "plot_index.json", json.dumps(index, indent=1) + "\n")
    return written


def render_table(rows, columns=SUMMARY_COLUMNS) -> str:
    """Aligned plain-text table of summary rows."""
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.3e}"
        return str(v)
    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"

"""Acceptance criteria, one test each.  Tolerances and budgets are fixed here."""

import subprocess
import sys
import time

import numpy as np
import pytest

from srdescent.bench.experiment import make_instance, start_point
from srdescent.bench.verify import (
    composite_cases,
    min_norm_limit_errors,
    kink_cases,
    p_norm_bound,
    p_prox_linear,
    p_sandwich,
    p_uniform_descent,
)
from srdescent.linalg import RngStream
from srdescent.oracles import direction_marginal_licq, marginal_inner
from srdescent.problems import gen_marginal_qp, gen_nesterov_cr, oracle1_view, oracle2_view
from srdescent.solvers import SolverConfig, Status, run_algorithm1, run_algorithm2, run_polyak


@pytest.fixture
def detail(record_property):
    def put(text):
        record_property("detail", text)
    return put


def test_01_prox_linear_equivalence(detail):
    t0 = time.perf_counter()
    ok, msg = p_prox_linear(composite_cases(100))
    dt = time.perf_counter() - t0
    detail(f"{msg}, {dt:.1f}s")
    assert ok and dt < 10.0


def test_02_uniform_descent(detail):
    # Held to the unit coefficient as stated; see the weak-form property for the bound that does hold.
    t0 = time.perf_counter()
    ok, msg = p_uniform_descent(composite_cases(100))
    dt = time.perf_counter() - t0
    detail(f"{msg}, {dt:.1f}s")
    assert ok and dt < 10.0


def test_03_sandwich_and_norm_bound(detail):
    t0 = time.perf_counter()
    cases = kink_cases(50)
    ok1, m1 = p_sandwich(cases)
    ok2, m2 = p_norm_bound(cases)
    dt = time.perf_counter() - t0
    detail(f"sandwich {m1}; norm {m2}; {dt:.1f}s")
    assert ok1 and ok2 and dt < 5.0


def test_04_min_norm_limit(detail):
    t0 = time.perf_counter()
    errs = min_norm_limit_errors(kink_cases(50), jmax=30)
    dt = time.perf_counter() - t0
    detail(f"worst {max(errs):.2e} over {len(errs)} kinks, {dt:.1f}s")
    assert max(errs) <= 1e-6 and len(errs) == 50 and dt < 10.0


def _tail_fit(trace, window=30):
    gaps = np.array([r.f for r in trace.records])  # f* = 0
    ks = np.array([r.k for r in trace.records], dtype=float)
    keep = gaps > 0
    ks, lg = ks[keep][-window:], np.log10(gaps[keep][-window:])
    slope, icpt = np.polyfit(ks, lg, 1)
    resid = lg - (slope * ks + icpt)
    r2 = 1.0 - resid @ resid / max(float(((lg - lg.mean()) ** 2).sum()), 1e-300)
    return slope, r2


def test_05_linear_convergence_maxquad(detail):
    worst_r2, worst_slope, worst_t = 1.0, -np.inf, 0.0
    for m in (10, 50):
        for seed in range(1, 6):
            inst = make_instance("maxquad", 50, m, seed=seed)
            x0 = start_point(seed, 50)
            tr = run_algorithm2(oracle2_view(inst), x0, SolverConfig(f_target=1e-8, max_time_s=60.0))
            assert tr.status is Status.TARGET_REACHED and tr.final_f <= 1e-8, (m, seed, tr.status)
            slope, r2 = _tail_fit(tr)
            worst_r2, worst_slope = min(worst_r2, r2), max(worst_slope, slope)
            worst_t = max(worst_t, tr.wall_time_s)
            assert slope < 0 and r2 >= 0.9, (m, seed, slope, r2)
    detail(f"min R^2 {worst_r2:.3f}, max slope {worst_slope:.3f}, slowest run {worst_t:.1f}s")


def test_06_nesterov_low_dimension(detail):
    t0 = time.perf_counter()
    msgs = []
    for n, target, reference_calls in ((3, 1e-5, 7.2e2), (5, 1e-2, 5.5e2)):
        inst = gen_nesterov_cr(n)
        starts = [inst.preset_start()] + [start_point(s, n) for s in range(1, 11)]
        for name, run in (("SRDescent", run_algorithm1), ("SRDescent-adapt", run_algorithm2)):
            calls, fails = [], 0
            for x0 in starts:
                tr = run(oracle2_view(inst), x0, SolverConfig(f_target=target, max_calls=10**5, max_time_s=30))
                fails += tr.final_f > target
                calls.append(tr.total_calls)
            msgs.append(f"n={n} {name}: fails {fails}, max calls {max(calls)}")
            assert fails == 0 and max(calls) <= 10 * reference_calls, msgs[-1]
    dt = time.perf_counter() - t0
    detail("; ".join(msgs) + f"; {dt:.1f}s")
    assert dt < 60.0


def test_07_min_quad(detail):
    times = []
    for seed in range(1, 6):
        inst = make_instance("minquad", 50, 10, 50, seed=seed)
        g0 = oracle2_view(inst).eval(inst.xstar, 1.0).g
        assert np.linalg.norm(g0) <= 1e-10
        tr = run_algorithm1(oracle2_view(inst), start_point(seed, 50), SolverConfig(f_target=1e-8, max_time_s=60.0))
        times.append(tr.wall_time_s)
        assert tr.status is Status.TARGET_REACHED and tr.final_f <= 1e-8, (seed, tr.status, tr.final_f)
    detail(f"5/5 seeds reach 1e-8, run times {', '.join(f'{t:.1f}' for t in times)}s")


def test_08_marginal_consistency(detail):
    pts, worst, h = 0, 0.0, 1e-6
    xs = RngStream(77)
    s = 0
    while pts < 50:
        inst = gen_marginal_qp(50, 10, RngStream(500 + s))
        s += 1
        x = xs.normal(50)
        inner = marginal_inner(inst.problem, x)
        if inner["diagnostics"]["degenerate"] or inner["diagnostics"]["weakly_active"]:
            continue
        g = direction_marginal_licq(inst.problem, x, 1e-10, inner=inner).g
        fd = np.array([(inst.value(x + h * e) - inst.value(x - h * e)) / (2 * h) for e in np.eye(50)])
        worst = max(worst, float(np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))))
        pts += 1
    assert worst <= 1e-4
    times = []
    for seed in (1, 2, 3):
        inst = make_instance("marginal", 50, 10, seed=seed)
        cfg = SolverConfig(eps_tol=1e-3, nu_tol=1e-3, max_time_s=120.0)
        tr = run_algorithm1(oracle2_view(inst), start_point(seed, 50), cfg)
        times.append(tr.wall_time_s)
        assert tr.status is Status.APPROX_STATIONARY, (seed, tr.status)
    detail(f"FD worst rel err {worst:.1e} at 50 points; stationary in {', '.join(f'{t:.1f}' for t in times)}s")


def test_09_polyak_baseline(detail):
    wins, rows = 0, []
    for seed in range(1, 6):
        inst = make_instance("maxquad", 50, 10, seed=seed)
        x0 = start_point(seed, 50)
        ta = run_algorithm2(oracle2_view(inst), x0, SolverConfig(max_calls=10**4))
        tp = run_polyak(oracle1_view(inst), 0.0, x0, 10**4)
        wins += ta.final_f < tp.final_f
        rows.append(f"{ta.final_f:.1e}/{tp.final_f:.1e}")
    detail(f"adapt wins {wins}/5 (adapt/polyak gaps {' '.join(rows)})")
    assert wins >= 4


def test_10_bench_run_deterministic(tmp_path, detail):
    args = [sys.executable, "-m", "srdescent.bench", "run", "--family", "maxquad", "--n", "20", "--m", "5",
            "--seeds", "1..2", "--solvers", "srdescent,srdescent-adapt,polyak,gs", "--max-calls", "5000",
            "--quiet"]
    for out in ("a", "b"):
        subprocess.run(args + ["--out", str(tmp_path / out)], check=True)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    detail(f"{sum(same)}/{len(files)} files byte-identical")
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(same)


def test_11_property_suites(detail):
    t0 = time.perf_counter()
    mods = [a for m in ("qp", "oracles", "solvers", "problems") for a in ("--module", m)]
    proc = subprocess.run([sys.executable, "-m", "srdescent.bench", "verify", *mods],
                          capture_output=True, text=True)
    dt = time.perf_counter() - t0
    fails = [ln for ln in proc.stdout.splitlines() if ln.startswith("FAIL")]
    detail(f"{len(fails)} failing properties, {dt:.0f}s" + (f": {'; '.join(fails)}" if fails else ""))
    assert proc.returncode == 0 and dt < 300.0

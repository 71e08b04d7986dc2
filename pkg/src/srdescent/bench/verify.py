"""Property suites run by ``bench verify``.

Each property is a function returning ``(ok, detail)``.  They are
registered per module (``linalg``, ``qp``, ``oracles``, ``solvers``,
``problems``, ``bench``) and are also imported by the test-suite, so the
CLI and pytest check the same statements.
"""

from __future__ import annotations

import itertools
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from ..linalg import RngStream, mat_vec, random_psd, standard_normal_vector
from ..oracles import (
    direction_composite,
    direction_max_of_smooth,
    direction_min_of_smooth,
    min_norm_subgradient_bruteforce,
    prox_linear_step,
    _negate_piece,
)
from ..problems import (
    gen_marginal_qp,
    gen_max_quad,
    gen_min_quad,
    gen_nesterov_cr,
    oracle2_view,
    to_json,
)
from ..qp import (
    PolyhedralQP,
    QPStatus,
    SimplexQP,
    box_kkt_residual,
    polyhedral_kkt,
    project_simplex,
    simplex_kkt_residual,
    solve_box_qp,
    solve_polyhedral_qp,
    solve_simplex_qp,
)
from ..solvers import SolverConfig, run_algorithm1, run_algorithm2
from .fixtures import (
    random_box_qp,
    random_composite,
    random_kink,
    random_polyhedral_qp,
    random_simplex_qp,
    rand_int,
)

PROPERTIES: dict[str, list[tuple[str, Callable]]] = {}


def prop(module: str, name: str):
    def deco(fn):
        PROPERTIES.setdefault(module, []).append((name, fn))
        return fn
    return deco


def _result(worst, bound, what="worst"):
    return bool(worst <= bound), f"{what} {worst:.3e} (bound {bound:.0e})"


# ---------------------------------------------------------------------------
# linalg


@prop("linalg", "generator determinism")
def p_linalg_determinism():
    a = [RngStream(7).normal(25), random_psd(6, RngStream(7)), standard_normal_vector(9, 0.3, RngStream(7))]
    b = [RngStream(7).normal(25), random_psd(6, RngStream(7)), standard_normal_vector(9, 0.3, RngStream(7))]
    ok = all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
    return ok, "byte-identical" if ok else "draws differ"


@prop("linalg", "random_psd is PSD")
def p_random_psd():
    rng = RngStream(11)
    worst = np.inf
    for n in (1, 2, 5, 10):
        M = random_psd(n, rng)
        V = rng.normal((1000, n))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        worst = min(worst, float(np.min(np.einsum("ij,jk,ik->i", V, M, V))))
    return worst >= -1e-10, f"min v^T M v = {worst:.3e}"


@prop("linalg", "normal equations via mat_vec")
def p_normal_equations():
    rng = RngStream(12)
    worst = 0.0
    for _ in range(100):
        r, c = rand_int(rng, 1, 8), rand_int(rng, 1, 8)
        M = rng.normal((r, c))
        v = rng.normal(c)
        got = mat_vec(M.T, mat_vec(M, v))
        ref = (M.T @ M) @ v
        worst = max(worst, np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-300))
    return _result(worst, 1e-12, "worst relative error")


# ---------------------------------------------------------------------------
# qp


def _simplex_grid(dim, step):
    k = int(round(1 / step))
    if dim == 1:
        return np.ones((1, 1))
    if dim == 2:
        a = np.arange(k + 1) / k
        return np.column_stack([a, 1 - a])
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    mask = i + j <= k
    i, j = i[mask], j[mask]
    return np.column_stack([i, j, k - i - j]) / k


def _projection_by_support(v):
    """Projection onto the simplex by enumerating supports (independent of sorting)."""
    d = v.size
    best, best_p = np.inf, None
    for size in range(1, d + 1):
        for S in itertools.combinations(range(d), size):
            S = list(S)
            tau = (v[S].sum() - 1.0) / size
            p = np.zeros(d)
            p[S] = v[S] - tau
            if np.any(p[S] < 0):
                continue
            dist = float(np.sum((p - v) ** 2))
            if dist < best:
                best, best_p = dist, p
    return best_p


@prop("qp", "simplex projection vs dense grid")
def p_projection_grid():
    """Grid check (step 1e-3) in dimensions 1..3; support enumeration in 4..10.

    A step-1e-3 grid of the simplex is only tractable in low dimension.
    """
    rng = RngStream(21)
    worst_grid = worst_enum = 0.0
    grids = {d: _simplex_grid(d, 1e-3) for d in (1, 2, 3)}
    for t in range(1000):
        d = 1 + t % 3
        v = 2.0 * rng.normal(d)
        G = grids[d]
        g = G[np.argmin(np.sum((G - v) ** 2, axis=1))]
        worst_grid = max(worst_grid, float(np.max(np.abs(project_simplex(v) - g))))
    for t in range(300):
        d = rand_int(rng, 4, 10)
        v = 2.0 * rng.normal(d)
        worst_enum = max(worst_enum, float(np.max(np.abs(project_simplex(v) - _projection_by_support(v)))))
    ok = worst_grid <= 2e-3 and worst_enum <= 1e-12
    return ok, f"grid {worst_grid:.2e} (<= 2e-3), enumeration {worst_enum:.2e} (<= 1e-12)"


def _qp_scale(*arrays):
    return max(1.0, *(float(np.max(np.abs(a), initial=0.0)) for a in arrays))


@prop("qp", "KKT certificates of Optimal solutions")
def p_kkt_certificates(tol=1e-10):
    """Residuals are recomputed here and compared with ``tol`` times the problem scale."""
    rng = RngStream(22)
    bad = total = 0
    for t in range(200):
        m = rand_int(rng, 1, 12)
        sp = random_simplex_qp(rng, m, rank=rand_int(rng, 1, m))
        bp = random_box_qp(rng, m)
        pp = random_polyhedral_qp(rng, rand_int(rng, 1, 5), rand_int(rng, 1, 8))
        s, b, p = solve_simplex_qp(sp, tol=tol), solve_box_qp(bp, tol=tol), solve_polyhedral_qp(pp, tol=tol)
        checks = [
            (s, simplex_kkt_residual(sp.H, sp.q, s.y), _qp_scale(sp.H, sp.q)),
            (b, box_kkt_residual(bp.H, bp.q, bp.lo, bp.hi, b.y), _qp_scale(bp.H, bp.q)),
            (p, polyhedral_kkt(pp, p.y, p.multipliers)[0], _qp_scale(pp.H, pp.q, pp.A, pp.b)),
        ]
        for sol, res, scale in checks:
            if sol.status is QPStatus.OPTIMAL:
                total += 1
                bad += int(res > tol * scale)
    return bad == 0 and total == 600, f"{bad} of {total} Optimal certificates failed"


@prop("qp", "vertex domination")
def p_vertex_domination():
    rng = RngStream(23)
    worst = -np.inf
    for _ in range(300):
        m = rand_int(rng, 1, 15)
        p = random_simplex_qp(rng, m, rank=rand_int(rng, 1, m))
        obj = solve_simplex_qp(p).objective
        verts = 0.5 * np.diag(p.H) + p.q
        worst = max(worst, obj - float(verts.min()))
    return _result(worst, 1e-10, "max objective - best vertex")


def _polyhedral_by_enumeration(p: PolyhedralQP):
    d, r = p.q.size, p.A.shape[0]
    best = np.inf
    for size in range(0, min(d, r) + 1):
        for S in itertools.combinations(range(r), size):
            S = list(S)
            AS = p.A[S]
            K = np.zeros((d + size, d + size))
            K[:d, :d] = p.H
            K[:d, d:] = AS.T
            K[d:, :d] = AS
            rhs = np.concatenate([-p.q, p.b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            y = sol[:d]
            if np.max(p.A @ y - p.b, initial=0.0) <= 1e-9:
                best = min(best, p.objective(y))
    return best


@prop("qp", "polyhedral active-set vs enumeration")
def p_polyhedral_enumeration():
    rng = RngStream(24)
    worst = 0.0
    for _ in range(200):
        p = random_polyhedral_qp(rng, rand_int(rng, 1, 3), rand_int(rng, 1, 4))
        sol = solve_polyhedral_qp(p)
        worst = max(worst, abs(sol.objective - _polyhedral_by_enumeration(p)))
    return _result(worst, 1e-8, "worst objective gap")


@prop("qp", "monotone objective histories")
def p_monotone_history():
    rng = RngStream(25)
    worst = 0.0
    for _ in range(100):
        m = rand_int(rng, 2, 12)
        p = random_simplex_qp(rng, m)
        b = random_box_qp(rng, m)
        pp = random_polyhedral_qp(rng, rand_int(rng, 1, 5), rand_int(rng, 1, 8))
        y0 = rng.uniform(m)
        hists = [solve_simplex_qp(p, y0=y0).history,
                 solve_simplex_qp(p, y0=y0, method="apg", max_iter=3000).history,
                 solve_box_qp(b).history,
                 solve_box_qp(b, method="apg", max_iter=3000).history,
                 solve_polyhedral_qp(pp).history]
        for h in hists:
            h = np.asarray(h)
            if h.size > 1:
                worst = max(worst, float(np.max(np.diff(h) / np.maximum(1.0, np.abs(h[:-1])))))
    return _result(worst, 1e-12, "largest relative increase")


# ---------------------------------------------------------------------------
# oracles


def kink_cases(count=50, seed=31):
    rng = RngStream(seed)
    return [random_kink(rng) for _ in range(count)]


def composite_cases(count=100, seed=32):
    rng = RngStream(seed)
    return [random_composite(rng) for _ in range(count)]


@prop("oracles", "objective sandwich at kinks")
def p_sandwich(cases=None):
    worst = 0.0
    for kc in cases or kink_cases():
        pieces = kc.pieces()
        x = kc.xbar
        fx = kc.value(x)
        vstar = min_norm_subgradient_bruteforce(pieces, x, 1e-12)
        for eps in (1.0, 0.1, 0.01):
            rd = direction_max_of_smooth(pieces, x, eps)
            lower = fx - 0.5 * eps * float(vstar @ vstar)
            worst = max(worst, lower - rd.f_value, rd.f_value - fx)
    return _result(worst, 1e-8, "worst violation")


@prop("oracles", "gradient norm bound at kinks")
def p_norm_bound(cases=None):
    worst = -np.inf
    for kc in cases or kink_cases():
        pieces = kc.pieces()
        vstar = min_norm_subgradient_bruteforce(pieces, kc.xbar, 1e-12)
        for eps in (1.0, 0.1, 0.01):
            g = direction_max_of_smooth(pieces, kc.xbar, eps).g
            worst = max(worst, np.linalg.norm(g) - np.linalg.norm(vstar))
    return _result(worst, 1e-8, "max ||g|| - ||v*||")


def min_norm_limit_errors(cases=None, jmax=30):
    """For each case, the smallest ``||g(x, 2^-j) - v*||`` over ``j <= jmax``."""
    out = []
    for kc in cases or kink_cases():
        pieces = kc.pieces()
        vstar = min_norm_subgradient_bruteforce(pieces, kc.xbar, 1e-12)
        best = np.inf
        y0 = None
        for j in range(jmax + 1):
            rd = direction_max_of_smooth(pieces, kc.xbar, 2.0 ** (-j), y0=y0)
            y0 = rd.y
            best = min(best, float(np.linalg.norm(rd.g - vstar)))
            if best <= 1e-6:
                break
        out.append(best)
    return out


@prop("oracles", "min-norm limit as eps -> 0")
def p_min_norm_limit(cases=None):
    return _result(max(min_norm_limit_errors(cases)), 1e-6, "worst best-over-j error")


@prop("oracles", "prox-linear equivalence")
def p_prox_linear(cases=None):
    worst = 0.0
    for cc in cases or composite_cases():
        for eps in (10.0, 1.0, 0.1, 0.01):
            g = direction_composite(cc.problem, cc.x, eps).g
            z = prox_linear_step(cc.problem, cc.x, eps)
            worst = max(worst, float(np.linalg.norm(cc.x - eps * g - z)))
    return _result(worst, 1e-8)


@prop("oracles", "uniform descent for eps <= 1/(2 L beta)")
def p_uniform_descent(cases=None):
    worst = -np.inf
    checked = 0
    for cc in cases or composite_cases():
        if cc.L * cc.beta == 0.0:
            continue
        eps_max = 1.0 / (2.0 * cc.L * cc.beta)
        for eps in (eps_max, 0.5 * eps_max, 0.1 * eps_max):
            g = direction_composite(cc.problem, cc.x, eps).g
            lhs = cc.problem.value(cc.x - eps * g)
            rhs = cc.problem.value(cc.x) - eps * float(g @ g)
            worst = max(worst, lhs - rhs)
            checked += 1
    ok, msg = _result(worst, 1e-10, "worst violation")
    return ok, f"{msg} over {checked} checks"


@prop("oracles", "composite descent with coefficient 1 - L beta eps / 2")
def p_uniform_descent_weak(cases=None):
    """``f(x - eps g) <= f(x) - eps (1 - L beta eps / 2) ||g||^2``, the bound that
    follows from the prox-linear model; at ``eps = 1/(2 L beta)`` the
    coefficient is 3/4.  Checked alongside the unit-coefficient form above,
    which already fails for ``f(x) = x^2 / 2`` at ``eps = 1/2``.
    """
    worst = -np.inf
    for cc in cases or composite_cases():
        if cc.L * cc.beta == 0.0:
            continue
        eps_max = 1.0 / (2.0 * cc.L * cc.beta)
        for eps in (eps_max, 0.5 * eps_max, 0.1 * eps_max):
            g = direction_composite(cc.problem, cc.x, eps).g
            coef = 1.0 - 0.5 * cc.L * cc.beta * eps
            lhs = cc.problem.value(cc.x - eps * g)
            worst = max(worst, lhs - (cc.problem.value(cc.x) - eps * coef * float(g @ g)))
    return _result(worst, 1e-10, "worst violation")


@prop("oracles", "single-valued direction from two QP starts")
def p_single_valued():
    rng = RngStream(33)
    worst = 0.0
    for kc in kink_cases(30, seed=34):
        pieces = kc.pieces()
        x = kc.xbar + 0.1 * rng.normal(kc.xbar.size)
        for eps in (1.0, 0.1, 0.01):
            y1 = np.zeros(kc.m)
            y1[0] = 1.0
            y2 = rng.uniform(kc.m) + 1e-3
            g1 = direction_max_of_smooth(pieces, x, eps, y0=y1).g
            g2 = direction_max_of_smooth(pieces, x, eps, y0=y2 / y2.sum()).g
            worst = max(worst, float(np.linalg.norm(g1 - g2)))
    return _result(worst, 1e-8)


@prop("oracles", "min/max duality")
def p_min_max_duality():
    rng = RngStream(35)
    ok = True
    for kc in kink_cases(20, seed=36):
        pieces = kc.pieces()
        x = kc.xbar + rng.normal(kc.xbar.size)
        neg = [_negate_piece(p) for p in pieces]
        for eps in (1.0, 0.01):
            a = direction_min_of_smooth(pieces, x, eps)
            b = direction_max_of_smooth(neg, x, eps)
            ok &= bool(np.array_equal(a.g, -b.g) and np.array_equal(a.y, b.y))
    return ok, "exact" if ok else "mismatch"


# ---------------------------------------------------------------------------
# solvers


def _solver_runs():
    inst = gen_max_quad(10, 6, RngStream(41))
    x0 = RngStream(41).spawn(1).normal(10)
    cfg = SolverConfig(f_target=1e-10, max_calls=20000, record_debug=True)
    return inst, [run_algorithm1(oracle2_view(inst), x0, cfg),
                  run_algorithm2(oracle2_view(inst), x0, cfg)]


def armijo_violations(inst, trace, alpha):
    worst = -np.inf
    for r in trace.records[1:]:
        d = r.debug
        g = d["g"]
        lhs = inst.value(d["x_prev"] - r.eta * g)
        worst = max(worst, lhs - (d["f_prev"] - alpha * r.eta * float(g @ g)))
    return worst


@prop("solvers", "Armijo certificate re-checked post hoc")
def p_armijo():
    inst, runs = _solver_runs()
    worst = max(armijo_violations(inst, tr, 1e-4) for tr in runs)
    return _result(worst, 1e-12, "worst violation")


@prop("solvers", "f records non-increasing")
def p_monotone_f():
    _, runs = _solver_runs()
    worst = max(float(np.max(np.diff([r.f for r in tr.records]))) for tr in runs)
    return worst <= 0.0, f"largest increase {worst:.3e}"


def counter_mismatch(trace) -> int:
    """Difference between recorded and implied oracle counts (0 when consistent).

    Needs a trace from a run that ended right after a record (e.g. target reached).
    """
    o2 = sum(r.inner_iters + int(r.debug["aux_solve"]) for r in trace.records[1:])
    o1 = 1 + sum(r.debug["i_k"] * (r.debug["i_k"] + 1) // 2 + r.debug["trials"]
                 for r in trace.records[1:])
    trials = 1 + sum(r.debug["j_acc"] + 1 for r in trace.records[1:])
    return abs(o2 - trace.oracle2_calls) + abs(o1 - trace.oracle1_calls) + int(trace.oracle1_calls < trials)


@prop("solvers", "oracle counter integrity")
def p_counters():
    _, runs = _solver_runs()
    bad = sum(counter_mismatch(tr) for tr in runs)
    return bad == 0, f"mismatch {bad}"


@prop("solvers", "deterministic traces")
def p_solver_determinism():
    _, a = _solver_runs()
    _, b = _solver_runs()
    ok = all([(r.k, r.f, r.gnorm, r.eps_ki, r.eta, r.inner_iters, r.oracle1_calls, r.oracle2_calls)
              for r in ta.records] ==
             [(r.k, r.f, r.gnorm, r.eps_ki, r.eta, r.inner_iters, r.oracle1_calls, r.oracle2_calls)
              for r in tb.records] and np.array_equal(ta.final_x, tb.final_x)
             for ta, tb in zip(a, b))
    return ok, "identical" if ok else "traces differ"


def grid_rule_violations(trace) -> int:
    bad = 0
    for r in trace.records[1:]:
        d = r.debug
        grid = d["grid"]
        dyadic = [d["eps_k0"] * 2.0 ** (-j) for j in range(d["i_k"] + 1)]
        if r.eta not in dyadic or r.eta not in grid:
            bad += 1
            continue
        if any(v < grid[r.eta] for v in grid.values()):
            bad += 1
    return bad


@prop("solvers", "adaptive step is a grid argmin")
def p_grid_rule():
    _, runs = _solver_runs()
    bad = grid_rule_violations(runs[1])
    return bad == 0, f"{bad} records violate the rule"


# ---------------------------------------------------------------------------
# problems


@prop("problems", "instances reproducible from seed")
def p_instance_determinism():
    make = [lambda: gen_max_quad(6, 4, RngStream(51)), lambda: gen_nesterov_cr(4),
            lambda: gen_min_quad(4, 5, 3, RngStream(51)), lambda: gen_marginal_qp(4, 3, RngStream(51))]
    ok = all(to_json(f()) == to_json(f()) for f in make)
    return ok, "identical" if ok else "instances differ"


@prop("problems", "max-quad: 0 is stationary")
def p_maxquad_stationary():
    worst = 0.0
    for seed in range(50):
        rng = RngStream(1000 + seed)
        inst = gen_max_quad(rand_int(rng, 2, 8), rand_int(rng, 2, 10), rng)
        v = min_norm_subgradient_bruteforce(inst.smooth_pieces(), np.zeros(inst.n), 1e-12)
        worst = max(worst, float(np.linalg.norm(v)))
    return _result(worst, 1e-8, "worst ||v*(0)||")


@prop("problems", "nesterov direction matches gradient off kinks")
def p_nesterov_smooth():
    rng = RngStream(52)
    worst = 0.0
    for _ in range(30):
        n = rand_int(rng, 2, 6)
        inst = gen_nesterov_cr(n)
        x = rng.normal(n)
        vals, _ = inst.psi(x)
        if np.min(np.abs(vals)) < 1e-2:
            continue
        o = oracle2_view(inst, warm_start=False)
        grad = inst.subgradient(x)[1]  # unique gradient off the kinks
        for eps in (1e-6, 1e-8):
            worst = max(worst, float(np.linalg.norm(o.eval(x, eps).g - grad)))
    return _result(worst, 1e-8)


@prop("problems", "min-quad: f(xstar) = 0")
def p_minquad_zero():
    worst = 0.0
    for seed in range(10):
        inst = gen_min_quad(6, 8, 4, RngStream(1100 + seed))
        worst = max(worst, abs(inst.value(inst.xstar)))
    return _result(worst, 1e-18, "worst |f(xstar)|")


@prop("problems", "marginal-QP: local Lipschitz quotients stabilize")
def p_marginal_lipschitz():
    rng = RngStream(53)
    bad = 0
    for seed in range(5):
        inst = gen_marginal_qp(6, 4, RngStream(1200 + seed))
        x = rng.normal(6)
        f0 = inst.value(x)
        for _ in range(4):
            v = rng.normal(6)
            v /= np.linalg.norm(v)
            q = [abs(inst.value(x + h * v) - f0) / h for h in (1e-3, 1e-4)]
            # C = the quotient itself; demand agreement within a factor 2
            if not (q[0] <= 2.0 * q[1] + 1e-9 and q[1] <= 2.0 * q[0] + 1e-9):
                bad += 1
    return bad == 0, f"{bad} directions unstable"


# ---------------------------------------------------------------------------
# bench


@prop("bench", "rerun gives byte-identical CSVs")
def p_bench_determinism():
    from .experiment import ExperimentSpec, run_experiment

    spec = ExperimentSpec("maxquad", n=8, m=4, seeds=[1, 2],
                          solvers=["srdescent", "srdescent-adapt", "polyak", "gs"],
                          max_calls=3000, max_time_s=1e9, target_gap=1e-8)
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        run_experiment(spec, a)
        run_experiment(spec, b)
        fa = sorted(p.name for p in Path(a).iterdir())
        ok = fa == sorted(p.name for p in Path(b).iterdir()) and all(
            (Path(a) / f).read_bytes() == (Path(b) / f).read_bytes() for f in fa)
    return ok, f"{len(fa)} files compared"


@prop("bench", "summary aggregates recomputable from traces")
def p_bench_aggregates():
    from .experiment import ExperimentSpec, aggregate_from_traces, aggregate_summary, read_csv, run_experiment

    spec = ExperimentSpec("nesterov", n=3, seeds=[1, 2, 3], solvers=["srdescent", "polyak"],
                          max_calls=2000, max_time_s=1e9, target_gap=1e-5)
    with tempfile.TemporaryDirectory() as out:
        run_experiment(spec, out)
        a = aggregate_summary(read_csv(Path(out) / "summary.csv"))
        b = aggregate_from_traces(out)
    worst = 0.0
    for s in a:
        for key, va in a[s].items():
            vb = b[s][key]
            worst = max(worst, abs(va - vb) / max(1.0, abs(va)))
    return _result(worst, 1e-12, "worst relative difference")


# ---------------------------------------------------------------------------


def run_suites(modules=None, stream=None) -> bool:
    """Run registered properties, printing one PASS/FAIL line each."""
    modules = list(PROPERTIES) if not modules else list(modules)
    all_ok = True
    t_all = time.perf_counter()
    for mod in modules:
        if mod not in PROPERTIES:
            raise KeyError(f"no property suite {mod!r}")
        for name, fn in PROPERTIES[mod]:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crash is a failure, keep going
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            all_ok &= ok
            line = f"{'PASS' if ok else 'FAIL'}  {mod:8s} {name}: {detail} [{time.perf_counter() - t0:.2f}s]"
            print(line, file=stream, flush=True)
    print(f"total {time.perf_counter() - t_all:.1f}s, {'all passed' if all_ok else 'FAILURES'}",
          file=stream)
    return all_ok

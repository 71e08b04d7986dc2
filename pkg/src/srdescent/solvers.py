"""Descent methods driven by descent-oriented subgradients, plus baselines.

``run_algorithm1`` is the basic method (SRDescent when fed a regularized
direction oracle) and ``run_algorithm2`` the adaptive one (SRDescent-adapt).
``run_polyak`` and ``run_gradient_sampling`` use plain value/subgradient
access.  Every run returns a :class:`RunTrace`.

Oracle accounting: ``oracle1_calls`` counts function-value (or
value+subgradient) evaluations, ``oracle2_calls`` counts direction solves.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import RngStream, as_vector
from .oracles import goldstein_sampled_direction


class Status(str, enum.Enum):
    APPROX_STATIONARY = "ApproxStationary"
    BUDGET = "Budget"
    INNER_LOOP_STALL = "InnerLoopStall"
    LINE_SEARCH_FAIL = "LineSearchFail"
    TARGET_REACHED = "TargetReached"


@dataclass
class SolverConfig:
    """Parameters of the descent methods.

    ``f_target`` (optional) stops a run as soon as ``f <= f_target``;
    ``max_calls`` caps oracle1 + oracle2 calls.  ``record_debug`` keeps
    iterates, directions and line-search grids in each record.
    """

    eps00: float = 5.0
    nu0: float = 1e-2
    theta_eps: float = 0.9
    theta_nu: float = 0.5
    alpha: float = 1e-4
    eps_tol: float = 0.0
    nu_tol: float = 0.0
    max_outer: int = 10**6
    max_inner: int = 60
    max_time_s: float = np.inf
    max_calls: int | None = None
    f_target: float | None = None
    a_seq: Callable[[int], float] = field(default=lambda t: 1.0 / t, repr=False)
    record_debug: bool = False

    def __post_init__(self):
        if not self.eps00 > 0:
            raise ValueError("eps00 must be positive")
        if not self.nu0 > 0:
            raise ValueError("nu0 must be positive")
        for name in ("theta_eps", "theta_nu", "alpha"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.eps_tol < 0 or self.nu_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class IterationRecord:
    k: int
    f: float
    gnorm: float
    eps_ki: float
    eta: float
    inner_iters: int
    oracle1_calls: int
    oracle2_calls: int
    wall_time_s: float
    debug: dict | None = None


@dataclass
class RunTrace:
    records: list
    final_x: np.ndarray
    status: Status
    final_f: float
    oracle1_calls: int = 0
    oracle2_calls: int = 0
    wall_time_s: float = 0.0
    raw_f: list | None = None

    @property
    def total_calls(self):
        return self.oracle1_calls + self.oracle2_calls


@dataclass
class Oracle1:
    """Value and one subgradient: ``eval(x) -> (f, v)``."""

    eval: Callable


@dataclass
class Oracle2:
    """Regularized direction ``eval(x, eps) -> RegularizedDirection`` and ``value_only(x)``."""

    eval: Callable
    value_only: Callable


class _Budget:
    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.o1 = 0
        self.o2 = 0

    def elapsed(self):
        return time.perf_counter() - self.t0

    def exhausted(self):
        cfg = self.cfg
        if cfg.max_calls is not None and self.o1 + self.o2 >= cfg.max_calls:
            return True
        return self.elapsed() > cfg.max_time_s


def _descent_method(o: Oracle2, x0, cfg: SolverConfig, adaptive: bool) -> RunTrace:
    x = as_vector(x0, "x0").copy()
    bud = _Budget(cfg)
    fx = float(o.value_only(x))
    bud.o1 += 1
    records = [IterationRecord(0, fx, np.nan, cfg.eps00, 0.0, 0, bud.o1, bud.o2, bud.elapsed())]
    eps_k0 = cfg.eps00
    nu = cfg.nu0
    t = 0
    status = Status.BUDGET

    def finish(st):
        return RunTrace(records, x, st, fx, bud.o1, bud.o2, bud.elapsed())

    if cfg.f_target is not None and fx <= cfg.f_target:
        return finish(Status.TARGET_REACHED)

    for k in range(cfg.max_outer):
        accepted = False
        for i in range(cfg.max_inner):
            if bud.exhausted():
                return finish(Status.BUDGET)
            eps_ki = eps_k0 * 2.0 ** (-i)
            rd = o.eval(x, eps_ki)
            bud.o2 += 1
            g = rd.g
            gg = float(g @ g)
            gnorm = np.sqrt(gg)
            if eps_ki <= cfg.eps_tol and gnorm <= cfg.nu_tol:
                return finish(Status.APPROX_STATIONARY)
            trials = {}
            for j in range(i + 1):
                eta = eps_k0 * 2.0 ** (-j)
                f_trial = float(o.value_only(x - eta * g))
                bud.o1 += 1
                trials[j] = f_trial
                if f_trial <= fx - cfg.alpha * eta * gg:
                    accepted = True
                    break
            if accepted:
                i_k = i
                j_acc = j
                break
        if not accepted:
            return finish(Status.INNER_LOOP_STALL)

        if adaptive:
            # argmin of f(x - eta g) over the dyadic grid eps_k0 2^-j_acc .. eps_k0 2^-i_k
            for jj in range(j_acc + 1, i_k + 1):
                trials[jj] = float(o.value_only(x - eps_k0 * 2.0 ** (-jj) * g))
                bud.o1 += 1
            grid = range(j_acc, i_k + 1)
            # strict '<' keeps the largest eta among ties
            j_best = j_acc
            for jj in grid:
                if trials[jj] < trials[j_best]:
                    j_best = jj
        else:
            j_best = j_acc
        eta_k = eps_k0 * 2.0 ** (-j_best)
        x_prev = x
        x_new = x - eta_k * g
        f_new = trials[j_best]

        aux = False
        if adaptive and gnorm <= nu:
            aux = True
            t += 1
            eps_aux = cfg.a_seq(t) ** 0.25
            rd_aux = o.eval(x_prev, eps_aux)
            bud.o2 += 1
            aux_norm = float(np.linalg.norm(rd_aux.g))
            if eps_aux <= cfg.eps_tol and aux_norm <= cfg.nu_tol:
                # the certificate refers to x^k, which is what gets returned
                return finish(Status.APPROX_STATIONARY)
            nu = cfg.theta_nu * nu
            num = eps_aux * aux_norm
            den = np.sqrt(eps_ki * gnorm)
            if den > 0:
                ratio_ok = num / den <= 1.0 / eps_k0
            else:
                ratio_ok = num == 0.0
            eps_next = eps_k0 if ratio_ok else cfg.theta_eps * eps_k0
        elif not adaptive and gnorm <= nu:
            nu = cfg.theta_nu * nu
            eps_next = cfg.theta_eps * eps_k0
        else:
            eps_next = eps_k0

        x, fx = x_new, f_new
        debug = None
        if cfg.record_debug:
            debug = {"x_prev": x_prev, "g": g, "eps_k0": eps_k0, "i_k": i_k,
                     "j_acc": j_acc, "grid": {eps_k0 * 2.0 ** (-jj): trials[jj] for jj in trials
                                              if jj >= j_acc},
                     "f_prev": records[-1].f, "aux_solve": aux, "trials": len(trials)}
        records.append(IterationRecord(k + 1, fx, gnorm, eps_ki, eta_k, i_k + 1,
                                       bud.o1, bud.o2, bud.elapsed(), debug))
        eps_k0 = eps_next
        if cfg.f_target is not None and fx <= cfg.f_target:
            return finish(Status.TARGET_REACHED)
    return finish(status)


def run_algorithm1(o: Oracle2, x0, cfg: SolverConfig) -> RunTrace:
    """Basic descent-oriented subgradient method (SRDescent)."""
    return _descent_method(o, x0, cfg, adaptive=False)


def run_algorithm2(o: Oracle2, x0, cfg: SolverConfig) -> RunTrace:
    """Adaptive variant (SRDescent-adapt): grid-argmin steps and a ratio test on eps."""
    return _descent_method(o, x0, cfg, adaptive=True)


def run_polyak(o: Oracle1, fstar: float, x0, max_calls: int,
               f_target: float | None = None, max_time_s: float = np.inf) -> RunTrace:
    """Subgradient method with Polyak steps; records store the best value so far."""
    x = as_vector(x0, "x0").copy()
    t0 = time.perf_counter()
    records, raw = [], []
    best_f, best_x = np.inf, x.copy()
    status = Status.BUDGET
    calls = 0
    while calls < max_calls:
        fx, v = o.eval(x)
        calls += 1
        fx = float(fx)
        if calls == 1 and fx < fstar:
            raise ValueError(f"fstar = {fstar!r} exceeds f(x0) = {fx!r}")
        v = np.asarray(v, dtype=float)
        raw.append(fx)
        if fx < best_f:
            best_f, best_x = fx, x.copy()
        vv = float(v @ v)
        records.append(IterationRecord(calls - 1, best_f, np.sqrt(vv), np.nan, np.nan, 0,
                                       calls, 0, time.perf_counter() - t0))
        if f_target is not None and best_f <= f_target:
            status = Status.TARGET_REACHED
            break
        if vv == 0.0:
            status = Status.APPROX_STATIONARY
            break
        if time.perf_counter() - t0 > max_time_s:
            break
        step = (fx - fstar) / vv
        records[-1].eta = step
        x = x - step * v
    return RunTrace(records, best_x, status, best_f, calls, 0, time.perf_counter() - t0, raw)


def run_gradient_sampling(o: Oracle1, x0, k_samples: int, cfg: SolverConfig,
                          rng: RngStream, max_backtracks: int = 50,
                          radius0: float | None = None) -> RunTrace:
    """Simplified gradient sampling with Armijo backtracking.

    The sampling radius starts at ``radius0`` (default ``cfg.eps00``) and
    shrinks by ``theta_eps`` together with the stationarity target whenever
    the sampled direction is shorter than that target.
    """
    x = as_vector(x0, "x0").copy()
    bud = _Budget(cfg)
    fx = float(o.eval(x)[0])
    bud.o1 += 1
    records = [IterationRecord(0, fx, np.nan, np.nan, 0.0, 0, bud.o1, 0, bud.elapsed())]
    radius = cfg.eps00 if radius0 is None else radius0
    nu = cfg.nu0

    def finish(st):
        return RunTrace(records, x, st, fx, bud.o1, 0, bud.elapsed())

    if cfg.f_target is not None and fx <= cfg.f_target:
        return finish(Status.TARGET_REACHED)
    for k in range(cfg.max_outer):
        if bud.exhausted():
            return finish(Status.BUDGET)
        d = goldstein_sampled_direction(o.eval, x, radius, k_samples, rng)
        bud.o1 += k_samples + 1
        dd = float(d @ d)
        dnorm = np.sqrt(dd)
        if radius <= cfg.eps_tol and dnorm <= cfg.nu_tol:
            return finish(Status.APPROX_STATIONARY)
        if dnorm <= nu:
            nu *= cfg.theta_nu
            radius *= cfg.theta_eps
            if dnorm == 0.0:
                continue
        step = 1.0
        for _ in range(max_backtracks):
            f_trial = float(o.eval(x - step * d)[0])
            bud.o1 += 1
            if f_trial <= fx - cfg.alpha * step * dd:
                break
            step *= 0.5
        else:
            return finish(Status.LINE_SEARCH_FAIL)
        x = x - step * d
        fx = f_trial
        records.append(IterationRecord(k + 1, fx, dnorm, radius, step, 1, bud.o1, 0,
                                       bud.elapsed()))
        if cfg.f_target is not None and fx <= cfg.f_target:
            return finish(Status.TARGET_REACHED)
    return finish(Status.BUDGET)

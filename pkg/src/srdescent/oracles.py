"""Descent-oriented subgradients by subgradient regularization.

For a marginal function ``f(x) = max_{y in Y} phi(x, y)`` with
``phi(x, y) = g(x) + y^T psi(x) - h(y)`` the regularized inner problem

    max_{y in Y}  phi(x, y) - eps/2 * ||grad_x phi(x, y)||^2

is a convex QP over ``Y`` (a simplex or a box).  Its solution ``y_eps`` gives
the direction ``grad_x phi(x, y_eps)``, which is unique even when ``y_eps`` is
not.  Finite max/min of smooth functions, polyhedral compositions ``h(c(x))``
and the parametric-QP marginal with moving feasible set are all reduced to
this computation here.

The module also carries independent reference oracles used by the tests:
an enumeration-based minimal-norm subgradient, the prox-linear step solved
as an epigraph QP, and a sampled Goldstein direction.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import RngStream, as_vector
from .qp import (
    BoxQP,
    PolyhedralQP,
    QPSolution,
    QPStatus,
    SimplexQP,
    solve_box_qp,
    solve_polyhedral_qp,
    solve_simplex_qp,
)


class OracleError(RuntimeError):
    """An inner QP failed; ``diagnostics`` holds the solver output."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class InfeasibleInner(OracleError):
    pass


class DegeneracyWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# problem structures


SmoothPiece = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
"""A smooth function ``x -> (value, gradient)``."""


@dataclass(frozen=True)
class Simplex:
    m: int


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def m(self):
        return len(self.lo)


@dataclass
class AffineMarginalStructure:
    """``f(x) = g(x) + max_{y in domain} y^T psi(x) - h(y)``.

    ``psi`` maps ``x`` to ``(values, jac_T)`` with ``jac_T`` of shape ``(n, m)``
    (column ``i`` is the gradient of ``psi_i``).  ``g_term`` is an optional
    smooth piece; ``h_quad = (P, r)`` encodes ``h(y) = 1/2 y^T P y + r^T y``.
    """

    psi: Callable
    domain: Simplex | Box
    g_term: Callable | None = None
    h_quad: tuple | None = None

    def _g(self, x):
        if self.g_term is None:
            return 0.0, np.zeros(x.size)
        val, grad = self.g_term(x)
        return float(val), np.asarray(grad, dtype=float)

    def value(self, x) -> float:
        x = as_vector(x, "x")
        gval, _ = self._g(x)
        vals, _ = self.psi(x)
        vals = np.asarray(vals, dtype=float)
        if self.h_quad is None:
            if isinstance(self.domain, Simplex):
                return gval + float(np.max(vals))
            lo, hi = self.domain.lo, self.domain.hi
            return gval + float(np.sum(np.maximum(lo * vals, hi * vals)))
        P, r = self.h_quad
        sol = _solve_domain(self.domain, P, np.asarray(r) - vals)
        return gval - sol.objective


def _solve_domain(domain, H, q, y0=None) -> QPSolution:
    if isinstance(domain, Simplex):
        return solve_simplex_qp(SimplexQP(H, q), y0=y0)
    return solve_box_qp(BoxQP(H, q, domain.lo, domain.hi), y0=y0)


@dataclass
class RegularizedDirection:
    """Outcome of one regularized-direction solve.

    For max-type functions ``reg_value = f_value - eps/2 ||g||^2``; for
    min-type functions (handled by negation) both values refer to ``f``
    itself, so ``reg_value = f_value + eps/2 ||g||^2``.
    """

    g: np.ndarray
    y: np.ndarray
    reg_value: float
    f_value: float
    qp: QPSolution | None
    eps: float
    diagnostics: dict = field(default_factory=dict)

    def negated(self) -> "RegularizedDirection":
        return RegularizedDirection(-self.g, self.y, -self.reg_value, -self.f_value,
                                    self.qp, self.eps, dict(self.diagnostics, negated=True))


def regularized_direction_affine(s: AffineMarginalStructure, x, eps: float,
                                 y0=None) -> RegularizedDirection:
    """Solve the regularized inner problem and return ``grad_x phi(x, y_eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = as_vector(x, "x")
    gval, ggrad = s._g(x)
    vals, J = s.psi(x)
    vals = np.asarray(vals, dtype=float)
    J = np.asarray(J, dtype=float).reshape(x.size, vals.size)
    Js = np.sqrt(eps) * J
    H = Js.T @ Js
    q = -vals + eps * (J.T @ ggrad)
    if s.h_quad is not None:
        P, r = s.h_quad
        H = H + np.asarray(P, dtype=float)
        q = q + np.asarray(r, dtype=float)
    sol = _solve_domain(s.domain, H, q, y0=y0)
    if sol.status is not QPStatus.OPTIMAL:
        raise OracleError(f"regularized QP ended with status {sol.status.value}", sol)
    y = sol.y
    g = ggrad + J @ y
    f_value = gval + float(y @ vals)
    if s.h_quad is not None:
        P, r = s.h_quad
        f_value -= float(0.5 * y @ np.asarray(P) @ y + np.asarray(r) @ y)
    reg_value = f_value - 0.5 * eps * float(g @ g)
    return RegularizedDirection(g, y, reg_value, f_value, sol, eps)


def _stack_pieces(pieces: Sequence[SmoothPiece], x):
    vals, grads = zip(*(p(x) for p in pieces))
    return np.asarray(vals, dtype=float), np.column_stack([np.asarray(g, dtype=float) for g in grads])


def max_structure(pieces: Sequence[SmoothPiece]) -> AffineMarginalStructure:
    """Simplex representation of ``max_i f_i``."""
    if not pieces:
        raise ValueError("need at least one piece")
    return AffineMarginalStructure(lambda x: _stack_pieces(pieces, x), Simplex(len(pieces)))


def direction_max_of_smooth(pieces: Sequence[SmoothPiece], x, eps: float, y0=None):
    return regularized_direction_affine(max_structure(pieces), x, eps, y0=y0)


def direction_min_of_smooth(pieces: Sequence[SmoothPiece], x, eps: float, y0=None):
    """Direction for ``min_i f_i`` computed as minus the direction of ``max_i (-f_i)``."""
    neg = [_negate_piece(p) for p in pieces]
    return direction_max_of_smooth(neg, x, eps, y0=y0).negated()


def _negate_piece(p):
    def neg(x):
        v, gr = p(x)
        return -v, -np.asarray(gr, dtype=float)
    return neg


# ---------------------------------------------------------------------------
# polyhedral composites h(c(x)) with h(u) = max_i a_i^T u + b_i


@dataclass
class CompositeProblem:
    """``f(x) = max_i (a_i^T c(x) + b_i)`` for a smooth map ``c``.

    ``c`` maps ``x`` to ``(values, jac_T)`` with ``jac_T`` of shape ``(n, m)``.
    ``a`` has one affine piece per row.
    """

    c: Callable
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.a.shape[0] < 1 or self.a.shape[0] != self.b.size:
            raise ValueError("need at least one affine piece with matching offsets")

    def value(self, x) -> float:
        cx, _ = self.c(as_vector(x, "x"))
        return float(np.max(self.a @ np.asarray(cx) + self.b))

    def pieces(self, x):
        cx, Jc = self.c(x)
        Jc = np.asarray(Jc, dtype=float).reshape(x.size, -1)
        return self.a @ np.asarray(cx) + self.b, Jc @ self.a.T

    def structure(self) -> AffineMarginalStructure:
        return AffineMarginalStructure(self.pieces, Simplex(self.a.shape[0]))


def direction_composite(p: CompositeProblem, x, eps: float, y0=None) -> RegularizedDirection:
    """``g = grad c(x) sum_i y_i a_i`` with ``y`` from the regularized simplex QP."""
    rd = regularized_direction_affine(p.structure(), x, eps, y0=y0)
    rd.diagnostics["dual_u"] = p.a.T @ rd.y
    return rd


def prox_linear_step(p: CompositeProblem, x, eps: float, return_solution: bool = False):
    """Prox-linear update ``argmin_z h(c(x) + J^T (z - x)) + ||z - x||^2 / (2 eps)``.

    Solved in epigraph form over ``(w, t)`` with ``w = z - x``::

        min 1/2 ||w||^2 / eps + t   s.t.  a_i^T (c(x) + J^T w) + b_i <= t.

    The ``t`` direction is pinned by the working set (the multipliers sum to
    one), so no Tikhonov term is needed.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = as_vector(x, "x")
    n = x.size
    vals, G = p.pieces(x)  # G columns: J a_i
    npieces = vals.size
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = np.eye(n) / eps
    q = np.zeros(n + 1)
    q[n] = 1.0
    A = np.hstack([G.T, -np.ones((npieces, 1))])
    b = -vals
    start = np.zeros(n + 1)
    start[n] = float(np.max(vals))
    sol = solve_polyhedral_qp(PolyhedralQP(H, q, A, b), y0=start, regularization=0.0)
    if sol.status is not QPStatus.OPTIMAL:
        raise OracleError(f"prox-linear QP ended with status {sol.status.value}", sol)
    z = x + sol.y[:n]
    return (z, sol) if return_solution else z


# ---------------------------------------------------------------------------
# reference oracles


def _min_norm_enumerate(G):
    """Minimal-norm point of conv(columns of G) by enumerating supports."""
    n, k = G.shape
    best, best_v = np.inf, None
    for size in range(1, k + 1):
        for S in itertools.combinations(range(k), size):
            S = list(S)
            GS = G[:, S]
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = GS.T @ GS
            K[:size, size] = 1.0
            K[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            w = sol[:size]
            if np.any(w < -1e-12) or np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.abs(K).max()):
                continue
            w = np.maximum(w, 0.0)
            w /= w.sum()
            v = GS @ w
            nv = float(v @ v)
            if nv < best - 1e-15:
                best, best_v = nv, v
    return best_v


def min_norm_subgradient_bruteforce(pieces: Sequence[SmoothPiece], x,
                                    activity_tol: float = 1e-12,
                                    max_enumerate: int = 12) -> np.ndarray:
    """Minimal-norm element of the convex hull of the active gradients (test oracle).

    Pieces with ``f_i(x) >= max_j f_j(x) - activity_tol`` are active.  The hull
    is searched by enumerating supports when at most ``max_enumerate`` pieces
    are active, otherwise by a simplex QP.
    """
    if activity_tol < 0:
        raise ValueError("activity_tol must be nonnegative")
    x = as_vector(x, "x")
    vals, G = _stack_pieces(pieces, x)
    active = np.flatnonzero(vals >= vals.max() - activity_tol)
    GA = G[:, active]
    if active.size <= max_enumerate:
        return _min_norm_enumerate(GA)
    sol = solve_simplex_qp(SimplexQP(GA.T @ GA, np.zeros(active.size)))
    return GA @ sol.y


def goldstein_sampled_direction(f_oracle, x, eps: float, k: int, rng: RngStream,
                                return_info: bool = False):
    """Minimal-norm convex combination of subgradients at ``x`` and ``k`` ball samples."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = as_vector(x, "x")
    n = x.size
    dirs = rng.normal((k, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = eps * rng.uniform(k) ** (1.0 / n)
    points = np.vstack([x, x + radii[:, None] * dirs])
    V = np.column_stack([np.asarray(f_oracle(pt)[1], dtype=float) for pt in points])
    sol = solve_simplex_qp(SimplexQP(V.T @ V, np.zeros(k + 1)))
    if sol.status is not QPStatus.OPTIMAL:
        raise OracleError("sampled min-norm QP did not converge", sol)
    d = V @ sol.y
    if return_info:
        return d, {"points": points, "V": V, "y": sol.y, "calls": k + 1}
    return d


# ---------------------------------------------------------------------------
# parametric-QP marginal with x-dependent box constraints


@dataclass
class MarginalQPProblem:
    """``f(x) = min_y (c + D x)^T y + 1/2 y^T Q y + quartic_coeff ||x||^4``
    subject to ``b - A x - 1 <= W y <= b - A x``.

    Shapes: ``b, c`` (m,), ``A, D`` (m, n), ``W, Q`` (m, m).
    """

    b: np.ndarray
    c: np.ndarray
    A: np.ndarray
    D: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    quartic_coeff: float = 1.0

    def __post_init__(self):
        for name in ("b", "c", "A", "D", "W", "Q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        m, n = self.A.shape
        if self.D.shape != (m, n) or self.W.shape != (m, m) or self.Q.shape != (m, m):
            raise ValueError("inconsistent MarginalQPProblem shapes")
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.Winv = np.linalg.inv(self.W)
        self.cond_W = float(np.linalg.cond(self.W))
        # quantities in u = W y coordinates
        Hu = self.Winv.T @ self.Q @ self.Winv
        self.Hu = 0.5 * (Hu + Hu.T)
        self.Mt = self.D.T @ self.Winv  # D^T y = Mt u

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def box(self, x):
        hi = self.b - self.A @ x
        return hi - 1.0, hi

    def quartic(self, x):
        nx2 = float(x @ x)
        return self.quartic_coeff * nx2 * nx2, 4.0 * self.quartic_coeff * nx2 * x


def marginal_inner(p: MarginalQPProblem, x, y0=None) -> dict:
    """Solve the inner QP at ``x``; returns y, u, multipliers, value and checks."""
    x = as_vector(x, "x")
    lo, hi = p.box(x)
    if np.any(lo > hi):
        raise InfeasibleInner("inner feasible set is empty")
    qu = p.Winv.T @ (p.c + p.D @ x)
    sol = solve_box_qp(BoxQP(p.Hu, qu, lo, hi), y0=y0)
    if sol.status is QPStatus.INFEASIBLE:
        raise InfeasibleInner("inner QP infeasible", sol)
    if sol.status is not QPStatus.OPTIMAL:
        raise OracleError(f"inner QP ended with status {sol.status.value}", sol)
    u = sol.y
    tol_b = 1e-12 * max(1.0, float(np.max(np.abs(hi))))
    at_lo = u <= lo + tol_b
    at_hi = u >= hi - tol_b
    r = p.Hu @ u + qu
    # min-form Lagrangian with lam_up on W y <= hi and lam_lo on lo <= W y:
    # r + lam_up - lam_lo = 0
    lam_lo = np.where(at_lo, np.maximum(r, 0.0), 0.0)
    lam_up = np.where(at_hi, np.maximum(-r, 0.0), 0.0)
    active = np.flatnonzero(at_lo | at_hi)
    diag = {"active": active, "degenerate": False}
    if active.size:
        sv = np.linalg.svd(p.W[active], compute_uv=False)
        smax = np.linalg.svd(p.W, compute_uv=False)[0]
        if sv[-1] < 1e-8 * smax:
            diag["degenerate"] = True
            warnings.warn("active constraint gradients are nearly dependent", DegeneracyWarning)
            y = p.Winv @ u
            grad_y = p.c + p.D @ x + p.Q @ y
            # least-squares multipliers: W_active^T nu = -grad_y, nu = lam_up - lam_lo
            nu, *_ = np.linalg.lstsq(p.W[active].T, -grad_y, rcond=None)
            lam_up = np.zeros(p.m)
            lam_lo = np.zeros(p.m)
            lam_up[active] = np.maximum(nu, 0.0)
            lam_lo[active] = np.maximum(-nu, 0.0)
    lam_mag = lam_up + lam_lo
    diag["weakly_active"] = int(np.sum(lam_mag[active] <= 1e-8)) if active.size else 0
    qval, qgrad = p.quartic(x)
    value = float(qu @ u + 0.5 * u @ p.Hu @ u) + qval
    return {
        "u": u, "y": p.Winv @ u, "lam_up": lam_up, "lam_lo": lam_lo,
        "value": value, "qp": sol, "quartic_grad": qgrad, "diagnostics": diag,
    }


def lagrangian_gradient(p: MarginalQPProblem, x, u, lam_up, lam_lo, quartic_grad=None):
    """``grad_x L = D^T y + 4||x||^2 x + A^T (lam_up - lam_lo)`` with ``y = W^{-1} u``."""
    if quartic_grad is None:
        quartic_grad = p.quartic(x)[1]
    return p.Mt @ u + quartic_grad + p.A.T @ (lam_up - lam_lo)


def direction_marginal_licq(p: MarginalQPProblem, x, eps: float, y0=None,
                            inner=None) -> RegularizedDirection:
    """Regularized direction for the min-type marginal with moving box.

    The construction runs on ``-f`` (a max-type marginal whose constraints
    are written ``phi_j <= 0`` with multipliers subtracted in the
    Lagrangian) and the result is negated, which gives directly:
    ``w = 4||x||^2 x + A^T (lam_up - lam_lo)`` at the inner multipliers, then
    ``min_u  f-objective(u) + eps/2 ||Mt u + w||^2`` over the box and
    ``g = Mt u_eps + w``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = as_vector(x, "x")
    if inner is None:
        inner = marginal_inner(p, x)
    w = inner["quartic_grad"] + p.A.T @ (inner["lam_up"] - inner["lam_lo"])
    lo, hi = p.box(x)
    qu = p.Winv.T @ (p.c + p.D @ x)
    Ms = np.sqrt(eps) * p.Mt
    H = p.Hu + Ms.T @ Ms
    q = qu + eps * (p.Mt.T @ w)
    sol = solve_box_qp(BoxQP(H, q, lo, hi), y0=inner["u"] if y0 is None else y0)
    if sol.status is not QPStatus.OPTIMAL:
        raise OracleError(f"regularized QP ended with status {sol.status.value}", sol)
    u = sol.y
    g = p.Mt @ u + w
    qval = p.quartic(x)[0]
    f_value = float(qu @ u + 0.5 * u @ p.Hu @ u) + qval
    reg_value = f_value + 0.5 * eps * float(g @ g)
    diag = dict(inner["diagnostics"], f=inner["value"])
    return RegularizedDirection(g, p.Winv @ u, reg_value, f_value, sol, eps, diag)

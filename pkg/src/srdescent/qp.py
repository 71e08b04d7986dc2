"""Small dense convex quadratic programs.

Three problem classes are supported, all in minimization form
``min 1/2 y^T H y + q^T y``:

* :class:`SimplexQP`   -- ``y`` in the unit simplex,
* :class:`BoxQP`       -- ``lo <= y <= hi``,
* :class:`PolyhedralQP` -- ``A y <= b``.

Simplex and box problems are solved by a primal active-set method on the
bound constraints, which terminates finitely with an exact face solve; this
matters because downstream consumers compare directions at the 1e-8 level.
An accelerated projected-gradient solver is kept as an alternative path
(``method="apg"``).  Polyhedral problems use a primal active-set method with
Bland's lowest-index rule for anti-cycling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .linalg import DimensionError, as_matrix, as_vector, lambda_max


class QPStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass
class QPSolution:
    y: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: QPStatus
    multipliers: np.ndarray | None = None
    history: list = field(default_factory=list)


def _check_square_sym(H, m, name="H"):
    H = as_matrix(H, name)
    if H.shape != (m, m):
        raise DimensionError(f"{name} has shape {H.shape}, expected {(m, m)}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.T)) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (H + H.T)


@dataclass
class SimplexQP:
    H: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.q = as_vector(self.q, "q")
        self.H = _check_square_sym(self.H, self.q.size)

    def objective(self, y):
        return float(0.5 * y @ self.H @ y + self.q @ y)


@dataclass
class BoxQP:
    H: np.ndarray
    q: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.q = as_vector(self.q, "q")
        m = self.q.size
        self.H = _check_square_sym(self.H, m)
        self.lo = np.broadcast_to(as_vector(self.lo, "lo"), (m,)).copy()
        self.hi = np.broadcast_to(as_vector(self.hi, "hi"), (m,)).copy()
        if np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi")

    def objective(self, y):
        return float(0.5 * y @ self.H @ y + self.q @ y)


@dataclass
class PolyhedralQP:
    H: np.ndarray
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.q = as_vector(self.q, "q")
        d = self.q.size
        self.H = _check_square_sym(self.H, d)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, d)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise DimensionError("A and b have inconsistent row counts")

    def objective(self, y):
        return float(0.5 * y @ self.H @ y + self.q @ y)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the unit simplex (sort and threshold)."""
    v = as_vector(v, "v")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_kkt_residual(H, q, y) -> float:
    return float(np.linalg.norm(y - project_simplex(y - (H @ y + q))))


def box_kkt_residual(H, q, lo, hi, y) -> float:
    return float(np.linalg.norm(y - np.clip(y - (H @ y + q), lo, hi)))


def _scale(H, q):
    return max(1.0, float(np.max(np.abs(H))) if H.size else 0.0, float(np.max(np.abs(q))))


# ---------------------------------------------------------------------------
# bounded active-set (simplex or box)


def _face_step(Hs, rs, simplex):
    """Minimize ``1/2 p^T Hs p + rs^T p`` over the face directions.

    Returns ``(p, is_ray)``.  When the face problem is unbounded below, ``p`` is
    a zero-curvature descent direction and the caller must step to a bound.
    """
    s = rs.size
    if simplex:
        if s == 1:
            return np.zeros(1), False
        Q, _ = np.linalg.qr(np.ones((s, 1)), mode="complete")
        Z = Q[:, 1:]
    else:
        Z = None
    Hr = Hs if Z is None else Z.T @ Hs @ Z
    gr = rs if Z is None else Z.T @ rs
    w, V = np.linalg.eigh(Hr)
    c = V.T @ gr
    wmax = max(float(w[-1]), 0.0)
    null = w <= 1e-12 * max(wmax, 1.0)
    cscale = 1.0 + np.linalg.norm(gr)
    if np.any(null) and np.linalg.norm(c[null]) > 1e-11 * cscale:
        pr = -(V[:, null] @ c[null])
        ray = True
    else:
        pos = ~null
        pr = -(V[:, pos] @ (c[pos] / w[pos]))
        ray = False
    p = pr if Z is None else Z @ pr
    return p, ray


def _bounded_active_set(H, q, lo, hi, simplex, y0, tol, max_iter):
    m = q.size
    scale = _scale(H, q)
    y = y0.copy()
    at_lo = y <= lo
    at_hi = (y >= hi) & ~at_lo
    y[at_lo] = lo[at_lo]
    y[at_hi] = hi[at_hi]
    free = ~(at_lo | at_hi)
    history = [0.5 * y @ H @ y + q @ y]
    face_done = False
    bland = False
    status = QPStatus.MAX_ITER
    mult = np.zeros(m)
    it = 0
    while it < max_iter:
        it += 1
        r = H @ y + q
        S = np.flatnonzero(free)
        if S.size and not face_done:
            p, ray = _face_step(H[np.ix_(S, S)], r[S], simplex)
            if np.any(p != 0.0):
                alpha = np.inf if ray else 1.0
                block = -1
                with np.errstate(divide="ignore", invalid="ignore"):
                    neg = p < 0
                    ratios = np.full(S.size, np.inf)
                    ratios[neg] = (lo[S][neg] - y[S][neg]) / p[neg]
                    pos = p > 0
                    ratios[pos] = (hi[S][pos] - y[S][pos]) / p[pos]
                ratios = np.maximum(ratios, 0.0)
                if ratios.size and ratios.min() <= alpha:
                    rmin = ratios.min()
                    # lowest index among ties keeps the path deterministic
                    block = int(np.flatnonzero(ratios <= rmin)[0])
                    alpha = rmin
                if not np.isfinite(alpha):
                    raise RuntimeError("unbounded QP direction on a bounded set")
                y_new = y.copy()
                y_new[S] = y[S] + alpha * p
                if block >= 0:
                    i = S[block]
                    if p[block] < 0:
                        y_new[i] = lo[i]
                        at_lo[i] = True
                    else:
                        y_new[i] = hi[i]
                        at_hi[i] = True
                    free[i] = False
                    bland = bland or alpha == 0.0
                else:
                    face_done = True
                y = y_new
                history.append(0.5 * y @ H @ y + q @ y)
                continue
            face_done = True
        # face optimal: check multipliers of the fixed bounds
        tau = float(np.mean(r[S])) if (simplex and S.size) else 0.0
        lam = r - tau
        mult = np.where(at_lo, np.maximum(lam, 0.0), 0.0) + np.where(at_hi, np.minimum(lam, 0.0), 0.0)
        viol = np.zeros(m)
        viol[at_lo] = -lam[at_lo]
        viol[at_hi] = lam[at_hi]
        thresh = 0.1 * tol * scale
        cand = np.flatnonzero(viol > thresh)
        if cand.size == 0:
            status = QPStatus.OPTIMAL
            break
        j = int(cand[0]) if bland else int(cand[np.argmax(viol[cand])])
        free[j] = True
        at_lo[j] = False
        at_hi[j] = False
        face_done = False
    return y, status, it, history, mult


def _apg(H, q, proj, y0, tol, max_iter, resid):
    L = lambda_max(H)
    if L <= 0.0:
        L = 1.0
    step = 1.0 / L
    y = proj(y0)
    z = y.copy()
    t = 1.0
    fy = 0.5 * y @ H @ y + q @ y
    history = [fy]
    status = QPStatus.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        y_new = proj(z - step * (H @ z + q))
        f_new = 0.5 * y_new @ H @ y_new + q @ y_new
        if f_new > fy:
            # function-value restart: plain projected gradient step from y
            t = 1.0
            y_new = proj(y - step * (H @ y + q))
            f_new = 0.5 * y_new @ H @ y_new + q @ y_new
            z = y_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = y_new + ((t - 1.0) / t_new) * (y_new - y)
            t = t_new
        y, fy = y_new, min(f_new, fy)
        history.append(fy)
        if resid(y) <= tol * _scale(H, q):
            status = QPStatus.OPTIMAL
            break
    return y, status, it, history


def _default_iters(m):
    return 50 * m + 1000


def solve_simplex_qp(p: SimplexQP, tol: float = 1e-10, max_iter: int | None = None,
                     y0=None, method: str = "active-set") -> QPSolution:
    """Minimize ``1/2 y^T H y + q^T y`` over the unit simplex.

    ``tol`` bounds the KKT residual ``||y - P(y - (Hy + q))||`` relative to the
    problem scale ``max(1, |H|_max, |q|_max)``.  ``y0`` is an optional
    starting point (projected onto the simplex first).
    """
    H, q = p.H, p.q
    m = q.size
    max_iter = _default_iters(m) if max_iter is None else max_iter
    if y0 is None:
        if not np.any(H):
            # pure LP: best vertex, lowest index on ties
            y = np.zeros(m)
            y[int(np.argmin(q))] = 1.0
            obj = p.objective(y)
            return QPSolution(y, obj, simplex_kkt_residual(H, q, y), 0, QPStatus.OPTIMAL,
                              history=[obj])
        y0 = np.zeros(m)
        y0[int(np.argmin(0.5 * np.diag(H) + q))] = 1.0
    else:
        y0 = project_simplex(y0)
    if method == "apg":
        y, status, it, hist = _apg(H, q, project_simplex, y0, tol, max_iter,
                                   lambda v: simplex_kkt_residual(H, q, v))
        mult = None
    elif method == "active-set":
        lo = np.zeros(m)
        hi = np.full(m, np.inf)
        y, status, it, hist, mult = _bounded_active_set(H, q, lo, hi, True, y0, tol, max_iter)
        y = np.maximum(y, 0.0)
        y /= y.sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    res = simplex_kkt_residual(H, q, y)
    if status is QPStatus.OPTIMAL and res > tol * _scale(H, q):
        status = QPStatus.MAX_ITER
    return QPSolution(y, p.objective(y), res, it, status, multipliers=mult, history=hist)


def solve_box_qp(p: BoxQP, tol: float = 1e-10, max_iter: int | None = None,
                 y0=None, method: str = "active-set") -> QPSolution:
    """Minimize ``1/2 y^T H y + q^T y`` subject to ``lo <= y <= hi``.

    The returned ``multipliers`` are signed bound multipliers: positive
    entries belong to active lower bounds, negative entries to active upper
    bounds, so that ``H y + q = multipliers`` at a KKT point.
    """
    H, q, lo, hi = p.H, p.q, p.lo, p.hi
    m = q.size
    max_iter = _default_iters(m) if max_iter is None else max_iter
    if y0 is None:
        y0 = np.where(q > 0, lo, hi)
    y0 = np.clip(np.asarray(y0, dtype=float), lo, hi)
    if method == "apg":
        y, status, it, hist = _apg(H, q, lambda v: np.clip(v, lo, hi), y0, tol, max_iter,
                                   lambda v: box_kkt_residual(H, q, lo, hi, v))
        mult = None
    elif method == "active-set":
        y, status, it, hist, mult = _bounded_active_set(H, q, lo, hi, False, y0, tol, max_iter)
        y = np.clip(y, lo, hi)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = box_kkt_residual(H, q, lo, hi, y)
    if status is QPStatus.OPTIMAL and res > tol * _scale(H, q):
        status = QPStatus.MAX_ITER
    return QPSolution(y, p.objective(y), res, it, status, multipliers=mult, history=hist)


# ---------------------------------------------------------------------------
# polyhedral active-set


def _phase1(A, b, d):
    if A.shape[0] == 0:
        return np.zeros(d)
    res = linprog(np.zeros(d), A_ub=A, b_ub=b, bounds=[(None, None)] * d, method="highs")
    if res.status != 0:
        return None
    return res.x


def polyhedral_kkt(p: PolyhedralQP, y, lam):
    """Stationarity, feasibility and complementarity residuals (max of the three)."""
    slack = p.A @ y - p.b
    stat = np.linalg.norm(p.H @ y + p.q + p.A.T @ lam)
    feas = float(np.max(slack, initial=0.0))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    return max(stat, feas, comp), stat, feas, comp


def solve_polyhedral_qp(p: PolyhedralQP, tol: float = 1e-10, max_iter: int | None = None,
                        y0=None, regularization: float = 1e-10) -> QPSolution:
    """Minimize ``1/2 y^T H y + q^T y`` subject to ``A y <= b``.

    Primal active-set method.  If ``H`` is only semidefinite, ``regularization * I``
    is added; the residuals and objective refer to the regularized problem.
    ``multipliers`` holds ``lambda >= 0`` with ``H y + q + A^T lambda = 0``.
    """
    A, b = p.A, p.b
    d = p.q.size
    r_rows = A.shape[0]
    H = p.H
    if np.linalg.eigvalsh(H)[0] <= regularization:
        H = H + regularization * np.eye(d)
        p = PolyhedralQP(H, p.q, A, b)
    q = p.q
    max_iter = _default_iters(d + r_rows) if max_iter is None else max_iter
    scale = max(_scale(H, q), float(np.max(np.abs(A), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    feas_tol = 1e-12 * scale

    if y0 is not None:
        y = np.asarray(y0, dtype=float).copy()
        if r_rows and np.max(A @ y - b) > feas_tol:
            y = None
    else:
        y = None
    if y is None:
        y = _phase1(A, b, d)
        if y is None:
            return QPSolution(np.full(d, np.nan), np.nan, np.inf, 0, QPStatus.INFEASIBLE)

    # initial working set: active rows, kept linearly independent
    W: list[int] = []
    if r_rows:
        for i in np.flatnonzero(np.abs(A @ y - b) <= feas_tol):
            cand = W + [int(i)]
            if np.linalg.matrix_rank(A[cand]) == len(cand):
                W = cand

    history = [p.objective(y)]
    lam_full = np.zeros(r_rows)
    status = QPStatus.MAX_ITER
    it = 0
    while it < max_iter:
        it += 1
        g = H @ y + q
        k = len(W)
        # null-space step: exactly zero once the working set spans R^d
        if k:
            AW = A[W]
            Qf, _ = np.linalg.qr(AW.T, mode="complete")
            Z = Qf[:, k:]
        else:
            Z = np.eye(d)
        if Z.shape[1]:
            step = -Z @ np.linalg.solve(Z.T @ H @ Z, Z.T @ g)
        else:
            step = np.zeros(d)
        lam = np.linalg.lstsq(A[W].T, -(g + H @ step), rcond=None)[0] if k else np.zeros(0)
        if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(y)):
            lam_full = np.zeros(r_rows)
            lam_full[W] = lam
            neg = [j for j, lj in zip(W, lam) if lj < -0.1 * tol * scale]
            if not neg:
                status = QPStatus.OPTIMAL
                lam_full = np.maximum(lam_full, 0.0)
                break
            W.remove(min(neg))
            continue
        alpha = 1.0
        block = -1
        if r_rows:
            Ap = A @ step
            slack = b - A @ y
            inW = np.zeros(r_rows, dtype=bool)
            inW[W] = True
            cand = np.flatnonzero((~inW) & (Ap > 1e-14 * scale * (1.0 + np.linalg.norm(step))))
            if cand.size:
                ratios = np.maximum(slack[cand], 0.0) / Ap[cand]
                rmin = ratios.min()
                if rmin < 1.0:
                    alpha = float(rmin)
                    block = int(cand[np.flatnonzero(ratios <= rmin)[0]])
        y = y + alpha * step
        history.append(p.objective(y))
        if block >= 0:
            W.append(block)
    res = polyhedral_kkt(p, y, lam_full)[0]
    if status is QPStatus.OPTIMAL and res > tol * scale:
        status = QPStatus.MAX_ITER
    return QPSolution(y, p.objective(y), res, it, status, multipliers=lam_full, history=history)

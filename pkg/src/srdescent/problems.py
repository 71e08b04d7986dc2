"""Seeded test-problem families with value/subgradient and direction oracles.

Families
--------
``MaxQuadInstance``     max_i g_i^T x + 1/2 x^T H_i x with 0 as minimizer
``NesterovCRInstance``  nonsmooth Chebyshev-Rosenbrock
``MinQuadInstance``     min_i 1/2 ||A_i x - b_i||^2 with a planted zero
``MarginalQPInstance``  value function of a parametric QP with moving box
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import RngStream, random_psd, standard_normal_vector
from .oracles import (
    AffineMarginalStructure,
    Box,
    MarginalQPProblem,
    Simplex,
    direction_marginal_licq,
    lagrangian_gradient,
    marginal_inner,
    regularized_direction_affine,
)
from .solvers import Oracle1, Oracle2

GENERATOR_VERSION = 1


@dataclass
class MaxQuadInstance:
    H: np.ndarray  # (m, n, n)
    G: np.ndarray  # (m, n), row i is g_i
    lam: np.ndarray
    mu: np.ndarray
    seed: int | None = None

    family = "maxquad"

    @property
    def n(self):
        return self.G.shape[1]

    @property
    def m(self):
        return self.G.shape[0]

    def pieces(self, x):
        Hx = np.einsum("ijk,k->ij", self.H, x)
        vals = self.G @ x + 0.5 * (Hx @ x)
        return vals, (self.G + Hx).T

    def value(self, x):
        return float(np.max(self.pieces(np.asarray(x, dtype=float))[0]))

    def subgradient(self, x):
        vals, J = self.pieces(np.asarray(x, dtype=float))
        i = int(np.argmax(vals))
        return float(vals[i]), J[:, i].copy()

    def structure(self):
        return AffineMarginalStructure(self.pieces, Simplex(self.m))

    def smooth_pieces(self):
        def piece(i):
            def f(x):
                Hx = self.H[i] @ x
                return float(self.G[i] @ x + 0.5 * Hx @ x), self.G[i] + Hx
            return f
        return [piece(i) for i in range(self.m)]

    fstar = 0.0


def gen_max_quad(n: int, m: int, rng: RngStream) -> MaxQuadInstance:
    """Random max of ``m`` convex quadratics on R^n with unique minimizer 0.

    ``lambda`` (uniform(0.1, 1), normalized, length m // 2) and ``mu``
    (mean-centered normal) are drawn first; the raw g_i (normal / sqrt(n)) are
    then projected onto ``{sum_{i < m//2} lambda_i g_i = 0, sum_j mu_j g_j = 0}``.
    """
    if n < 1 or m < 2:
        raise ValueError("need n >= 1 and m >= 2")
    h = m // 2
    lam = rng.uniform(h, 0.1, 1.0)
    lam /= lam.sum()
    while True:
        mu = rng.normal(m)
        mu -= mu.mean()
        if np.linalg.norm(mu) >= 1e-6:
            break
    G = rng.normal((m, n)) / np.sqrt(n)
    B = np.zeros((m, 2))
    B[:h, 0] = lam
    B[:, 1] = mu
    G = G - B @ np.linalg.lstsq(B, G, rcond=None)[0]
    H = np.stack([random_psd(n, rng) / n for _ in range(m)])
    return MaxQuadInstance(H, G, lam, mu, rng.seed)


@dataclass
class NesterovCRInstance:
    n: int
    seed: int | None = None

    family = "nesterov"
    fstar = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")

    def _psi(self, x):
        return x[1:] - 2.0 * x[:-1] ** 2 + 1.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.25 * (x[0] - 1.0) ** 2 + np.sum(np.abs(self._psi(x))))

    def psi(self, x):
        n = self.n
        J = np.zeros((n, n - 1))
        idx = np.arange(n - 1)
        J[idx, idx] = -4.0 * x[:-1]
        J[idx + 1, idx] = 1.0
        return self._psi(x), J

    def g_term(self, x):
        gr = np.zeros(self.n)
        gr[0] = 0.5 * (x[0] - 1.0)
        return 0.25 * (x[0] - 1.0) ** 2, gr

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        vals, J = self.psi(x)
        s = np.where(vals >= 0.0, 1.0, -1.0)
        return self.value(x), self.g_term(x)[1] + J @ s

    def structure(self):
        ones = np.ones(self.n - 1)
        return AffineMarginalStructure(self.psi, Box(-ones, ones), g_term=self.g_term)

    def preset_start(self):
        """``x_i = 0.5`` for odd i and ``-0.5`` for even i (1-based)."""
        x = np.full(self.n, -0.5)
        x[0::2] = 0.5
        return x


def gen_nesterov_cr(n: int) -> NesterovCRInstance:
    return NesterovCRInstance(n)


@dataclass
class MinQuadInstance:
    A: np.ndarray  # (m, d, n)
    xstar: np.ndarray
    b: np.ndarray  # (m, d)
    seed: int | None = None

    family = "minquad"
    fstar = 0.0

    @property
    def n(self):
        return self.A.shape[2]

    @property
    def m(self):
        return self.A.shape[0]

    def _pieces(self, x):
        res = np.einsum("ijk,k->ij", self.A, x) - self.b
        vals = 0.5 * np.sum(res * res, axis=1)
        grads = np.einsum("ijk,ij->ik", self.A, res)
        return vals, grads.T

    def value(self, x):
        return float(np.min(self._pieces(np.asarray(x, dtype=float))[0]))

    def subgradient(self, x):
        vals, J = self._pieces(np.asarray(x, dtype=float))
        i = int(np.argmin(vals))
        return float(vals[i]), J[:, i].copy()

    def neg_structure(self):
        """Simplex structure of ``-f = max_i (-f_i)``."""
        def psi(x):
            vals, J = self._pieces(x)
            return -vals, -J
        return AffineMarginalStructure(psi, Simplex(self.m))

    def smooth_pieces(self):
        def piece(i):
            def f(x):
                r = self.A[i] @ x - self.b[i]
                return 0.5 * float(r @ r), self.A[i].T @ r
            return f
        return [piece(i) for i in range(self.m)]


def gen_min_quad(n: int, d: int, m: int, rng: RngStream) -> MinQuadInstance:
    if not (d >= n >= 1 and m >= 1):
        raise ValueError("need d >= n >= 1 and m >= 1")
    A = np.empty((m, d, n))
    for i in range(m):
        while True:
            Ai = rng.normal((d, n))
            if np.linalg.svd(Ai, compute_uv=False)[-1] > 1e-8 * np.sqrt(d):
                break
        A[i] = Ai
    # covariance n^{-1/2} I, i.e. standard deviation n^{-1/4}
    xstar = standard_normal_vector(n, n ** -0.25, rng)
    b = np.einsum("ijk,k->ij", A, xstar)
    return MinQuadInstance(A, xstar, b, rng.seed)


@dataclass
class MarginalQPInstance:
    problem: MarginalQPProblem
    seed: int | None = None

    family = "marginal"
    fstar = None

    @property
    def n(self):
        return self.problem.n

    @property
    def m(self):
        return self.problem.m

    def value(self, x):
        return marginal_inner(self.problem, np.asarray(x, dtype=float))["value"]

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        inner = marginal_inner(self.problem, x)
        g = lagrangian_gradient(self.problem, x, inner["u"], inner["lam_up"], inner["lam_lo"],
                                inner["quartic_grad"])
        return inner["value"], g


def gen_marginal_qp(n: int, m: int, rng: RngStream) -> MarginalQPInstance:
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    sd = m ** -0.25  # covariance m^{-1/2}
    b = rng.normal(m, scale=sd)
    c = rng.normal(m, scale=sd)
    A = rng.normal((m, n), scale=sd)
    D = rng.normal((m, n), scale=sd)
    while True:
        W = np.eye(m) + 0.1 * rng.normal((m, m))
        if np.linalg.cond(W) <= 1e3:
            break
    Q = random_psd(m, rng) / m
    return MarginalQPInstance(MarginalQPProblem(b, c, A, D, W, Q), rng.seed)


# ---------------------------------------------------------------------------
# oracle views


def oracle1_view(inst) -> Oracle1:
    return Oracle1(inst.subgradient)


def oracle2_view(inst, warm_start: bool = True) -> Oracle2:
    """Direction oracle for ``inst``.

    With ``warm_start`` the previous inner solution seeds the next QP solve.
    This changes only the solver path, not the (unique) direction.
    """
    cache = {}

    def hint():
        return cache.get("y") if warm_start else None

    if isinstance(inst, MinQuadInstance):
        s = inst.neg_structure()

        def ev(x, eps):
            rd = regularized_direction_affine(s, x, eps, y0=hint())
            cache["y"] = rd.y
            return rd.negated()
    elif isinstance(inst, MarginalQPInstance):
        p = inst.problem

        def ev(x, eps):
            rd = direction_marginal_licq(p, x, eps)
            return rd
    else:
        s = inst.structure()

        def ev(x, eps):
            rd = regularized_direction_affine(s, x, eps, y0=hint())
            cache["y"] = rd.y
            return rd
    return Oracle2(ev, inst.value)


# ---------------------------------------------------------------------------
# serialization


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def to_json(inst) -> str:
    """JSON document of an instance; arrays are nested row-major lists."""
    doc = {"family": inst.family, "version": GENERATOR_VERSION, "seed": getattr(inst, "seed", None)}
    if isinstance(inst, MaxQuadInstance):
        doc["data"] = {"H": _arr(inst.H), "G": _arr(inst.G), "lam": _arr(inst.lam), "mu": _arr(inst.mu)}
    elif isinstance(inst, NesterovCRInstance):
        doc["data"] = {"n": inst.n}
    elif isinstance(inst, MinQuadInstance):
        doc["data"] = {"A": _arr(inst.A), "xstar": _arr(inst.xstar), "b": _arr(inst.b)}
    elif isinstance(inst, MarginalQPInstance):
        p = inst.problem
        doc["data"] = {k: _arr(getattr(p, k)) for k in ("b", "c", "A", "D", "W", "Q")}
        doc["data"]["quartic_coeff"] = p.quartic_coeff
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    return json.dumps(doc)


def from_json(text: str):
    doc = json.loads(text)
    fam, d, seed = doc["family"], doc["data"], doc.get("seed")
    if doc.get("version") != GENERATOR_VERSION:
        raise ValueError(f"unsupported generator version {doc.get('version')}")
    a = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
    if fam == "maxquad":
        return MaxQuadInstance(a("H"), a("G"), a("lam"), a("mu"), seed)
    if fam == "nesterov":
        return NesterovCRInstance(int(d["n"]), seed)
    if fam == "minquad":
        return MinQuadInstance(a("A"), a("xstar"), a("b"), seed)
    if fam == "marginal":
        p = MarginalQPProblem(a("b"), a("c"), a("A"), a("D"), a("W"), a("Q"), float(d["quartic_coeff"]))
        return MarginalQPInstance(p, seed)
    raise ValueError(f"unknown family {fam!r}")

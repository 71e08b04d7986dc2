"""Random instances with known structure, shared by ``bench verify`` and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..linalg import RngStream, random_psd
from ..oracles import CompositeProblem
from ..qp import BoxQP, PolyhedralQP, SimplexQP


def rand_int(rng: RngStream, lo: int, hi: int) -> int:
    """Uniform integer in ``[lo, hi]``."""
    return lo + min(int(rng.uniform() * (hi - lo + 1)), hi - lo)


def random_simplex_qp(rng: RngStream, m: int, rank: int | None = None) -> SimplexQP:
    k = m if rank is None else rank
    B = rng.normal((k, m))
    return SimplexQP(B.T @ B, rng.normal(m))


def random_box_qp(rng: RngStream, m: int) -> BoxQP:
    B = rng.normal((m, m))
    lo = rng.normal(m)
    hi = lo + rng.uniform(m, 0.1, 2.0)
    return BoxQP(B.T @ B, 3.0 * rng.normal(m), lo, hi)


def random_polyhedral_qp(rng: RngStream, d: int, r: int) -> PolyhedralQP:
    """Strictly convex QP whose feasible set contains a known interior point."""
    H = random_psd(d, rng) + 0.1 * np.eye(d)
    A = rng.normal((r, d))
    y_in = rng.normal(d)
    b = A @ y_in + rng.uniform(r, 0.1, 1.0)
    return PolyhedralQP(H, 3.0 * rng.normal(d), A, b)


# ---------------------------------------------------------------------------
# polyhedral composites with quadratic inner map


@dataclass
class QuadraticMap:
    """``c_j(x) = 1/2 x^T P_j x + r_j^T x + s_j``; returns ``(values, jac_T)``."""

    P: np.ndarray  # (m, n, n), symmetric slices
    R: np.ndarray  # (m, n)
    s: np.ndarray  # (m,)

    def __call__(self, x):
        vals = 0.5 * np.einsum("i,jik,k->j", x, self.P, x) + self.R @ x + self.s
        jac_T = np.einsum("jik,k->ij", self.P, x) + self.R.T
        return vals, jac_T

    def jacobian_lipschitz(self) -> float:
        """Bound on the operator-norm Lipschitz constant of ``x -> jac_T(x)``."""
        return float(np.sqrt(sum(np.linalg.norm(Pj, 2) ** 2 for Pj in self.P)))


@dataclass
class CompositeCase:
    problem: CompositeProblem
    cmap: QuadraticMap
    x: np.ndarray
    L: float  # Lipschitz constant of h(u) = max_i a_i^T u + b_i
    beta: float


def random_composite(rng: RngStream, max_n=10, max_m=6, max_pieces=5) -> CompositeCase:
    n = rand_int(rng, 1, max_n)
    m = rand_int(rng, 1, max_m)
    k = rand_int(rng, 1, max_pieces)
    P = rng.normal((m, n, n))
    P = 0.5 * (P + P.transpose(0, 2, 1))
    cmap = QuadraticMap(P, rng.normal((m, n)), rng.normal(m))
    a = rng.normal((k, m))
    prob = CompositeProblem(cmap, a, rng.normal(k))
    L = float(np.max(np.linalg.norm(a, axis=1)))
    return CompositeCase(prob, cmap, rng.normal(n), L, cmap.jacobian_lipschitz())


# ---------------------------------------------------------------------------
# max-of-smooth instances with an exact tie at a chosen point


@dataclass
class KinkCase:
    """``f = max_i f_i`` with ``f_i(x) = c_i + g_i^T (x - xbar) + 1/2 (x - xbar)^T H_i (x - xbar)``.

    Pieces in ``active`` share the largest constant, so they tie exactly at
    ``xbar``; the others sit at least ``gap`` below.
    """

    xbar: np.ndarray
    c: np.ndarray
    G: np.ndarray  # (m, n)
    H: np.ndarray  # (m, n, n)
    active: np.ndarray

    @property
    def m(self):
        return self.c.size

    def pieces(self):
        def piece(i):
            def f(x):
                dx = np.asarray(x, dtype=float) - self.xbar
                Hdx = self.H[i] @ dx
                return float(self.c[i] + self.G[i] @ dx + 0.5 * dx @ Hdx), self.G[i] + Hdx
            return f
        return [piece(i) for i in range(self.m)]

    def value(self, x):
        return max(p(x)[0] for p in self.pieces())


def random_kink(rng: RngStream, max_n=5, max_m=5, gap=0.5) -> KinkCase:
    n = rand_int(rng, 1, max_n)
    m = rand_int(rng, 2, max_m)
    na = rand_int(rng, 2, m)
    xbar = rng.normal(n)
    c0 = rng.normal()
    c = np.full(m, c0)
    c[na:] = c0 - gap - rng.uniform(m - na)
    G = rng.normal((m, n))
    H = np.stack([random_psd(n, rng) / n for _ in range(m)])
    # shuffle so the active set is not always a prefix
    perm = np.argsort(rng.uniform(m), kind="stable")
    return KinkCase(xbar, c[perm], G[perm], H[perm], np.sort(np.flatnonzero(perm < na)))

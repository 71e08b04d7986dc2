"""Dense kernels, seeded randomness and random-matrix generators.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64;
the helpers here only add shape/finiteness validation on top of numpy.

Randomness comes from :class:`RngStream`, a thin wrapper around numpy's
Philox counter-based bit generator.  Normal variates are produced with the
Box-Muller transform from pairs of uniforms, drawn in a fixed order, so a
given seed always yields the same numbers regardless of numpy's own
(version dependent) normal samplers.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


def as_vector(v, name="vector"):
    """Return ``v`` as a finite 1-D float array (a copy is made only if needed)."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_matrix(M, name="matrix"):
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def dot(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot: shapes {a.shape} and {b.shape} differ")
    return float(a @ b)


def mat_vec(M, v) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise DimensionError(f"mat_vec: cannot multiply {M.shape} by {v.shape}")
    return M @ v


class RngStream:
    """Seeded, single-owner stream of random numbers.

    Parameters
    ----------
    seed : int
        64-bit seed.  Two streams built from the same seed produce identical
        draw sequences.

    Notes
    -----
    Uniforms come from ``numpy.random.Philox`` (a counter-based generator
    with a published specification).  Normals are generated by Box-Muller:
    for each pair ``(u1, u2)`` of uniforms on ``[0, 1)``,
    ``z0 = sqrt(-2 log(1 - u1)) cos(2 pi u2)`` and
    ``z1 = sqrt(-2 log(1 - u1)) sin(2 pi u2)``.  An odd request consumes a
    full pair and discards ``z1``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self.draws = 0

    def uniform(self, size=None, low=0.0, high=1.0):
        n = 1 if size is None else int(np.prod(size))
        u = self._gen.random(n)
        self.draws += n
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None, scale=1.0):
        n = 1 if size is None else int(np.prod(size))
        npairs = (n + 1) // 2
        u = self.uniform(2 * npairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * npairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = scale * z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def spawn(self, *keys: int) -> "RngStream":
        """Independent child stream determined by this seed and ``keys``."""
        ss = np.random.SeedSequence([self.seed, *[int(k) for k in keys]])
        return RngStream(int(ss.generate_state(1, dtype=np.uint64)[0]))


def standard_normal_vector(n: int, scale: float, rng: RngStream) -> np.ndarray:
    """i.i.d. normal entries with mean zero and standard deviation ``scale``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not scale > 0:
        raise ValueError("scale must be positive")
    return rng.normal(n, scale=scale)


def random_psd(n: int, rng: RngStream) -> np.ndarray:
    """Random symmetric positive semi-definite ``n x n`` matrix ``B^T B``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    B = rng.normal((n, n))
    M = B.T @ B
    return 0.5 * (M + M.T)


def lambda_max(H, iters: int = 50, safety: float = 1.01) -> float:
    """Power-iteration estimate of the largest eigenvalue of a PSD matrix."""
    H = np.asarray(H, dtype=float)
    m = H.shape[0]
    v = np.ones(m) / np.sqrt(m)
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / nrm
    # power iteration underestimates; never go below the diagonal maximum
    return safety * max(lam, float(np.max(np.diag(H))))

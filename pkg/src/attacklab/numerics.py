"""Dense kernels shared by the rest of the package: seeded randomness,
sphere / Stiefel-frame sampling, singular value extremes and log-Beta.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "InvalidDimensionError",
    "InvalidFrameError",
    "DomainError",
    "make_rng",
    "spawn_rngs",
    "sample_unit_sphere",
    "sample_unit_sphere_batch",
    "sample_orthonormal_frame",
    "spectral_extremes",
    "log_beta",
]

_REDRAW_TOL = 1e-12


class InvalidDimensionError(ValueError):
    pass


class InvalidFrameError(ValueError):
    pass


class DomainError(ValueError):
    pass


def make_rng(seed: int | np.random.SeedSequence | np.random.Generator) -> np.random.Generator:
    """Counter-based (Philox) generator for a 64-bit seed.

    Passing an existing Generator returns it unchanged so call sites can accept
    either form.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent streams, one per task; the i-th stream depends only on (seed, i)."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(count)
    return [make_rng(c) for c in children]


def sample_unit_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise InvalidDimensionError(f"sphere dimension must be >= 1, got {n}")
    while True:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        if norm > _REDRAW_TOL:
            return g / norm


def sample_unit_sphere_batch(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent uniform unit vectors as rows of a (count, n) array."""
    if n < 1:
        raise InvalidDimensionError(f"sphere dimension must be >= 1, got {n}")
    g = rng.standard_normal((count, n))
    norms = np.linalg.norm(g, axis=1)
    bad = norms <= _REDRAW_TOL
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1)
        bad = norms <= _REDRAW_TOL
    return g / norms[:, None]


def sample_orthonormal_frame(n: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random B-frame in R^n, returned as an (n, B) matrix with orthonormal columns.

    QR of a standard Gaussian matrix with the signs of R's diagonal folded into Q,
    which gives the Haar law on the Stiefel manifold.
    """
    if n < 1 or B < 1:
        raise InvalidDimensionError(f"frame needs n >= 1 and B >= 1, got n={n}, B={B}")
    if B > n:
        raise InvalidFrameError(f"cannot fit {B} orthonormal vectors in R^{n}")
    while True:
        g = rng.standard_normal((n, B))
        q, r = np.linalg.qr(g)
        d = np.diag(r)
        if np.all(np.abs(d) > _REDRAW_TOL):
            return q * np.where(d < 0, -1.0, 1.0)


def spectral_extremes(J: np.ndarray) -> tuple[float, float]:
    """Largest and smallest singular values of an m x n matrix (m >= n).

    Uses the eigenvalues of the n x n Gram matrix, which is cheap because the
    latent dimension is small.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim == 1:
        J = J[:, None]
    if J.size == 0:
        raise InvalidDimensionError("empty matrix")
    m, n = J.shape
    if m < n:
        raise InvalidDimensionError(f"expected rows >= cols, got {m}x{n}")
    evals = np.linalg.eigvalsh(J.T @ J)
    evals = np.clip(evals, 0.0, None)
    return float(math.sqrt(evals[-1])), float(math.sqrt(evals[0]))


def operator_norm(M: np.ndarray) -> float:
    """Spectral norm of an arbitrary dense matrix (or L2 norm of a vector)."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    return float(np.linalg.norm(M, 2))


def log_beta(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError(f"log_beta needs positive arguments, got ({a}, {b})")
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)

"""Seeded desk-scale instances: victims, boundary points and source/target pairs.

Pair construction is white-box (it uses the ground-truth value function) and
happens before any attack query is counted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .numerics import make_rng, sample_orthonormal_frame, sample_unit_sphere
from .victims import (DifferenceOracle, GroundTruth, make_linear_victim, make_mlp_victim,
                      make_quadratic_victim, random_mlp_layers)

__all__ = [
    "AttackPair",
    "mlp_victim",
    "subspace_mlp_victim",
    "random_quadratic",
    "boundary_point_on_line",
    "random_boundary_point",
    "make_pair",
    "make_pairs",
    "aligned_frame",
]


@dataclass
class AttackPair:
    x_src: np.ndarray
    x_tgt: np.ndarray
    boundary_gap: float  # distance from x_tgt to the boundary point it was built from


def mlp_victim(sizes=(32, 16, 16, 3), seed: int = 0, y_ben: int = 0, y_mal: int = 1):
    layers = random_mlp_layers(sizes, make_rng(seed), scale=1.5)
    return (*make_mlp_victim(layers, "tanh", y_ben, y_mal), layers)


def subspace_mlp_victim(m: int = 1024, k: int = 64, hidden: int = 32, classes: int = 3,
                        leak: float = 0.05, seed: int = 0):
    """tanh MLP whose first layer reads (almost) only a k-dim subspace of R^m.

    Returns (oracle, truth, layers, Q) where Q is the m x k orthonormal basis of
    that subspace; ``leak`` scales the out-of-subspace part of the first layer.
    This stands in for image classifiers whose gradients live near a low
    dimensional support that a trained projection can capture.
    """
    rng = make_rng(seed)
    Q = sample_orthonormal_frame(m, k, rng)
    A = 1.5 * rng.standard_normal((hidden, k)) / np.sqrt(k)
    W1 = A @ Q.T + leak * rng.standard_normal((hidden, m)) / np.sqrt(m)
    layers = [(W1, 0.1 * rng.standard_normal(hidden))]
    layers += random_mlp_layers((hidden, hidden, classes), rng, scale=1.5)
    oracle, truth = make_mlp_victim(layers, "tanh", 0, 1)
    return oracle, truth, layers, Q


def random_quadratic(m: int, beta_S: float, seed: int = 0):
    """Quadratic victim with a random symmetric H of spectral radius ``beta_S``."""
    rng = make_rng(seed)
    w = rng.standard_normal(m)
    w /= np.linalg.norm(w)
    G = rng.standard_normal((m, m))
    H = G + G.T
    radius = np.max(np.abs(np.linalg.eigvalsh(H)))
    H = H * (beta_S / radius) if beta_S > 0 else np.zeros((m, m))
    b = np.zeros(m)
    oracle, truth = make_quadratic_victim(w, b, H)
    return oracle, truth, (w, b, H)


def boundary_point_on_line(truth: GroundTruth, x0, d, t_max: float = 10.0, steps: int = 200):
    """Closest root of S(x0 + t d) for |t| <= t_max (bracketing + Brent), or None."""
    x0 = np.asarray(x0, dtype=float)
    ts = np.linspace(-t_max, t_max, 2 * steps + 1)
    vals = truth.value_fn(x0[None, :] + ts[:, None] * d[None, :])
    order = np.argsort(np.abs(ts[:-1] + ts[1:]))
    for i in order:
        if vals[i] == 0:
            return x0 + ts[i] * d
        if vals[i] * vals[i + 1] < 0:
            f = lambda t: truth.value(x0 + t * d)
            t = brentq(f, ts[i], ts[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
            return x0 + t * d
    return None


def random_boundary_point(truth: GroundTruth, m: int, rng, scale: float = 1.0):
    rng = make_rng(rng)
    while True:
        x0 = scale * rng.standard_normal(m)
        g = truth.gradient(x0)
        d = g / np.linalg.norm(g) if np.any(g) else sample_unit_sphere(m, rng)
        xb = boundary_point_on_line(truth, x0, d)
        if xb is not None:
            return xb


def make_pair(truth: GroundTruth, m: int, rng, gap: float = 0.01,
              src_distance: tuple[float, float] = (1.0, 3.0), src_push: float = 0.05,
              scale: float = 1.0) -> AttackPair:
    """Source/target pair whose straight segment crosses the boundary far from the target.

    x_tgt sits ``gap`` inside the benign side of a random boundary point.  x_src is
    another boundary point, roughly ``src_distance`` away from x_tgt, pushed
    ``src_push`` into the adversarial side, so the first bisection lands far from
    the attainable minimum and the attack has to travel along the boundary.
    """
    rng = make_rng(rng)
    while True:
        xb = random_boundary_point(truth, m, rng, scale)
        g = truth.gradient(xb)
        x_tgt = xb - gap * g / np.linalg.norm(g)
        if truth.value(x_tgt) >= 0:
            continue
        for _ in range(50):
            r = rng.uniform(*src_distance)
            probe = x_tgt + r * sample_unit_sphere(m, rng)
            gp = truth.gradient(probe)
            if not np.any(gp):
                continue
            xb2 = boundary_point_on_line(truth, probe, gp / np.linalg.norm(gp), t_max=2.0)
            if xb2 is None:
                continue
            g2 = truth.gradient(xb2)
            x_src = xb2 + src_push * g2 / np.linalg.norm(g2)
            if truth.value(x_src) > 0 and np.linalg.norm(x_src - x_tgt) > src_distance[0] / 2:
                return AttackPair(x_src, x_tgt, gap)


def make_pairs(truth: GroundTruth, m: int, count: int, seed: int = 0, **kw) -> list[AttackPair]:
    rngs = [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
    return [make_pair(truth, m, r, **kw) for r in rngs]


def aligned_frame(m: int, n: int, direction, strength: float, rng) -> np.ndarray:
    """m x n orthonormal W whose span contains a mix of ``direction`` and noise.

    strength in [0, 1] sets ||W^T d|| / ||d|| (exactly, up to rounding).
    """
    rng = make_rng(rng)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    Q = sample_orthonormal_frame(m, n + 1, rng)
    # remove d from a random frame, then rotate the first column toward d
    Q = Q - np.outer(d, d @ Q)
    Q, _ = np.linalg.qr(Q)
    Q = Q[:, :n]
    first = strength * d + np.sqrt(max(0.0, 1 - strength ** 2)) * Q[:, 0]
    W = np.column_stack([first, Q[:, 1:]])
    return W

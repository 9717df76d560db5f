"""Projection-based sign gradient estimator.

Probes ``f(delta * u_i)`` around a boundary point, averages the queried signs
against the latent directions ``u_i`` and lifts the result to the ambient space
either through the Jacobian at the base (precise) or through ``f(u_i) - x_b``
(approximate, no derivative needed).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import make_rng, sample_orthonormal_frame, sample_unit_sphere_batch
from .projections import Projection
from .victims import DifferenceOracle, GroundTruth

__all__ = [
    "EstimatorConfig",
    "GradientEstimate",
    "UndefinedCosineError",
    "sample_directions",
    "estimate_raw",
    "lift_estimate",
    "omega_proxy",
    "cosine_to_truth",
    "estimate_gradient",
    "default_delta",
]

SAMPLING_MODES = ("orthonormal_frame", "normalized_gaussian")
LIFT_MODES = ("precise", "approximate")


class UndefinedCosineError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    B: int
    delta: float
    sampling_mode: str = "orthonormal_frame"
    lift_mode: str | None = None  # None: precise when a Jacobian exists

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ValueError(f"sampling_mode must be one of {SAMPLING_MODES}")
        if self.lift_mode is not None and self.lift_mode not in LIFT_MODES:
            raise ValueError(f"lift_mode must be one of {LIFT_MODES}")

    def resolve_lift(self, p: Projection) -> str:
        if self.lift_mode is not None:
            return self.lift_mode
        return "precise" if p.has_jacobian else "approximate"


@dataclass
class GradientEstimate:
    raw_low: np.ndarray
    signs: np.ndarray
    directions: np.ndarray  # (B, n), row i is u_i
    queries_used: int
    tied: bool = False
    lifted: np.ndarray | None = None
    lift_mode: str | None = None
    omega_proxy: float | None = None
    info: dict = field(default_factory=dict)


def default_delta(theta: float, m: int, distance: float) -> float:
    """Probe radius tied to the bisection precision: theta * sqrt(m) * d(x_t, x_tgt)."""
    return theta * np.sqrt(m) * distance


def sample_directions(n: int, cfg: EstimatorConfig, rng) -> np.ndarray:
    rng = make_rng(rng)
    if cfg.sampling_mode == "orthonormal_frame":
        return sample_orthonormal_frame(n, cfg.B, rng).T.copy()
    return sample_unit_sphere_batch(n, cfg.B, rng)


def signed_mean(signs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """(1/B) sum_i s_i rows[i], accumulated in index order."""
    acc = np.zeros(rows.shape[1])
    for s, r in zip(signs, rows):
        if s > 0:
            acc += r
        else:
            acc -= r
    return acc / len(rows)


def estimate_raw(p: Projection, oracle: DifferenceOracle, cfg: EstimatorConfig, rng,
                 directions: np.ndarray | None = None) -> GradientEstimate:
    """Low-dimensional estimate (1/B) sum_i sgn(S(f(delta u_i))) u_i using exactly B queries.

    ``directions`` overrides sampling (rows are the u_i) so several estimators can
    share one sample stream.
    """
    if directions is None:
        directions = sample_directions(p.n, cfg, rng)
    else:
        directions = np.asarray(directions, dtype=float)
        if directions.shape != (cfg.B, p.n):
            raise ValueError(f"directions must have shape ({cfg.B}, {p.n})")
    points = p.apply_batch(cfg.delta * directions)
    before, ties_before = oracle.query_count, oracle.tie_count
    signs = oracle.query_signs(points)
    used = oracle.query_count - before
    tied = oracle.tie_count > ties_before
    return GradientEstimate(signed_mean(signs, directions), signs, directions, used, tied)


def lift_estimate(p: Projection, e: GradientEstimate, cfg: EstimatorConfig) -> GradientEstimate:
    mode = cfg.resolve_lift(p)
    if mode == "precise":
        if not p.has_jacobian:
            raise ValueError(f"precise lift needs a Jacobian; {p.kind} projection has none")
        e.lifted = p.jacobian_at_base() @ e.raw_low
    else:
        images = p.apply_batch(e.directions) - p.x_b
        e.lifted = signed_mean(e.signs, images)
    e.lift_mode = mode
    return e


def omega_proxy(p: Projection, e: GradientEstimate, lifted: np.ndarray | None = None) -> float:
    """Share of probes whose queried sign disagrees with the sign of
    <lifted, f(u_i) - x_b>; a zero inner product counts as +1.
    """
    lifted = e.lifted if lifted is None else lifted
    if lifted is None:
        raise ValueError("estimate has not been lifted")
    images = p.apply_batch(e.directions) - p.x_b
    agree_sign = np.where(images @ lifted >= 0, 1, -1)
    return float(np.mean(agree_sign != e.signs))


def cosine_to_truth(e: GradientEstimate, truth: GroundTruth, x_b: np.ndarray) -> float:
    if e.lifted is None:
        raise ValueError("estimate has not been lifted")
    g = truth.gradient(x_b)
    ng, nl = np.linalg.norm(g), np.linalg.norm(e.lifted)
    if ng == 0 or nl == 0:
        raise UndefinedCosineError("zero vector in cosine")
    return float(np.clip(e.lifted @ g / (nl * ng), -1.0, 1.0))


def estimate_gradient(p: Projection, oracle: DifferenceOracle, cfg: EstimatorConfig, rng,
                      directions: np.ndarray | None = None, with_proxy: bool = True) -> GradientEstimate:
    """estimate_raw + lift_estimate (+ omega proxy)."""
    e = lift_estimate(p, estimate_raw(p, oracle, cfg, rng, directions), cfg)
    if with_proxy:
        e.omega_proxy = omega_proxy(p, e)
    return e

"""Boundary attack: estimate the gradient at a boundary point, step along it,
bisect back toward the target, repeat until the query budget runs out.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimator import EstimatorConfig, default_delta, estimate_gradient
from .numerics import make_rng
from .projections import Projection
from .victims import DifferenceOracle

__all__ = [
    "AttackError",
    "PreconditionError",
    "TrivialInstanceError",
    "AttackConfig",
    "BoundaryResult",
    "StepResult",
    "AttackTrace",
    "binary_search_to_boundary",
    "step_size_search",
    "run_attack",
]

XI_MIN_FACTOR = 1e-12
EVENTS = ("init", "grad_est", "step", "binsearch")


class AttackError(ValueError):
    pass


class PreconditionError(AttackError):
    pass


class TrivialInstanceError(AttackError):
    pass


@dataclass
class AttackConfig:
    budget: int
    theta: float = 1e-3
    initial_B: int = 100
    max_B: int | None = None
    max_iterations: int = 100_000
    seed: int = 0
    sampling_mode: str = "orthonormal_frame"
    lift_mode: str | None = None
    delta: float | None = None  # fixed probe radius; default theta * sqrt(m) * d_t
    success_mse: float = 1e-4
    keep_points: bool = False

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.initial_B < 1:
            raise ValueError("initial_B must be >= 1")

    def batch_size(self, t: int, n: int) -> int:
        """B_t = initial_B * sqrt(t), capped at n for frame sampling and at max_B."""
        B = int(self.initial_B * math.sqrt(t))
        if self.sampling_mode == "orthonormal_frame":
            B = min(B, n)
        if self.max_B is not None:
            B = min(B, self.max_B)
        return max(B, 1)


class _Budget(DifferenceOracle):
    """Counting view over another oracle; refuses to go past the budget."""

    def __init__(self, inner: DifferenceOracle, budget: int):
        super().__init__(inner.dim, None, inner.y_ben, inner.y_mal)
        self.inner = inner
        self.budget = budget

    @property
    def remaining(self) -> int:
        return self.budget - self._count

    @property
    def tie_count(self) -> int:
        return self.inner.tie_count

    def query_sign(self, x):
        if self.remaining < 1:
            raise RuntimeError("query budget exhausted")
        before = self.inner.query_count
        try:
            return self.inner.query_sign(x)
        finally:
            self._bump(self.inner.query_count - before)

    def query_signs(self, X):
        X = np.asarray(X, dtype=float)
        k = 1 if X.ndim == 1 else len(X)
        if self.remaining < k:
            raise RuntimeError("query budget exhausted")
        before = self.inner.query_count
        try:
            return self.inner.query_signs(X)
        finally:
            self._bump(self.inner.query_count - before)


@dataclass
class BoundaryResult:
    point: np.ndarray
    alpha: float  # adversarial blend weight toward x_tgt
    alpha_benign: float  # smallest known non-adversarial weight
    queries: int


def binary_search_to_boundary(oracle: DifferenceOracle, x_hat, x_tgt, theta: float,
                              max_queries: int | None = None,
                              check_endpoints: bool = True) -> BoundaryResult:
    """Bisect alpha in p(alpha) = alpha x_tgt + (1 - alpha) x_hat.

    Returns the largest alpha known to be adversarial; the benign bracket end is
    within ``theta`` of it unless ``max_queries`` cut the search short.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_tgt = np.asarray(x_tgt, dtype=float)
    used = 0
    if check_endpoints:
        used += 2
        if oracle.query_sign(x_tgt) == 1:
            raise TrivialInstanceError("target point is already adversarial")
        if oracle.query_sign(x_hat) != 1:
            raise PreconditionError("starting point is not adversarial")
    lo, hi = 0.0, 1.0
    while hi - lo > theta:
        if max_queries is not None and used >= max_queries:
            break
        mid = (lo + hi) / 2.0
        used += 1
        if oracle.query_sign(mid * x_tgt + (1.0 - mid) * x_hat) == 1:
            lo = mid
        else:
            hi = mid
    return BoundaryResult(lo * x_tgt + (1.0 - lo) * x_hat, lo, hi, used)


@dataclass
class StepResult:
    x_hat: np.ndarray
    xi: float
    queries: int
    progressed: bool


def step_size_search(oracle: DifferenceOracle, x_t, direction, d_t: float, t: int,
                     max_queries: int | None = None) -> StepResult:
    """Geometric step search: xi = d_t / sqrt(t), halved until x_t + xi * direction is adversarial."""
    x_t = np.asarray(x_t, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-10:
        raise ValueError("direction must be a unit vector")
    xi = d_t / math.sqrt(t)
    xi_min = XI_MIN_FACTOR * d_t
    used = 0
    while xi >= xi_min:
        if max_queries is not None and used >= max_queries:
            break
        cand = x_t + xi * direction
        used += 1
        if oracle.query_sign(cand) == 1:
            return StepResult(cand, xi, used, True)
        xi /= 2.0
    return StepResult(x_t, 0.0, used, False)


@dataclass
class AttackTrace:
    m: int
    rows: list = field(default_factory=list)  # (queries, l2, mse, event)
    points: list = field(default_factory=list)
    x_adv: np.ndarray | None = None
    success: bool = False
    truncated: bool = False
    iterations: int = 0

    def add(self, queries: int, x: np.ndarray, x_tgt: np.ndarray, event: str, keep: bool) -> None:
        l2 = float(np.linalg.norm(x - x_tgt))
        self.rows.append((int(queries), l2, l2 * l2 / self.m, event))
        if keep:
            self.points.append(np.array(x))

    @property
    def queries(self) -> int:
        return self.rows[-1][0] if self.rows else 0

    @property
    def final_mse(self) -> float:
        return self.rows[-1][2] if self.rows else math.inf

    def mse_at(self, queries: int) -> float:
        """MSE of the last row spending at most ``queries`` (inf before the first row)."""
        best = math.inf
        for q, _, mse, _ in self.rows:
            if q > queries:
                break
            best = mse
        return best

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("queries,l2,mse,event\n")
        for q, l2, mse, ev in self.rows:
            buf.write(f"{q},{l2:.17g},{mse:.17g},{ev}\n")
        return buf.getvalue()


def run_attack(oracle: DifferenceOracle, projection_factory: Callable[[np.ndarray], Projection],
               x_src, x_tgt, cfg: AttackConfig) -> AttackTrace:
    """Targeted L2 boundary attack from adversarial ``x_src`` toward benign ``x_tgt``.

    ``projection_factory(x_b)`` builds the projection anchored at the current
    boundary point.  Every phase stops cleanly when the budget is used up.
    """
    x_src = np.asarray(x_src, dtype=float)
    x_tgt = np.asarray(x_tgt, dtype=float)
    m = len(x_tgt)
    keep = cfg.keep_points
    budget = _Budget(oracle, cfg.budget)
    trace = AttackTrace(m)
    rng = make_rng(cfg.seed)

    def finish():
        trace.x_adv = x_adv
        trace.success = bool(trace.rows) and trace.final_mse <= cfg.success_mse
        return trace

    x_adv = x_src
    # preconditions, counted against the budget
    if budget.query_sign(x_src) != 1:
        raise PreconditionError("source point is not adversarial")
    if budget.remaining < 1:
        trace.truncated = True
        return finish()
    if budget.query_sign(x_tgt) == 1:
        raise TrivialInstanceError("target point is already adversarial")
    trace.add(budget.query_count, x_src, x_tgt, "init", keep)

    if budget.remaining < 1:
        trace.truncated = True
        return finish()
    res = binary_search_to_boundary(budget, x_src, x_tgt, cfg.theta,
                                    max_queries=budget.remaining, check_endpoints=False)
    x_adv = res.point
    trace.add(budget.query_count, x_adv, x_tgt, "binsearch", keep)

    t = 0
    while t < cfg.max_iterations and budget.remaining > 0:
        t += 1
        trace.iterations = t
        d_t = float(np.linalg.norm(x_adv - x_tgt))
        if d_t == 0.0:
            break
        p = projection_factory(x_adv)
        delta = cfg.delta if cfg.delta is not None else default_delta(cfg.theta, m, d_t)
        step = None
        for _ in range(2):
            B = min(cfg.batch_size(t, p.n), budget.remaining)
            if B < 1:
                break
            est_cfg = EstimatorConfig(B, delta, cfg.sampling_mode, cfg.lift_mode)
            est = estimate_gradient(p, budget, est_cfg, rng, with_proxy=False)
            trace.add(budget.query_count, x_adv, x_tgt, "grad_est", keep)
            norm = float(np.linalg.norm(est.lifted))
            if norm > 0 and budget.remaining > 0:
                step = step_size_search(budget, x_adv, est.lifted / norm, d_t, t,
                                        max_queries=budget.remaining)
                if step.queries:
                    trace.add(budget.query_count, step.x_hat, x_tgt, "step", keep)
                if step.progressed:
                    break
            # no progress: retry once with a halved probe radius, then give up the iteration
            delta /= 2.0
        if step is None or not step.progressed:
            continue
        if budget.remaining < 1:
            x_adv = step.x_hat
            break
        res = binary_search_to_boundary(budget, step.x_hat, x_tgt, cfg.theta,
                                        max_queries=budget.remaining, check_endpoints=False)
        x_adv = res.point
        trace.add(budget.query_count, x_adv, x_tgt, "binsearch", keep)
    trace.truncated = budget.remaining == 0
    return finish()

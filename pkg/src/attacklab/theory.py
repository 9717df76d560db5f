"""Closed forms and Monte Carlo checks for the estimator's cosine guarantees.

Covers the projected inner-product law p_a, the constant c_n, the indicator
omega (general, linear-projection and constructed-nonlinear forms), the
two-sided cosine bound, and experiment drivers that compare those formulas
with seeded simulations.  Every driver returns a JSON-ready report dict.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .estimator import EstimatorConfig, cosine_to_truth, estimate_gradient
from .numerics import (DomainError, log_beta, make_rng, sample_orthonormal_frame,
                       sample_unit_sphere, sample_unit_sphere_batch, spawn_rngs)
from .projections import orthonormal_projection
from .scenarios import aligned_frame, random_quadratic
from .victims import make_linear_victim

__all__ = [
    "InvalidProfileError",
    "AssumptionViolatedError",
    "SmoothnessProfile",
    "CosineBounds",
    "compute_cn",
    "pa_pdf",
    "pa_cdf",
    "compute_omega",
    "compute_omega_linear",
    "compute_omega_thm2",
    "theorem1_bounds",
    "ks_statistic",
    "verify_lemma1",
    "verify_lemma4",
    "verify_theorem1_sandwich",
    "fit_query_complexity",
    "omega_correlation_sweep",
    "make_report",
]

PDF_CAP = 1e308  # stands in for the integrable +inf at x = +-1 when n = 2
KS_COEF_1PCT = 1.63
CDF_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = leggauss(32)


class InvalidProfileError(ValueError):
    pass


class AssumptionViolatedError(ValueError):
    """omega exceeds the projected alignment, so the lower bound is undefined."""


@dataclass(frozen=True)
class SmoothnessProfile:
    L_f: float
    l_f: float
    beta_f: float
    L_S: float
    beta_S: float
    delta: float
    n: int
    B: int
    proj_align: float  # ||grad f^T grad S||
    grad_norm: float  # ||grad S||

    def __post_init__(self):
        reals = ("L_f", "l_f", "beta_f", "L_S", "beta_S", "delta", "proj_align", "grad_norm")
        for name in reals:
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidProfileError(f"{name} must be a finite non-negative real, got {v}")
        if self.l_f > self.L_f:
            raise InvalidProfileError("l_f must not exceed L_f")
        if not self.delta > 0:
            raise InvalidProfileError("delta must be positive")
        if self.n < 1 or self.B < 1 or self.B > self.n:
            raise InvalidProfileError(f"need 1 <= B <= n, got B={self.B}, n={self.n}")
        if self.proj_align > self.L_f * self.grad_norm * (1 + 1e-12):
            raise InvalidProfileError("proj_align cannot exceed L_f * grad_norm")

    @classmethod
    def from_dict(cls, doc: dict) -> "SmoothnessProfile":
        try:
            kw = {k: doc[k] for k in cls.__dataclass_fields__}
        except KeyError as exc:
            raise InvalidProfileError(f"profile missing field {exc.args[0]!r}") from None
        kw["n"], kw["B"] = int(kw["n"]), int(kw["B"])
        return cls(**{k: (v if k in ("n", "B") else float(v)) for k, v in kw.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CosineBounds:
    lower: float
    upper: float
    relaxed_lower: float


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n}")
    return int(n)


def compute_cn(n: int) -> float:
    """c_n = 2 sqrt(n) / (Beta((n-1)/2, 1/2) (n-1))."""
    n = _check_n(n)
    return math.exp(math.log(2.0) + 0.5 * math.log(n) - log_beta((n - 1) / 2, 0.5) - math.log(n - 1))


def pa_pdf(n: int, x):
    """Density of <u, v> for u uniform on S^{n-1} and fixed unit v.

    For n = 2 the density is infinite at +-1; those endpoints return PDF_CAP.
    """
    n = _check_n(n)
    xa = np.asarray(x, dtype=float)
    if np.any(~(np.abs(xa) <= 1)):
        raise DomainError("pa_pdf is defined on [-1, 1]")
    lb = log_beta((n - 1) / 2, 0.5)
    one_minus = 1.0 - xa * xa
    with np.errstate(divide="ignore"):
        out = np.power(one_minus, (n - 3) / 2) / math.exp(lb)
    if n == 2:
        out = np.where(one_minus == 0, PDF_CAP, out)
    return float(out) if out.ndim == 0 else out


def _half_mass(n: int, a: np.ndarray) -> np.ndarray:
    """int_0^{asin a} cos^{n-2}(phi) dphi for a in [0, 1], by Gauss-Legendre
    panels that are doubled until two successive refinements agree."""
    phi_max = np.arcsin(a)
    if n == 2:
        return phi_max
    panels = 1
    prev = None
    while True:
        edges = np.linspace(0.0, 1.0, panels + 1)
        # panel midpoints/half-widths in units of phi_max
        mid = (edges[:-1] + edges[1:]) / 2
        half = (edges[1:] - edges[:-1]) / 2
        s = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        vals = np.cos(phi_max[:, None] * s[None, :]) ** (n - 2)
        cur = phi_max * (vals @ w)
        if prev is not None and np.max(np.abs(cur - prev), initial=0.0) < CDF_TOL:
            return cur
        if panels >= 64:
            return cur
        prev = cur
        panels *= 2


def pa_cdf(n: int, x):
    """P(<u, v> <= x); exactly 0.5 at x = 0 and exact at the endpoints."""
    n = _check_n(n)
    xa = np.asarray(x, dtype=float)
    if np.any(~(np.abs(xa) <= 1)):
        raise DomainError("pa_cdf is defined on [-1, 1]")
    flat = xa.ravel()
    a = np.abs(flat)
    total = math.exp(log_beta((n - 1) / 2, 0.5))
    mass = _half_mass(n, a) / total
    out = np.where(flat >= 0, 0.5 + mass, 0.5 - mass)
    out = np.where(flat == 0, 0.5, out)
    out = np.where(flat == 1, 1.0, np.where(flat == -1, 0.0, out))
    out = np.clip(out, 0.0, 1.0).reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


def compute_omega(p: SmoothnessProfile) -> float:
    d = p.delta
    return d * (0.5 * p.beta_f * p.L_S + 0.5 * p.beta_S * p.L_f ** 2
                + 0.5 * d * p.beta_f * p.beta_S * p.L_f + 0.125 * d * d * p.beta_f ** 2 * p.beta_S)


def compute_omega_linear(p: SmoothnessProfile) -> float:
    """Indicator for a linear projection (beta_f = 0)."""
    return 0.5 * p.delta * p.beta_S * p.L_f ** 2


def compute_omega_thm2(p: SmoothnessProfile) -> float:
    """Indicator for the constructed nonlinear projection; below the linear one when all terms are positive."""
    return compute_omega_linear(p) - 0.2 * p.beta_f * p.beta_S * p.delta ** 2 * p.L_f


def theorem1_bounds(p: SmoothnessProfile, omega: float) -> CosineBounds:
    if omega < 0:
        raise ValueError("omega must be non-negative")
    if omega > p.proj_align:
        raise AssumptionViolatedError(
            f"omega={omega:.6g} exceeds projected alignment {p.proj_align:.6g}")
    if p.n < 2:
        raise DomainError("the cosine bounds need n >= 2")
    cn = compute_cn(p.n)
    scale = math.sqrt(p.B / p.n) * cn
    ratio = omega / p.proj_align if p.proj_align > 0 else 0.0
    bracket = 2.0 * (1.0 - ratio ** 2) ** ((p.n - 1) / 2) - 1.0
    lower = bracket * p.proj_align / (p.L_f * p.grad_norm) * scale
    upper = p.proj_align / (p.l_f * p.grad_norm) * scale if p.l_f > 0 else math.inf
    relaxed = (1.0 - (p.n - 1) * ratio ** 2) * p.proj_align / (p.L_f * p.grad_norm) * scale
    return CosineBounds(float(lower), float(upper), float(relaxed))


def make_report(check: str, parameters: dict, statistic, bounds, passed: bool, **extra) -> dict:
    return {"check": check, "parameters": parameters, "statistic": statistic,
            "bounds": bounds, "pass": bool(passed), **extra}


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance between a sample and a CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    N = len(x)
    F = cdf(x)
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - F), np.max(F - (i - 1) / N)))


def verify_lemma1(n: int, samples: int = 100_000, rng=0) -> dict:
    """KS test of <u, v> (u uniform on the sphere, v fixed) against pa_cdf at the 1% level."""
    n = _check_n(n)
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = make_rng(rng)
    v = sample_unit_sphere(n, rng)
    dots = np.clip(sample_unit_sphere_batch(n, samples, rng) @ v, -1.0, 1.0)
    stat = ks_statistic(dots, lambda x: pa_cdf(n, x))
    crit = KS_COEF_1PCT / math.sqrt(samples)
    return make_report("lemma1_ks", {"n": n, "samples": samples}, stat,
                       {"critical_1pct": crit}, stat < crit)


def verify_lemma4(n_max: int = 200, margin: float = 1e-12) -> dict:
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    cs = {n: compute_cn(n) for n in range(2, n_max + 3)}
    lo, hi = 2 / math.pi, 1.0
    in_range = [n for n in range(2, n_max + 1) if not (lo + margin < cs[n] < hi - margin)]
    not_decreasing = [n for n in range(2, n_max + 1) if not cs[n + 2] < cs[n] - margin]
    c2_err = abs(cs[2] - 2 * math.sqrt(2) / math.pi)
    ok = not in_range and not not_decreasing and c2_err < 1e-12
    return make_report("lemma4_cn", {"n_max": n_max, "margin": margin},
                       {"min_cn": min(cs[n] for n in range(2, n_max + 1)),
                        "max_cn": max(cs[n] for n in range(2, n_max + 1)), "c2_error": c2_err},
                       {"lower": lo, "upper": hi}, ok,
                       range_failures=in_range, monotone_failures=not_decreasing)


def _quadratic_boundary_point(w, b, H, rng, scale: float) -> np.ndarray:
    """Root of w.z + z^T H z / 2 on the line z0 + t w closest to z0, z0 ~ scale * N(0, I)."""
    while True:
        z0 = scale * rng.standard_normal(len(w))
        qa = 0.5 * w @ H @ w
        qb = w @ w + z0 @ H @ w
        qc = w @ z0 + 0.5 * z0 @ H @ z0
        if qa == 0:
            return b + z0 - (qc / qb) * w
        disc = qb * qb - 4 * qa * qc
        if disc < 0:
            continue
        # numerically stable pair of roots
        q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
        roots = [q / qa] + ([qc / q] if q != 0 else [])
        t = min(roots, key=abs)
        return b + z0 + t * w


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def verify_theorem1_sandwich(case: str = "linear", trials: int = 2000, rng=0, m: int = 256,
                             n: int = 16, B: int = 16, alignment: float = 0.7,
                             omega_ratio: float = 0.1, beta_S: float = 1.0) -> dict:
    """Monte Carlo mean cosine versus the averaged per-trial two-sided bound.

    case "linear": S(x) = w.x, projection W with ||W^T w|| = alignment, omega = 0.
    case "quadratic": random quadratic victim; each trial picks a boundary point,
    a frame aligned with the local gradient, and the probe radius that makes
    omega / proj_align equal ``omega_ratio`` (omega = delta beta_S L_f^2 / 2, L_f = l_f = 1).
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    if case not in ("linear", "quadratic"):
        raise ValueError(f"unknown case {case!r}")
    seed_rng = make_rng(rng)
    base_seed = int(seed_rng.integers(2 ** 63))
    setup = make_rng(base_seed)
    if case == "linear":
        w = sample_unit_sphere(m, setup)
        oracle, truth = make_linear_victim(w)
    else:
        oracle, truth, (wq, bq, Hq) = random_quadratic(m, beta_S, seed=int(setup.integers(2 ** 63)))
    cn = compute_cn(n)
    cos, lows, ups, aligns, skipped = [], [], [], [], 0
    for r in spawn_rngs(base_seed, trials):
        if case == "linear":
            x_b = np.zeros(m)
        else:
            x_b = _quadratic_boundary_point(wq, bq, Hq, r, scale=0.05)
        g = truth.gradient(x_b)
        W = aligned_frame(m, n, g, alignment, r)
        pa = float(np.linalg.norm(W.T @ g))
        gn = float(np.linalg.norm(g))
        if case == "linear":
            omega, delta = 0.0, 1.0
        else:
            omega = omega_ratio * pa
            delta = 2 * omega / truth.beta_S
        prof = SmoothnessProfile(1.0, 1.0, 0.0, gn, truth.beta_S, delta, n, B, pa, gn)
        try:
            bnd = theorem1_bounds(prof, omega)
        except AssumptionViolatedError:
            skipped += 1
            continue
        p = orthonormal_projection(W, x_b)
        e = estimate_gradient(p, oracle, EstimatorConfig(B, delta), r, with_proxy=False)
        cos.append(cosine_to_truth(e, truth, x_b))
        lows.append(bnd.lower)
        ups.append(bnd.upper)
        aligns.append(pa / gn)
    mean, se = _mean_se(cos)
    lower, upper = float(np.mean(lows)), float(np.mean(ups))
    ok = lower - 3 * se <= mean <= upper + 3 * se
    extra = {}
    if case == "linear":
        collapsed = float(np.mean(aligns)) * math.sqrt(B / n) * cn
        extra["collapsed"] = collapsed
        extra["collapsed_gap"] = abs(mean - collapsed)
    params = {"case": case, "trials": trials, "m": m, "n": n, "B": B, "alignment": alignment,
              "omega_ratio": omega_ratio if case == "quadratic" else 0.0, "beta_S": beta_S,
              "seed": base_seed}
    return make_report("theorem1_sandwich", params, {"mean_cos": mean, "stderr": se},
                       {"lower": lower, "upper": upper}, ok, mean_alignment=float(np.mean(aligns)),
                       skipped=skipped, **extra)


def fit_query_complexity(B_list=(4, 8, 16, 32, 64), trials: int = 200, rng=0, m: int = 256,
                         n: int = 64, alignment: float = 0.7) -> dict:
    """Fit mean cosine s(B) = a sqrt(B) through the origin (linear victim, orthonormal projection).

    R^2 is the centered coefficient of determination of that fit.
    """
    B_list = [int(b) for b in B_list]
    if any(b > n or b < 1 for b in B_list):
        raise ValueError(f"every B must lie in [1, n={n}]")
    setup = make_rng(rng)
    base_seed = int(setup.integers(2 ** 63))
    w = sample_unit_sphere(m, setup)
    oracle, truth = make_linear_victim(w)
    x_b = np.zeros(m)
    rows = []
    for k, B in enumerate(B_list):
        cs = []
        for r in spawn_rngs(base_seed + k, trials):
            W = aligned_frame(m, n, w, alignment, r)
            p = orthonormal_projection(W, x_b)
            e = estimate_gradient(p, oracle, EstimatorConfig(B, 1.0), r, with_proxy=False)
            cs.append(cosine_to_truth(e, truth, x_b))
        mean, se = _mean_se(cs)
        rows.append({"B": B, "mean_cos": mean, "stderr": se})
    s = np.array([r["mean_cos"] for r in rows])
    x = np.sqrt(np.array(B_list, dtype=float))
    a = float(x @ s / (x @ x))
    ss_res = float(np.sum((s - a * x) ** 2))
    ss_tot = float(np.sum((s - s.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    predicted_slope = alignment * compute_cn(n) / math.sqrt(n)
    params = {"B_list": B_list, "trials": trials, "m": m, "n": n, "alignment": alignment,
              "seed": base_seed}
    return make_report("query_complexity_fit", params, {"slope": a, "r2": r2},
                       {"r2_min": 0.95, "predicted_slope": predicted_slope}, r2 > 0.95, table=rows)


def omega_correlation_sweep(betas=None, trials: int = 20, rng=0, m: int = 128, n: int = 32,
                            delta: float = 0.05) -> dict:
    """Pearson correlation between the omega proxy and the true cosine as curvature grows.

    Quadratic victims centred at b (an exact boundary point with gradient w,
    ||w|| = 1) with spectral radius beta_S; random orthonormal projections;
    normalized-Gaussian probes with B = n.  Frame sampling is avoided because with
    a linear projection it makes the proxy identically zero.
    """
    betas = list(np.geomspace(0.1, 3000.0, 12)) if betas is None else [float(b) for b in betas]
    setup = make_rng(rng)
    base_seed = int(setup.integers(2 ** 63))
    rows = []
    cfg = EstimatorConfig(n, delta, "normalized_gaussian")
    for k, beta in enumerate(betas):
        oracle, truth, (w, b, H) = random_quadratic(m, beta, seed=base_seed + k)
        for r in spawn_rngs(base_seed + k, trials):
            W = sample_orthonormal_frame(m, n, r)
            p = orthonormal_projection(W, b)
            e = estimate_gradient(p, oracle, cfg, r)
            rows.append({"beta_S": beta, "omega_proxy": e.omega_proxy,
                         "cos": cosine_to_truth(e, truth, b)})
    px = np.array([r["omega_proxy"] for r in rows])
    cs = np.array([r["cos"] for r in rows])
    corr = float(np.corrcoef(px, cs)[0, 1]) if px.std() > 0 and cs.std() > 0 else float("nan")
    params = {"betas": betas, "trials": trials, "m": m, "n": n, "delta": delta, "seed": base_seed}
    return make_report("omega_proxy_correlation", params, {"pearson_r": corr},
                       {"max_r": -0.3}, corr < -0.3, rows=rows)

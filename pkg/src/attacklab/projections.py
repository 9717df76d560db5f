"""Projections f: R^n -> R^m used to shape estimation probes.

Every projection is anchored so that the latent origin maps onto the current
boundary point ``x_b``; ``apply(v)`` takes a latent point and ``jacobian(v)``
returns the m x n derivative there.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import make_rng, sample_unit_sphere, spectral_extremes

__all__ = [
    "InvalidProjectionError",
    "InvalidParameterError",
    "DecoderFormatError",
    "Projection",
    "ProjectionSpec",
    "identity_projection",
    "orthonormal_projection",
    "upsample_projection",
    "upsample_matrix",
    "constructed_nonlinear_b",
    "constructed_nonlinear_a",
    "decoder_projection",
    "load_decoder",
    "finite_difference_jacobian",
    "measure_projection_constants",
]

ORTHO_TOL = 1e-10
BETA_SAMPLES = 256


class InvalidProjectionError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


class DecoderFormatError(ValueError):
    pass


@dataclass
class Projection:
    kind: str
    n: int
    m: int
    x_b: np.ndarray
    _apply: Callable[[np.ndarray], np.ndarray]
    _jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    linear: bool = False
    info: dict = field(default_factory=dict)

    @property
    def base(self) -> np.ndarray:
        return np.zeros(self.n)

    @property
    def has_jacobian(self) -> bool:
        return self._jacobian is not None

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(v, dtype=float))

    def apply_batch(self, V: np.ndarray) -> np.ndarray:
        """Rows of V are latent points; returns rows of ambient points."""
        V = np.asarray(V, dtype=float)
        if self.linear:
            J = self.jacobian_at_base()
            return self.x_b + V @ J.T
        return np.array([self.apply(v) for v in V])

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        if self._jacobian is None:
            raise InvalidProjectionError(f"{self.kind} projection has no Jacobian")
        return self._jacobian(np.asarray(v, dtype=float))

    def jacobian_at_base(self) -> np.ndarray:
        return self.jacobian(self.base)


def _as_point(x_b) -> np.ndarray:
    x_b = np.asarray(x_b, dtype=float)
    if x_b.ndim != 1 or x_b.size == 0 or not np.all(np.isfinite(x_b)):
        raise InvalidProjectionError("boundary point must be a finite non-empty vector")
    return x_b


def identity_projection(x_b) -> Projection:
    x_b = _as_point(x_b)
    m = len(x_b)
    eye = np.eye(m)
    return Projection("identity", m, m, x_b, lambda v: x_b + v, lambda v: eye, linear=True)


def orthonormal_projection(W, x_b) -> Projection:
    """apply(v) = x_b + W v for W with orthonormal columns."""
    x_b = _as_point(x_b)
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != len(x_b) or W.shape[1] > W.shape[0]:
        raise InvalidProjectionError(f"W must be {len(x_b)} x n with n <= {len(x_b)}")
    if np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) > ORTHO_TOL:
        raise InvalidProjectionError("W does not have orthonormal columns")
    return Projection("orthonormal", W.shape[1], W.shape[0], x_b,
                      lambda v: x_b + W @ v, lambda v: W, linear=True)


def _interp_1d(n_side: int, m_side: int) -> np.ndarray:
    # half-pixel aligned linear interpolation with periodic wrap, so every
    # column is a shifted copy of the same kernel
    k = m_side // n_side
    M = np.zeros((m_side, n_side))
    for i in range(m_side):
        s = (i + 0.5) / k - 0.5
        j0 = int(np.floor(s))
        t = s - j0
        M[i, j0 % n_side] += 1.0 - t
        M[i, (j0 + 1) % n_side] += t
    return M


def upsample_matrix(n_side: int, m_side: int, channels: int = 1) -> np.ndarray:
    """Bilinear upsampling (per channel, row-major pixels) with unit-norm columns."""
    if n_side < 1 or m_side < 1 or channels < 1:
        raise InvalidProjectionError("sides and channels must be positive")
    if m_side % n_side:
        raise InvalidProjectionError(f"m_side={m_side} is not a multiple of n_side={n_side}")
    M = _interp_1d(n_side, m_side)
    U2 = np.kron(M, M)
    U = np.kron(np.eye(channels), U2)
    return U / np.linalg.norm(U, axis=0)


def upsample_projection(n_side: int, m_side: int, channels: int, x_b) -> Projection:
    x_b = _as_point(x_b)
    U = upsample_matrix(n_side, m_side, channels)
    if U.shape[0] != len(x_b):
        raise InvalidProjectionError(f"upsampled size {U.shape[0]} != boundary point dim {len(x_b)}")
    p = Projection("upsample", U.shape[1], U.shape[0], x_b,
                   lambda v: x_b + U @ v, lambda v: U, linear=True)
    p.info.update(n_side=n_side, m_side=m_side, channels=channels)
    return p


def constructed_nonlinear_b(J, x_b, alpha: float, beta_f: float | None = None) -> Projection:
    """f'(u) = x_b + J u - alpha/2 ||u|| J u.

    Shares value and Jacobian with the linear map ``x_b + J u`` at the origin
    and is beta_f-smooth for alpha <= 0.8 beta_f / L_f.  When ``beta_f`` is not
    given the smallest admissible value, 1.25 alpha L_f, is declared.
    """
    x_b = _as_point(x_b)
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != len(x_b):
        raise InvalidProjectionError("J rows must match the boundary point dim")
    L_f, l_f = spectral_extremes(J)
    if not alpha >= 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    if beta_f is None:
        beta_f = 1.25 * alpha * L_f
    elif alpha > 0.8 * beta_f / L_f * (1 + 1e-12):
        raise InvalidParameterError(f"alpha={alpha} exceeds 0.8 beta_f / L_f = {0.8 * beta_f / L_f}")

    def apply(u):
        Ju = J @ u
        return x_b + Ju - 0.5 * alpha * np.linalg.norm(u) * Ju

    def jac(u):
        r = np.linalg.norm(u)
        if r == 0:
            return J
        return (1 - 0.5 * alpha * r) * J - (0.5 * alpha / r) * np.outer(J @ u, u)

    p = Projection("constructed_b", J.shape[1], J.shape[0], x_b, apply, jac)
    p.info.update(alpha=alpha, beta_f=beta_f, L_f=L_f, l_f=l_f)
    return p


def constructed_nonlinear_a(J, x_b, grad_S, k: float,
                            beta_f: float | None = None, L_S: float | None = None) -> Projection:
    """f'(u) = x_b + J u + 1/2 sgn(<u,v>) <u,v>^2 k grad_S with v = J^T grad_S / ||J^T grad_S||.

    Needs the victim's true gradient, so it only serves white-box theory checks.
    """
    x_b = _as_point(x_b)
    J = np.asarray(J, dtype=float)
    g = np.asarray(grad_S, dtype=float)
    if J.ndim != 2 or J.shape[0] != len(x_b) or g.shape != x_b.shape:
        raise InvalidProjectionError("J / grad_S shapes do not match the boundary point")
    if not np.any(g):
        raise InvalidParameterError("grad_S must be nonzero")
    if not k >= 0:
        raise InvalidParameterError(f"k must be >= 0, got {k}")
    if L_S is None:
        L_S = float(np.linalg.norm(g))
    if beta_f is not None and k > beta_f / L_S * (1 + 1e-12):
        raise InvalidParameterError(f"k={k} exceeds beta_f / L_S = {beta_f / L_S}")
    Jg = J.T @ g
    nJg = np.linalg.norm(Jg)
    if nJg == 0:
        raise InvalidParameterError("J^T grad_S vanishes; direction v undefined")
    v = Jg / nJg

    def apply(u):
        t = float(u @ v)
        return x_b + J @ u + 0.5 * np.sign(t) * t * t * k * g

    def jac(u):
        return J + k * abs(float(u @ v)) * np.outer(g, v)

    p = Projection("constructed_a", J.shape[1], J.shape[0], x_b, apply, jac)
    p.info.update(k=k, v=v, whitebox=True)
    return p


@dataclass
class Decoder:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    acts: list[str]

    @property
    def n(self) -> int:
        return self.weights[0].shape[1]

    @property
    def m(self) -> int:
        return self.weights[-1].shape[0]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        h = v
        for W, c, a in zip(self.weights, self.biases, self.acts):
            h = W @ h + c
            if a == "tanh":
                h = np.tanh(h)
        return h

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        h = v
        J = np.eye(len(v))
        for W, c, a in zip(self.weights, self.biases, self.acts):
            h = W @ h + c
            J = W @ J
            if a == "tanh":
                h = np.tanh(h)
                J = (1.0 - h * h)[:, None] * J
        return J


def load_decoder(source) -> Decoder:
    """Parse the decoder JSON format from a path or an already-loaded dict."""
    try:
        if isinstance(source, dict):
            doc = source
        else:
            with open(source) as fh:
                doc = json.load(fh)
        layers = doc["layers"]
        n, m = int(doc["n"]), int(doc["m"])
        weights, biases, acts = [], [], []
        for layer in layers:
            W = np.asarray(layer["w"], dtype=float)
            c = np.asarray(layer["b"], dtype=float)
            a = layer.get("act", "tanh")
            if W.ndim != 2 or c.shape != (W.shape[0],) or a not in ("tanh", "id"):
                raise DecoderFormatError("bad layer entry")
            weights.append(W)
            biases.append(c)
            acts.append(a)
    except DecoderFormatError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DecoderFormatError(f"cannot parse decoder: {exc}") from exc
    if not weights:
        raise DecoderFormatError("decoder has no layers")
    for a, b in zip(weights[:-1], weights[1:]):
        if b.shape[1] != a.shape[0]:
            raise DecoderFormatError("layer shapes do not chain")
    dec = Decoder(weights, biases, acts)
    if dec.n != n or dec.m != m:
        raise DecoderFormatError(f"declared n={n}, m={m} but layers give n={dec.n}, m={dec.m}")
    return dec


def decoder_projection(weight_file, x_b) -> Projection:
    """apply(v) = x_b + D(v) - D(0)."""
    x_b = _as_point(x_b)
    dec = weight_file if isinstance(weight_file, Decoder) else load_decoder(weight_file)
    if dec.m != len(x_b):
        raise InvalidProjectionError(f"decoder outputs {dec.m} values, boundary point has {len(x_b)}")
    d0 = dec(np.zeros(dec.n))
    return Projection("decoder", dec.n, dec.m, x_b,
                      lambda v: x_b + (dec(v) - d0), dec.jacobian)


def finite_difference_jacobian(p: Projection, v: np.ndarray, h: float = 1e-6) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    J = np.empty((p.m, p.n))
    for j in range(p.n):
        e = np.zeros(p.n)
        e[j] = h
        J[:, j] = (p.apply(v + e) - p.apply(v - e)) / (2 * h)
    return J


def measure_projection_constants(p: Projection, delta: float, samples: int = BETA_SAMPLES,
                                 rng=0) -> tuple[float, float, float]:
    """(L_f, l_f, beta_f) around the latent origin.

    L_f and l_f are the singular value extremes of the base Jacobian.  beta_f is
    the largest ratio ||grad f(x) - grad f(x')||_2 / ||x - x'|| over ``samples``
    random pairs in the radius-``delta`` ball, with finite-difference Jacobians.
    Being a sampled supremum it can only under-estimate the true constant.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = make_rng(rng)
    L_f, l_f = spectral_extremes(p.jacobian_at_base() if p.has_jacobian
                                 else finite_difference_jacobian(p, p.base))
    h = 1e-6 * max(delta, 1e-3)
    beta = 0.0
    for _ in range(samples):
        a = sample_unit_sphere(p.n, rng) * delta * rng.uniform() ** (1.0 / p.n)
        b = sample_unit_sphere(p.n, rng) * delta * rng.uniform() ** (1.0 / p.n)
        dist = np.linalg.norm(a - b)
        if dist < 1e-3 * delta:
            continue
        Ja = finite_difference_jacobian(p, a, h)
        Jb = finite_difference_jacobian(p, b, h)
        beta = max(beta, float(np.linalg.norm(Ja - Jb, 2)) / dist)
    return L_f, l_f, beta


@dataclass
class ProjectionSpec:
    """Projection recipe minus the boundary point, which changes every iteration."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("identity", "orthonormal", "upsample", "constructed_a", "constructed_b", "decoder")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ProjectionSpec":
        import os

        if not isinstance(doc, dict) or doc.get("kind") not in cls.KINDS:
            raise InvalidProjectionError(f"projection kind must be one of {cls.KINDS}")
        params = {k: v for k, v in doc.items() if k != "kind"}
        kind = doc["kind"]
        if kind == "orthonormal":
            params["W"] = np.asarray(params["W"], dtype=float)
            W = params["W"]
            if W.ndim != 2 or np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) > ORTHO_TOL:
                raise InvalidProjectionError("W does not have orthonormal columns")
        elif kind == "constructed_b":
            params["J"] = np.asarray(params["J"], dtype=float)
            L_f, _ = spectral_extremes(params["J"])
            beta_f = params.get("beta_f")
            if beta_f is not None and params["alpha"] > 0.8 * beta_f / L_f * (1 + 1e-12):
                raise InvalidParameterError("alpha outside [0, 0.8 beta_f / L_f]")
        elif kind == "constructed_a":
            params["J"] = np.asarray(params["J"], dtype=float)
        elif kind == "decoder":
            path = params["path"]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            params["decoder"] = load_decoder(path)
        elif kind == "upsample":
            upsample_matrix(int(params["n_side"]), int(params["m_side"]), int(params.get("channels", 1)))
        return cls(kind, params)

    @classmethod
    def load(cls, path) -> "ProjectionSpec":
        import os

        with open(path) as fh:
            doc = json.load(fh)
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    @property
    def whitebox(self) -> bool:
        return self.kind == "constructed_a"

    def latent_dim(self, m: int) -> int:
        p = self.params
        if self.kind == "identity":
            return m
        if self.kind == "orthonormal":
            return p["W"].shape[1]
        if self.kind == "upsample":
            return int(p.get("channels", 1)) * int(p["n_side"]) ** 2
        if self.kind in ("constructed_a", "constructed_b"):
            return p["J"].shape[1]
        return p["decoder"].n

    def factory(self, truth=None) -> Callable[[np.ndarray], Projection]:
        """Callable x_b -> Projection.  ``truth`` is required for constructed_a."""
        p = self.params
        kind = self.kind
        if kind == "identity":
            return identity_projection
        if kind == "orthonormal":
            return lambda x_b: orthonormal_projection(p["W"], x_b)
        if kind == "upsample":
            return lambda x_b: upsample_projection(int(p["n_side"]), int(p["m_side"]),
                                                   int(p.get("channels", 1)), x_b)
        if kind == "constructed_b":
            return lambda x_b: constructed_nonlinear_b(p["J"], x_b, float(p["alpha"]), p.get("beta_f"))
        if kind == "constructed_a":
            if truth is None:
                raise InvalidProjectionError("constructed_a is white-box only and needs the victim gradient")
            return lambda x_b: constructed_nonlinear_a(p["J"], x_b, truth.gradient(x_b), float(p["k"]),
                                                       p.get("beta_f"), p.get("L_S"))
        return lambda x_b: decoder_projection(p["decoder"], x_b)

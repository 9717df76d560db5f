"""Victim models seen only through the sign of their difference function.

``S(x) = score[y_mal] - score[y_ben]``; an input is adversarial when
``S(x) >= 0`` (the exact boundary counts as adversarial so that bisection has a
well-defined answer).  Every built-in victim also exposes a ``GroundTruth``
with the analytic value and gradient, used only for measurement.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import make_rng, sample_unit_sphere_batch

__all__ = [
    "VictimError",
    "DegenerateVictimError",
    "InvalidVictimError",
    "DifferenceOracle",
    "GroundTruth",
    "VictimSpec",
    "make_linear_victim",
    "make_quadratic_victim",
    "make_mlp_victim",
    "build_victim",
    "load_victim_spec",
]

LOCAL_CONST_DIRECTIONS = 64


class VictimError(ValueError):
    pass


class DegenerateVictimError(VictimError):
    pass


class InvalidVictimError(VictimError):
    pass


def sign_of(values: np.ndarray) -> np.ndarray:
    """+1 where value >= 0, else -1."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int64)


class DifferenceOracle:
    """Sign-only access to a difference function, with an exact query counter.

    ``batch_fn`` maps a (k, m) array to k real values of S; only their signs
    ever leave this object.
    """

    def __init__(self, dim: int, batch_fn: Callable[[np.ndarray], np.ndarray],
                 y_ben: int = 0, y_mal: int = 1):
        self.dim = int(dim)
        self.y_ben = y_ben
        self.y_mal = y_mal
        self._batch_fn = batch_fn
        self._count = 0
        self._ties = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    @property
    def tie_count(self) -> int:
        """Queries that landed exactly on S = 0 (diagnostic only, never used by attacks)."""
        return self._ties

    def _bump(self, k: int, ties: int = 0) -> None:
        with self._lock:
            self._count += k
            self._ties += ties

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"query of dim {X.shape[-1]} sent to a dim-{self.dim} victim")
        return X

    def query_sign(self, x: np.ndarray) -> int:
        x = self._check(x)
        s = self._batch_fn(x[None, :])
        self._bump(1, int(s[0] == 0))
        return int(sign_of(s)[0])

    def query_signs(self, X: np.ndarray) -> np.ndarray:
        """Signs for each row of ``X``; counts one query per row, results in row order."""
        X = self._check(X)
        if X.ndim == 1:
            X = X[None, :]
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        vals = self._batch_fn(X)
        self._bump(len(X), int(np.count_nonzero(vals == 0)))
        return sign_of(vals)


@dataclass
class GroundTruth:
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    beta_S: float | None = None  # exact smoothness when known

    def value(self, x: np.ndarray) -> float:
        return float(self.value_fn(np.asarray(x, dtype=float)[None, :])[0])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.grad_fn(np.asarray(x, dtype=float))

    def local_constants(self, x: np.ndarray, r: float, rng=0,
                        directions: int = LOCAL_CONST_DIRECTIONS) -> tuple[float, float]:
        """(L_S, beta_S) around ``x`` within radius ``r``.

        L_S is the largest gradient norm seen at x + t d, t in {0, r/2, r}, over
        sampled unit directions d.  beta_S is the exact value when the victim
        knows it, otherwise the largest pairwise gradient-difference ratio over
        the same points (a lower estimate of the supremum).
        """
        x = np.asarray(x, dtype=float)
        rng = make_rng(rng)
        dirs = sample_unit_sphere_batch(len(x), directions, rng)
        pts = [x]
        for t in (r / 2, r):
            pts.extend(x + t * d for d in dirs)
        pts = np.array(pts)
        grads = np.array([self.gradient(p) for p in pts])
        L = float(np.max(np.linalg.norm(grads, axis=1)))
        if self.beta_S is not None:
            return L, float(self.beta_S)
        beta = 0.0
        for i in range(len(pts)):
            dx = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
            dg = np.linalg.norm(grads[i + 1:] - grads[i], axis=1)
            ok = dx > 0
            if np.any(ok):
                beta = max(beta, float(np.max(dg[ok] / dx[ok])))
        return L, beta


def _vec(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidVictimError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(a)):
        raise InvalidVictimError(f"{name} has non-finite entries")
    return a


def make_linear_victim(w, b=None) -> tuple[DifferenceOracle, GroundTruth]:
    """S(x) = w . (x - b)."""
    w = _vec(w, "w")
    b = np.zeros_like(w) if b is None else _vec(b, "b")
    if b.shape != w.shape:
        raise InvalidVictimError("w and b dimensions differ")
    if np.linalg.norm(w) == 0:
        raise DegenerateVictimError("zero normal vector")

    def values(X):
        return (X - b) @ w

    truth = GroundTruth(values, lambda x: w.copy(), beta_S=0.0)
    return DifferenceOracle(len(w), values), truth


def make_quadratic_victim(w, b, H) -> tuple[DifferenceOracle, GroundTruth]:
    """S(x) = w . (x - b) + 1/2 (x - b)^T H (x - b)."""
    w = _vec(w, "w")
    b = _vec(b, "b")
    H = np.asarray(H, dtype=float)
    m = len(w)
    if b.shape != (m,) or H.shape != (m, m):
        raise InvalidVictimError("inconsistent quadratic victim dimensions")
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
        raise InvalidVictimError("H must be symmetric")
    H = 0.5 * (H + H.T)
    beta = float(np.max(np.abs(np.linalg.eigvalsh(H)))) if m else 0.0

    def values(X):
        D = X - b
        return D @ w + 0.5 * np.einsum("ki,ij,kj->k", D, H, D)

    def grad(x):
        return w + H @ (x - b)

    return DifferenceOracle(m, values), GroundTruth(values, grad, beta_S=beta)


@dataclass
class MLP:
    """tanh network; the last layer is affine (logits)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = X
        last = len(self.weights) - 1
        for i, (W, c) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + c
            if i < last:
                h = np.tanh(h)
        return h

    def diff_grad(self, x: np.ndarray, y_mal: int, y_ben: int) -> np.ndarray:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, c) in enumerate(zip(self.weights, self.biases)):
            h = W @ h + c
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        g = np.zeros(len(acts[-1]))
        g[y_mal] += 1.0
        g[y_ben] -= 1.0
        for i in range(last, -1, -1):
            if i < last:
                g = g * (1.0 - acts[i + 1] ** 2)
            g = self.weights[i].T @ g
        return g


def make_mlp_victim(layers: Sequence[tuple], activation: str = "tanh",
                    y_ben: int = 0, y_mal: int = 1) -> tuple[DifferenceOracle, GroundTruth]:
    """Victim from ``[(W1, b1), ..., (WL, bL)]`` with W of shape (out, in)."""
    if activation != "tanh":
        raise InvalidVictimError(f"unsupported activation {activation!r}")
    if not layers:
        raise InvalidVictimError("need at least one layer")
    weights, biases = [], []
    prev = None
    for W, c in layers:
        W = np.asarray(W, dtype=float)
        c = np.asarray(c, dtype=float)
        if W.ndim != 2 or c.shape != (W.shape[0],):
            raise InvalidVictimError("layer weight/bias shapes do not match")
        if prev is not None and W.shape[1] != prev:
            raise InvalidVictimError(f"layer expects {W.shape[1]} inputs, previous emits {prev}")
        prev = W.shape[0]
        weights.append(W)
        biases.append(c)
    C = weights[-1].shape[0]
    if C < 2:
        raise InvalidVictimError("need at least two classes")
    if y_ben == y_mal or not (0 <= y_ben < C and 0 <= y_mal < C):
        raise InvalidVictimError("labels must be distinct class indices")
    net = MLP(weights, biases)

    def values(X):
        z = net.logits(X)
        return z[:, y_mal] - z[:, y_ben]

    truth = GroundTruth(values, lambda x: net.diff_grad(x, y_mal, y_ben))
    oracle = DifferenceOracle(weights[0].shape[1], values, y_ben=y_ben, y_mal=y_mal)
    return oracle, truth


@dataclass
class VictimSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        p = self.params
        if self.kind in ("linear", "quadratic"):
            return len(p["w"])
        if self.kind == "mlp":
            return len(p["layers"][0]["w"][0])
        if self.kind == "remote":
            return int(p["dim"])
        raise InvalidVictimError(f"unknown victim kind {self.kind!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "VictimSpec":
        if not isinstance(doc, dict) or "kind" not in doc:
            raise InvalidVictimError("victim spec needs a 'kind' field")
        kind = doc["kind"]
        params = {k: v for k, v in doc.items() if k != "kind"}
        required = {
            "linear": ("w",),
            "quadratic": ("w", "b", "H"),
            "mlp": ("layers",),
            "remote": ("address", "dim"),
        }
        if kind not in required:
            raise InvalidVictimError(f"unknown victim kind {kind!r}")
        missing = [k for k in required[kind] if k not in params]
        if missing:
            raise InvalidVictimError(f"{kind} victim missing fields: {', '.join(missing)}")
        spec = cls(kind, params)
        spec.dim  # shape sanity
        return spec

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def build_victim(spec: VictimSpec) -> tuple[DifferenceOracle, GroundTruth]:
    """Local victim for a spec; remote specs go through ``remote.connect_remote_victim``."""
    p = spec.params
    if spec.kind == "linear":
        return make_linear_victim(p["w"], p.get("b"))
    if spec.kind == "quadratic":
        return make_quadratic_victim(p["w"], p["b"], p["H"])
    if spec.kind == "mlp":
        layers = [(layer["w"], layer["b"]) for layer in p["layers"]]
        return make_mlp_victim(layers, p.get("activation", "tanh"),
                               int(p.get("y_ben", 0)), int(p.get("y_mal", 1)))
    raise InvalidVictimError(f"{spec.kind} victims are not local")


def load_victim_spec(path) -> VictimSpec:
    import json

    with open(path) as fh:
        return VictimSpec.from_dict(json.load(fh))


def random_mlp_layers(sizes: Sequence[int], rng, scale: float = 1.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gaussian layers with 1/sqrt(fan_in) scaling, e.g. sizes = [32, 16, 16, 3]."""
    rng = make_rng(rng)
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = scale * rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
        c = 0.1 * rng.standard_normal(fan_out)
        layers.append((W, c))
    return layers

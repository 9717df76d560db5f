"""Reference implementations that share no code with the package under test."""
import math

import mpmath
import numpy as np
from scipy.special import betainc


def jacobi_singular_values(J, sweeps=60):
    """One-sided Jacobi rotations on the columns of J."""
    A = np.array(J, dtype=float, copy=True)
    n = A.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = A[:, p] @ A[:, p]
                b = A[:, q] @ A[:, q]
                c = A[:, p] @ A[:, q]
                if abs(c) < 1e-300:
                    continue
                off = max(off, abs(c) / math.sqrt(a * b))
                zeta = (b - a) / (2 * c)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1 + zeta * zeta))
                cs = 1 / math.sqrt(1 + t * t)
                sn = cs * t
                Ap = A[:, p].copy()
                A[:, p] = cs * Ap - sn * A[:, q]
                A[:, q] = sn * Ap + cs * A[:, q]
        if off < 1e-15:
            break
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


def cn_reference(n):
    mpmath.mp.dps = 40
    return float(2 * mpmath.sqrt(n) / (mpmath.beta(mpmath.mpf(n - 1) / 2, mpmath.mpf(1) / 2) * (n - 1)))


def pa_cdf_reference(n, x):
    x = np.asarray(x, dtype=float)
    half = 0.5 * betainc(0.5, (n - 1) / 2, x * x)
    return np.where(x >= 0, 0.5 + half, 0.5 - half)


def sign_mean_loop(signs, rows):
    """(1/B) sum_i s_i rows[i] with an explicit Python loop."""
    acc = np.zeros(len(rows[0]))
    for s, r in zip(signs, rows):
        acc = acc + s * r
    return acc / len(rows)


def central_difference_gradient(fn, x, h=None):
    x = np.asarray(x, dtype=float)
    h = 1e-5 * (1 + np.linalg.norm(x)) if h is None else h
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def central_difference_jacobian(fn, v, h=1e-6):
    v = np.asarray(v, dtype=float)
    cols = []
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        cols.append((fn(v + e) - fn(v - e)) / (2 * h))
    return np.column_stack(cols)


def ks_two_sided(samples, cdf):
    from scipy.stats import kstest

    return kstest(samples, cdf).statistic

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from attacklab.numerics import DomainError
from attacklab.theory import (PDF_CAP, AssumptionViolatedError, InvalidProfileError, SmoothnessProfile,
                              compute_cn, compute_omega, compute_omega_linear, compute_omega_thm2,
                              fit_query_complexity, pa_cdf, pa_pdf, theorem1_bounds, verify_lemma1,
                              verify_lemma4, verify_theorem1_sandwich)
from oracles import cn_reference, pa_cdf_reference


def profile(**kw):
    base = dict(L_f=1.0, l_f=1.0, beta_f=0.0, L_S=1.0, beta_S=1.0, delta=0.1, n=16, B=16,
                proj_align=1.0, grad_norm=1.0)
    base.update(kw)
    return SmoothnessProfile(**base)


def test_cn_examples():
    assert compute_cn(2) == pytest.approx(2 * math.sqrt(2) / math.pi, abs=1e-12)
    assert compute_cn(3) == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    assert 2 / math.pi < compute_cn(10_000) < 1
    with pytest.raises(DomainError):
        compute_cn(1)


@pytest.mark.parametrize("n", [2, 3, 5, 17, 64, 200, 1000])
def test_cn_against_high_precision(n):
    assert compute_cn(n) == pytest.approx(cn_reference(n), rel=1e-12)


def test_pdf_examples():
    for x in (-0.9, 0.0, 0.3):
        assert pa_pdf(3, x) == pytest.approx(0.5, abs=1e-15)
    assert pa_pdf(5, 1.0) == 0.0 and pa_pdf(5, -1.0) == 0.0
    assert pa_pdf(2, 0.0) == pytest.approx(1 / math.pi, rel=1e-14)
    assert pa_pdf(2, 1.0) == PDF_CAP
    with pytest.raises(DomainError):
        pa_pdf(4, 1.01)


@pytest.mark.parametrize("n", [2, 3, 4, 8, 16, 64])
def test_pdf_integrates_to_one(n):
    total, _ = quad(lambda x: pa_pdf(n, x), -1, 1, epsabs=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


@given(n=st.integers(2, 300), x=st.floats(-1, 1))
def test_pdf_symmetry_exact(n, x):
    assert pa_pdf(n, x) == pa_pdf(n, -x)


def test_cdf_examples():
    for n in (2, 3, 7, 64):
        assert pa_cdf(n, -1.0) == 0.0 and pa_cdf(n, 1.0) == 1.0 and pa_cdf(n, 0.0) == 0.5
    assert pa_cdf(3, 0.5) == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(DomainError):
        pa_cdf(3, -1.5)


@given(n=st.integers(2, 250), x=st.floats(-1, 1))
def test_cdf_against_incomplete_beta(n, x):
    assert abs(pa_cdf(n, x) - float(pa_cdf_reference(n, x))) < 1e-9


def test_omega_examples():
    p = profile(delta=0.1, beta_f=1.0, L_S=2.0, beta_S=2.0, L_f=1.0)
    assert compute_omega(p) == pytest.approx(0.21025, abs=1e-15)
    assert compute_omega_thm2(p) == pytest.approx(0.096, abs=1e-15)
    assert compute_omega(profile(beta_S=0.0)) == 0.0
    p0 = profile(beta_f=0.0, beta_S=3.0, L_f=0.5, l_f=0.5, delta=0.2, proj_align=0.4)
    assert compute_omega(p0) == compute_omega_linear(p0) == compute_omega_thm2(p0)


@given(beta_f=st.floats(1e-3, 10), beta_S=st.floats(1e-3, 10), delta=st.floats(1e-3, 1),
       L_f=st.floats(1e-2, 10))
def test_thm2_omega_strictly_below(beta_f, beta_S, delta, L_f):
    p = profile(beta_f=beta_f, beta_S=beta_S, delta=delta, L_f=L_f, l_f=L_f, proj_align=L_f)
    assert compute_omega_thm2(p) < compute_omega_linear(p)


def test_bounds_examples():
    b = theorem1_bounds(profile(), 0.0)
    assert b.lower == pytest.approx(compute_cn(16), rel=1e-15)
    assert b.upper == pytest.approx(compute_cn(16), rel=1e-15)
    p = profile(proj_align=0.5)
    b = theorem1_bounds(p, 0.5)
    assert b.lower == pytest.approx(-0.5 * compute_cn(16), rel=1e-14)
    b = theorem1_bounds(profile(), 0.1)
    assert b.lower == pytest.approx((2 * 0.99 ** 7.5 - 1) * compute_cn(16), rel=1e-14)
    assert b.relaxed_lower <= b.lower
    with pytest.raises(AssumptionViolatedError):
        theorem1_bounds(profile(proj_align=0.2), 0.3)


def test_profile_validation():
    with pytest.raises(InvalidProfileError):
        profile(l_f=2.0)
    with pytest.raises(InvalidProfileError):
        profile(B=17)
    with pytest.raises(InvalidProfileError):
        profile(delta=0.0)
    with pytest.raises(InvalidProfileError):
        profile(proj_align=2.0)
    doc = profile().to_dict()
    assert SmoothnessProfile.from_dict(doc) == profile()
    del doc["n"]
    with pytest.raises(InvalidProfileError):
        SmoothnessProfile.from_dict(doc)


def test_bounds_monotone_on_grids():
    for n in (3, 8, 16, 64):
        for B in range(1, n + 1, max(1, n // 8)):
            prev = math.inf
            for r in np.linspace(0, 1, 21):
                b = theorem1_bounds(profile(n=n, B=B), r)
                assert b.lower <= b.upper + 1e-15
                assert b.lower <= prev + 1e-15
                assert b.relaxed_lower <= b.lower + 1e-15
                prev = b.lower
        for r in np.linspace(0, 1, 21):
            lows = [theorem1_bounds(profile(n=n, B=B), r).lower for B in range(1, n + 1)]
            if lows[0] >= 0:
                assert all(a <= b + 1e-15 for a, b in zip(lows, lows[1:]))


@given(n=st.integers(3, 300), r=st.floats(0, 1), a=st.floats(0.05, 1))
def test_relaxed_bound_never_exceeds_exact(n, r, a):
    p = profile(n=n, B=n, proj_align=a)
    b = theorem1_bounds(p, r * a)
    assert b.relaxed_lower <= b.lower + 1e-12


def test_lemma4_report():
    r = verify_lemma4(200)
    assert r["pass"] and not r["range_failures"] and not r["monotone_failures"]
    evens = [compute_cn(n) for n in range(2, 40, 2)]
    assert all(a > b for a, b in zip(evens, evens[1:]))


@pytest.mark.parametrize("n", [2, 3, 64])
def test_lemma1_report(n):
    r = verify_lemma1(n, 20_000, rng=n)
    assert r["pass"] and r["statistic"] < r["bounds"]["critical_1pct"]
    with pytest.raises(ValueError):
        verify_lemma1(n, 100)


def test_sandwich_lower_bound_at_half_ratio():
    r = verify_theorem1_sandwich("quadratic", trials=500, rng=4, omega_ratio=0.5)
    assert r["bounds"]["lower"] - 3 * r["statistic"]["stderr"] <= r["statistic"]["mean_cos"]
    assert r["pass"]


def test_query_complexity_shape():
    r = fit_query_complexity([4, 8, 16], trials=200, rng=2, m=128, n=16, alignment=0.8)
    s = {row["B"]: row["mean_cos"] for row in r["table"]}
    assert s[8] / s[4] == pytest.approx(math.sqrt(2), rel=0.1)
    assert s[16] == pytest.approx(0.8 * compute_cn(16), abs=0.02)
    with pytest.raises(ValueError):
        fit_query_complexity([32], trials=10, n=16)

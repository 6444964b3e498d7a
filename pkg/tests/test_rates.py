import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from fbsecrecy.dist import ExponentialMean, Gamma, stream
from fbsecrecy.errors import DomainError, QuadratureError
from fbsecrecy.quadrature import QuadratureSettings, integrate as gk_integrate
from fbsecrecy.rates import (cell_gain_terms, conditional_upper_gain, expected_secrecy_gain, pos_log_ratio,
                             secrecy_gain_terms)

E1 = ExponentialMean(1.0)


def closed_form(tau, P, mean=1.0):
    """E[{ln((1+tau P)/(1+g P))}^+] for g ~ Exp(mean), via exponential integrals."""
    a = 1.0 / (mean * P)
    return math.log1p(tau * P) - math.exp(a) * (special.exp1(a) - special.exp1(a * (1 + tau * P)))


def nested_oracle(lo, hi, P, dm, de):
    """Literal double integral with the positive-part kink split at x = g."""
    def inner(g):
        return integrate.quad(lambda x: (math.log1p(g * P) - math.log1p(x * P)) * float(de.pdf(x)), 0, g,
                              epsabs=1e-13, epsrel=1e-12)[0]
    top = hi if np.isfinite(hi) else float(dm.quantile(1 - 1e-13))
    val = integrate.quad(lambda g: inner(g) * float(dm.pdf(g)), lo, top, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    return val / float(dm.mass(lo, hi))


def test_pos_log_ratio_examples():
    assert pos_log_ratio(1.0, 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert pos_log_ratio(1.0, 2.0, 5.0) == 0.0
    assert pos_log_ratio(3.0, 1.0, 0.0) == 0.0
    with pytest.raises(DomainError):
        pos_log_ratio(-1.0, 0.0, 1.0)


def test_reference_value_against_exponential_integral():
    oracle = math.log(2) - math.e * (special.exp1(1) - special.exp1(2))
    assert expected_secrecy_gain(1.0, 1.0, E1) == pytest.approx(oracle, abs=1e-8)


@given(tau=st.floats(1e-3, 30), logP=st.floats(-2, 5), mean=st.sampled_from([0.25, 1.0, 4.0]))
def test_matches_closed_form(tau, logP, mean):
    P = 10 ** logP
    want = closed_form(tau, P, mean)
    got = expected_secrecy_gain(tau, P, ExponentialMean(mean))
    assert got == pytest.approx(want, rel=1e-7, abs=1e-11)


def test_zero_threshold_or_power():
    assert expected_secrecy_gain(0.0, 5.0, E1) == 0.0
    assert expected_secrecy_gain(3.0, 0.0, E1) == 0.0


@given(t1=st.floats(0, 20), t2=st.floats(0, 20), P=st.floats(0.01, 1e3))
def test_monotone_and_bounded(t1, t2, P):
    lo, hi = sorted((t1, t2))
    a = expected_secrecy_gain(lo, P, E1)
    b = expected_secrecy_gain(hi, P, E1)
    assert a <= b + 1e-12
    assert b <= math.log1p(hi * P) + 1e-12


def test_derivatives_match_finite_differences():
    tau = np.array([0.3, 1.0, 4.0])
    P = np.array([0.5, 10.0, 200.0])
    tight = QuadratureSettings(rel_tol=1e-13, abs_tol=1e-16)
    S, S1, S2 = secrecy_gain_terms(tau, P, E1, tight)
    h = 1e-4 * P
    Sp, S1p, _ = secrecy_gain_terms(tau, P + h, E1, tight)
    Sm, S1m, _ = secrecy_gain_terms(tau, P - h, E1, tight)
    assert np.allclose(S1, (Sp - Sm) / (2 * h), rtol=1e-6)
    assert np.allclose(S2, (S1p - S1m) / (2 * h), rtol=1e-6)
    assert np.all(S2 < 0)


def test_cell_derivatives_match_finite_differences():
    lo = np.array([0.0, 0.5, 2.0])
    hi = np.array([0.5, 2.0, np.inf])
    P = np.array([3.0, 10.0, 40.0])
    tight = QuadratureSettings(rel_tol=1e-13, abs_tol=1e-16)
    H, H1, H2 = cell_gain_terms(lo, hi, P, E1, E1, tight)
    h = 1e-4 * P
    Hp, H1p, _ = cell_gain_terms(lo, hi, P + h, E1, E1, tight)
    Hm, H1m, _ = cell_gain_terms(lo, hi, P - h, E1, E1, tight)
    assert np.allclose(H1, (Hp - Hm) / (2 * h), rtol=1e-6)
    assert np.allclose(H2, (H1p - H1m) / (2 * h), rtol=1e-6)


@pytest.mark.parametrize("lo,hi,P,dm", [
    (1.0, 2.0, 1.0, E1),
    (0.0, 0.5, 10.0, E1),
    (3.0, np.inf, 10.0, E1),
    (0.2, 1.7, 30.0, Gamma(2, 0.5)),
])
def test_conditional_matches_nested_quadrature(lo, hi, P, dm):
    got = conditional_upper_gain(lo, hi, P, dm, E1)
    assert got == pytest.approx(nested_oracle(lo, hi, P, dm, E1), rel=1e-8)


def test_conditional_monte_carlo():
    # cell [1, 2], P = 1, main and eavesdropper both Exp(1)
    n, chunk = 10 ** 7, 10 ** 6
    c_lo, c_hi = float(E1.cdf(1.0)), float(E1.cdf(2.0))
    total = total2 = 0.0
    for c in range(n // chunk):
        u = stream(21, 0, c).random(chunk)
        gm = E1.quantile(c_lo + u * (c_hi - c_lo))
        ge = E1.sample(stream(21, 1, c), chunk)
        v = pos_log_ratio(gm, ge, 1.0)
        total += v.sum()
        total2 += (v * v).sum()
    mean = total / n
    se = math.sqrt((total2 / n - mean ** 2) / n)
    assert abs(conditional_upper_gain(1.0, 2.0, 1.0, E1, E1) - mean) < 3 * se


def test_narrow_cell_limit():
    eps = 1e-4
    assert conditional_upper_gain(2.0 - eps, 2.0 + eps, 7.0, E1, E1) == pytest.approx(
        expected_secrecy_gain(2.0, 7.0, E1), abs=1e-3)


@given(lo=st.floats(0, 8), width=st.floats(1e-3, 10), P=st.floats(0.01, 500), top=st.booleans())
def test_conditional_dominates_guaranteed_gain(lo, width, P, top):
    hi = np.inf if top else lo + width
    assert conditional_upper_gain(lo, hi, P, E1, E1) >= expected_secrecy_gain(lo, P, E1) - 1e-10


def test_zero_power_cell():
    assert conditional_upper_gain(0.5, 2.0, 0.0, E1, E1) == 0.0


def test_conditional_domain_errors():
    with pytest.raises(DomainError):
        conditional_upper_gain(2.0, 1.0, 1.0, E1, E1)
    with pytest.raises(DomainError):
        conditional_upper_gain(1e6, 2e6, 1.0, E1, E1)  # zero-probability cell


def test_saturation_at_high_power():
    for f in (lambda P: expected_secrecy_gain(2.0, P, E1),
              lambda P: conditional_upper_gain(1.0, 3.0, P, E1, E1)):
        assert abs(f(2e4) - f(1e4)) < 1e-3


def test_gauss_kronrod_engine():
    a = np.array([0.0, 0.0, 1.0])
    b = np.array([1.0, np.pi, 10.0])
    vals, errs = gk_integrate(lambda x, idx: np.stack((np.exp(x), np.sin(x))), a, b)
    assert np.allclose(vals[0], np.exp(b) - np.exp(a), rtol=1e-12)
    assert np.allclose(vals[1], np.cos(a) - np.cos(b), rtol=1e-10, atol=1e-13)
    assert np.all(errs >= 0)


def test_quadrature_reports_non_convergence():
    qs = QuadratureSettings(rel_tol=1e-14, abs_tol=1e-300, max_subdivisions=8, min_panels=1)
    with pytest.raises(QuadratureError) as info:
        gk_integrate(lambda x, idx: np.sqrt(np.abs(x - 0.3)) * np.sin(200 * x), np.array([0.0]), np.array([1.0]), qs)
    assert info.value.residual > 0


@pytest.mark.parametrize("kw", [dict(rel_tol=0), dict(tail_quantile=1.0), dict(max_subdivisions=2, min_panels=4)])
def test_settings_validation(kw):
    with pytest.raises(DomainError):
        QuadratureSettings(**kw)

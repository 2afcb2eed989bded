import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from heckselect.exceptions import DomainError
from heckselect.special_fn import (
    BivariateScale,
    UnivariateT,
    bvn_rect,
    bvt_rect,
    log_t_cdf,
    mills_ratio,
    norm_cdf,
    norm_pdf,
    t_cdf,
    t_pdf,
)

INF = np.inf


def test_norm_pdf_values():
    assert norm_pdf(0.0, 0.0, 1.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert norm_pdf(1.0, 1.0, 4.0) == pytest.approx(0.1994711402, abs=1e-10)
    # exp(-2) / sqrt(2 pi), evaluated with mpmath at 30 digits
    assert norm_pdf(2.0, 0.0, 1.0) == pytest.approx(0.053990966513188063, abs=1e-15)
    with pytest.raises(DomainError):
        norm_pdf(0.0, 0.0, 0.0)


def test_norm_cdf_values():
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(INF) == 1.0
    assert norm_cdf(1.959964) == pytest.approx(0.975, abs=1e-7)
    x = np.linspace(-6, 6, 25)
    assert np.allclose(norm_cdf(-x), 1 - norm_cdf(x), atol=1e-14)


def test_t_pdf_values():
    assert t_pdf(0.0, 0.0, 1.0, 1.0) == pytest.approx(1 / np.pi, abs=1e-12)
    assert t_pdf(0.0, 0.0, 1.0, 1e8) == pytest.approx(0.3989422, abs=1e-6)
    assert t_pdf(1.0, 0.0, 1.0, 4.0) == pytest.approx(0.21466252583997983, abs=1e-12)
    assert UnivariateT(0.0, 1.0, 4.0).pdf(1.0) == pytest.approx(0.2146625258, abs=1e-10)
    with pytest.raises(DomainError):
        UnivariateT(0.0, -1.0, 4.0)


def test_t_cdf_values():
    assert t_cdf(0.0, 0.0, 1.0, 7.0) == 0.5
    assert t_cdf(1.0, 0.0, 1.0, 1.0) == pytest.approx(0.75, abs=1e-12)
    # adaptive quadrature of the density
    ref = 0.5 + integrate.quad(lambda x: t_pdf(x, 0.0, 1.0, 4.0), 0, 2, epsabs=1e-14)[0]
    assert t_cdf(2.0, 0.0, 1.0, 4.0) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.9419417382, abs=1e-9)


def test_log_t_cdf_deep_tail_is_finite():
    v = log_t_cdf(-1e80, 0.0, 1.0, 4.0)
    assert np.isfinite(v)
    assert log_t_cdf(-30.0, 0.0, 1.0, 4.0) == pytest.approx(np.log(stats.t.cdf(-30, 4)), rel=1e-10)


def test_mills_ratio():
    assert mills_ratio(0.0) == pytest.approx(0.7978845608, abs=1e-10)
    assert mills_ratio(8.0) < 1e-14
    # phi(-8)/Phi(-8) with mpmath at 30 digits
    assert mills_ratio(-8.0) == pytest.approx(8.1213681122361775, rel=1e-12)
    assert np.isfinite(mills_ratio(-40.0))
    a = np.linspace(-40, 10, 500)
    m = mills_ratio(a)
    assert np.all(m > 0) and np.all(np.diff(m) < 0)


def test_bvn_rect_examples():
    lo, hi = (-INF, -INF), (0.0, 0.0)
    assert bvn_rect(lo, hi, (0, 0), BivariateScale(1.0, 0.0)) == pytest.approx(0.25, abs=1e-14)
    expect = 0.25 + np.arcsin(0.6) / (2 * np.pi)
    assert bvn_rect(lo, hi, (0, 0), BivariateScale(1.0, 0.6)) == pytest.approx(expect, abs=1e-13)
    assert bvn_rect((-INF, -INF), (INF, INF), (0, 0), BivariateScale(1.0, 0.3)) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        BivariateScale(1.0, 1.0)


def test_bvn_rect_against_quadrature():
    S = BivariateScale(2.0, -0.4)
    mvn = stats.multivariate_normal([0.3, -0.2], S.matrix)
    val = bvn_rect((-0.5, -1.0), (1.2, 0.7), (0.3, -0.2), S)
    ref = integrate.dblquad(lambda y, x: mvn.pdf([x, y]), -0.5, 1.2, -1.0, 0.7,
                            epsabs=1e-13)[0]
    assert val == pytest.approx(ref, abs=1e-11)


def test_bvt_rect_examples():
    lo, hi = (-INF, -INF), (0.0, 0.0)
    assert bvt_rect(lo, hi, (0, 0), BivariateScale(1.0, 0.0), 4.0) == pytest.approx(0.25, abs=1e-10)
    assert bvt_rect((-INF, -INF), (INF, INF), (0, 0), BivariateScale(1.0, 0.6), 4.0) == pytest.approx(1.0)
    # Orthant probabilities of any centred elliptical law equal the normal ones.
    val = bvt_rect(lo, hi, (0, 0), BivariateScale(1.0, 0.6), 4.0)
    assert val == pytest.approx(0.25 + np.arcsin(0.6) / (2 * np.pi), abs=1e-10)
    # Monte Carlo cross-check, 3 standard errors
    rng = np.random.default_rng(1)
    z = stats.multivariate_t([0, 0], BivariateScale(1.0, 0.6).matrix, df=4).rvs(400_000, random_state=rng)
    frac = np.mean((z[:, 0] <= 0) & (z[:, 1] <= 0))
    assert abs(frac - val) < 3 * np.sqrt(val * (1 - val) / z.shape[0])


def test_bvt_rect_generic_against_quadrature():
    S = BivariateScale(1.5, 0.35)
    mt = stats.multivariate_t([0.2, 0.1], S.matrix, df=3.5)
    val = bvt_rect((-1.0, -0.5), (0.8, 1.5), (0.2, 0.1), S, 3.5)
    ref = integrate.dblquad(lambda y, x: mt.pdf([x, y]), -1.0, 0.8, -0.5, 1.5, epsabs=1e-13)[0]
    assert val == pytest.approx(ref, abs=1e-10)


box = st.tuples(st.floats(-3, 3), st.floats(0.05, 3), st.floats(-3, 3), st.floats(0.05, 3))


@settings(max_examples=40, deadline=None)
@given(box, st.floats(-0.95, 0.95), st.floats(0.2, 4.0))
def test_normal_limit_and_additivity(b, rho, s2):
    a1, w1, a2, w2 = b
    S = BivariateScale(s2, rho)
    lo, hi = (a1, a2), (a1 + w1, a2 + w2)
    pn = bvn_rect(lo, hi, (0, 0), S)
    assert bvt_rect(lo, hi, (0, 0), S, 1e8) == pytest.approx(pn, abs=1e-6)
    mid = a1 + 0.5 * w1
    parts = bvn_rect(lo, (mid, hi[1]), (0, 0), S) + bvn_rect((mid, a2), hi, (0, 0), S)
    assert parts == pytest.approx(pn, abs=1e-10)
    pt = bvt_rect(lo, hi, (0, 0), S, 5.0)
    parts_t = bvt_rect(lo, (mid, hi[1]), (0, 0), S, 5.0) + bvt_rect((mid, a2), hi, (0, 0), S, 5.0)
    assert parts_t == pytest.approx(pt, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 2), st.floats(-0.9, 0.9))
def test_monotone_in_upper_bound(u, du, rho):
    S = BivariateScale(1.0, rho)
    lo = (-INF, -1.0)
    assert bvn_rect(lo, (u + du, 1.0), (0, 0), S) >= bvn_rect(lo, (u, 1.0), (0, 0), S) - 1e-15
    assert bvt_rect(lo, (u + du, 1.0), (0, 0), S, 3.0) >= bvt_rect(lo, (u, 1.0), (0, 0), S, 3.0) - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(-3, 3), st.floats(0.1, 5))
def test_t_pdf_normal_limit(x, mu, s2):
    assert t_pdf(x, mu, s2, 1e8) == pytest.approx(norm_pdf(x, mu, s2), abs=1e-6)


def test_degenerate_rectangle_is_zero():
    assert bvn_rect((0.0, 0.0), (0.0, 1.0), (0, 0), BivariateScale(1.0, 0.2)) == 0.0

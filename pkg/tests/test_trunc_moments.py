import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from heckselect.exceptions import DegenerateTruncationError, DomainError, MomentUndefinedError
from heckselect.special_fn import BivariateScale
from heckselect.trunc_moments import (
    SELECTION_REGION,
    TruncRegion,
    conditional_weighted_moments,
    prop2_weight,
    prop3_weight,
    tn1_moments,
    tn2_moments,
    tt1_moments,
    tt2_moments,
    weighted_moments2,
)

INF = np.inf


# Frozen values computed with mpmath quadrature at 30 digits.
def test_tn1_frozen():
    m1, m2 = tn1_moments(1.0, 4.0, 0.0, 2.0)
    assert m1 == pytest.approx(1.0, abs=1e-12)
    assert m2 == pytest.approx(1.3223566184032468, abs=1e-12)


def test_tt1_frozen():
    m1, m2 = tt1_moments(0.0, 1.0, 5.0, 0.0, INF)
    assert m1 == pytest.approx(0.94901672455623608, abs=1e-12)
    assert m2 == pytest.approx(5.0 / 3.0, abs=1e-12)


def test_tn2_frozen_selection_region():
    S = BivariateScale(1.0, 0.6)
    m = tn2_moments((0.0, 0.0), S, SELECTION_REGION.lower, SELECTION_REGION.upper)
    assert m.mass == pytest.approx(0.5, abs=1e-14)
    assert m.m1 == pytest.approx([-0.47873073648171921, -0.79788456080286536], abs=1e-12)
    assert m.m2 == pytest.approx(np.array([[1.0, 0.6], [0.6, 1.0]]), abs=1e-12)


@pytest.mark.parametrize("rho,nu,m1,m2", [
    (0.6, 4.5, [-0.58250080928344971, -0.97083468213908284], [[1.8, 1.08], [1.08, 1.8]]),
    (0.0, 6.0, [0.0, -0.91855865354369179], [[1.5, 0.0], [0.0, 1.5]]),
])
def test_tt2_frozen_selection_region(rho, nu, m1, m2):
    m = tt2_moments((0.0, 0.0), BivariateScale(1.0, rho), nu, (-INF, -INF), (INF, 0.0))
    assert m.mass == pytest.approx(0.5, abs=1e-12)
    assert m.m1 == pytest.approx(m1, abs=1e-10)
    assert m.m2 == pytest.approx(np.array(m2), abs=1e-10)


def test_region_validation():
    with pytest.raises(DomainError):
        TruncRegion((0.0, 0.0), (0.0, 1.0))
    assert SELECTION_REGION.dim == 2 and not SELECTION_REGION.bounded


def test_errors():
    with pytest.raises(DomainError):
        tn1_moments(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(DegenerateTruncationError):
        tn1_moments(0.0, 1.0, 40.0, INF)
    with pytest.raises(MomentUndefinedError):
        tt1_moments(0.0, 1.0, 2.0, 0.0, INF)
    with pytest.raises(DomainError):
        tn1_moments(0.0, -1.0, 0.0, 1.0)


def test_tn1_far_tail():
    m1, m2 = tn1_moments(0.0, 1.0, 30.0, INF)
    # E[X | X > a] = a + 1/a - 2/a^3 + ... for large a
    assert m1 == pytest.approx(30.0 + 1 / 30 - 2 / 30 ** 3 + 10 / 30 ** 5, rel=1e-9)
    assert np.isfinite(m2)


def test_prop_weights():
    assert prop2_weight(1, 7.0, 1).c_p == pytest.approx(1.0)
    assert prop2_weight(2, 7.0, 1).sigma_star_factor == pytest.approx(7 / 9)
    # d_2(1, nu, 1) = (nu + 2) (nu + 1) / (nu + 1)... evaluates to nu + 1 for r = 1
    assert prop3_weight(2, 1, 4.0, 1).d_p == pytest.approx(5.0)
    with pytest.raises(DomainError):
        prop3_weight(2, 2, 4.0, 1)


def _quad_weighted(mu, S, nu, lo, hi, r):
    Si = np.linalg.inv(S)
    dens = stats.multivariate_t(mu, S, df=nu)

    def f(k):
        def g(y, x):
            d = np.array([x, y]) - mu
            wt = ((nu + 2) / (nu + d @ Si @ d)) ** r * dens.pdf([x, y])
            return wt * [1.0, x, y, x * x, x * y, y * y][k]
        return integrate.dblquad(g, lo[0], hi[0], lo[1], hi[1], epsabs=1e-12)[0]

    vals = np.array([f(k) for k in range(6)])
    mass = integrate.dblquad(lambda y, x: dens.pdf([x, y]), lo[0], hi[0], lo[1], hi[1],
                             epsabs=1e-13)[0]
    return vals / mass


def test_weighted_moments_against_quadrature():
    mu = np.array([0.3, -0.2])
    S = BivariateScale(1.3, 0.4).matrix
    lo, hi = np.array([-1.5, -2.0]), np.array([1.0, 0.5])
    e0, e1, e2 = weighted_moments2(mu[None], S, 5.0, lo, hi)
    ref = _quad_weighted(mu, S, 5.0, lo, hi, 1.0)
    got = [e0[0], e1[0, 0], e1[0, 1], e2[0, 0, 0], e2[0, 0, 1], e2[0, 1, 1]]
    assert got == pytest.approx(ref, abs=1e-7)


def test_conditional_weighted_against_quadrature():
    nu, mu, S = 4.5, np.array([0.2, 0.4]), BivariateScale(1.5, -0.5).matrix
    y1 = 1.1
    e0, e1, e2 = conditional_weighted_moments(np.array([y1]), mu[None], S, nu, -INF, 0.0)
    Si = np.linalg.inv(S)
    dens = stats.multivariate_t(mu, S, df=nu)

    def integ(k):
        def g(y2):
            d = np.array([y1, y2]) - mu
            return ((nu + 2) / (nu + d @ Si @ d)) * dens.pdf([y1, y2]) * y2 ** k
        return integrate.quad(g, -INF, 0.0, epsabs=1e-13)[0]

    norm = integrate.quad(lambda y2: dens.pdf([y1, y2]), -INF, 0.0, epsabs=1e-13)[0]
    ref = [integ(k) / norm for k in range(3)]
    assert [e0[0], e1[0], e2[0]] == pytest.approx(ref, abs=1e-8)


def _quad_uni(mu, s2, nu, lo, hi):
    law = stats.norm(mu, np.sqrt(s2)) if np.isinf(nu) else stats.t(nu, mu, np.sqrt(s2))
    mass = law.cdf(hi) - law.cdf(lo)
    pts = [integrate.quad(lambda x, k=k: x ** k * law.pdf(x), lo, hi, epsabs=1e-13, limit=200,
                          points=None if not (np.isfinite(lo) and np.isfinite(hi)) else [mu])[0]
           for k in (1, 2)]
    return np.array(pts) / mass


bounds = st.sampled_from(["both", "lower", "upper"])


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(0.2, 4), st.floats(-2, 1.5), st.floats(0.3, 3),
       bounds, st.sampled_from([np.inf, 3.5, 6.0, 15.0]))
def test_univariate_against_quadrature(mu, s2, a, w, kind, nu):
    lo = a if kind != "upper" else -INF
    hi = a + w if kind != "lower" else INF
    ref = _quad_uni(mu, s2, nu, lo, hi)
    got = tn1_moments(mu, s2, lo, hi) if np.isinf(nu) else tt1_moments(mu, s2, nu, lo, hi)
    assert np.asarray(got, float) == pytest.approx(ref, abs=1e-6)


def test_vectorised_univariate_matches_scalar():
    mu = np.linspace(-3, 3, 7)
    m1, m2 = tt1_moments(mu, 1.5, 4.0, -INF, 0.0)
    for i, m in enumerate(mu):
        a, b = tt1_moments(m, 1.5, 4.0, -INF, 0.0)
        assert m1[i] == pytest.approx(a, abs=1e-14) and m2[i] == pytest.approx(b, abs=1e-14)

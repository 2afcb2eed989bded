"""Moments of doubly truncated normal and Student-t laws (dimension 1 and 2).

The closed forms reduce every moment to univariate densities and CDFs of
lower dimension.  For the t law the reduction uses the identity

    z t_p(z | 0, S, nu) = -K S grad g(z),   g(z) = (1 + delta(z)/nu)^(-(nu+p-2)/2),

where ``g`` is proportional to a t density with ``nu - 2`` degrees of freedom
and scale ``nu S / (nu - 2)``.  Integrating over a rectangle turns the first
and second moments into boundary terms (one-dimensional t densities times
conditional t CDFs) plus a rectangle probability.  When the truncation mass
falls below ``QUAD_FALLBACK_MASS``, or the closed form is unavailable for
small ``nu`` on a bounded region, adaptive quadrature is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .exceptions import DegenerateTruncationError, DomainError, MomentUndefinedError
from .special_fn import (
    _as_matrix,
    bvn_rect,
    bvt_rect,
    log_norm_interval,
    norm_logpdf,
    norm_pdf,
    t_interval,
    t_pdf,
)

MIN_MASS = 1e-300
QUAD_FALLBACK_MASS = 1e-12


@dataclass(frozen=True)
class TruncRegion:
    """Rectangle ``{x : lower <= x <= upper}`` (scalar or pair bounds)."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(~(lo < hi)):
            raise DomainError("TruncRegion requires lower < upper componentwise")

    @property
    def dim(self):
        return np.atleast_1d(self.lower).size

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))


# Region of the latent pair when the outcome is missing: Y2 <= 0, Y1 free.
SELECTION_REGION = TruncRegion((-np.inf, -np.inf), (np.inf, 0.0))


@dataclass(frozen=True)
class TruncMoments2:
    """First moment ``m1 = E[W]`` and raw second moment ``m2 = E[W W^T]``."""

    m1: np.ndarray
    m2: np.ndarray
    mass: float = np.nan

    @property
    def cov(self):
        return self.m2 - np.outer(self.m1, self.m1)


@dataclass(frozen=True)
class MomentWeights:
    """Constants of the weighted truncated-t moment identities.

    ``c_p`` multiplies the unconditional identity, ``d_p`` the conditional
    one.  ``sigma_star_factor`` is the ratio between the scale of the
    reweighted law and the original scale: ``nu / (nu + 2 r)`` for the
    unconditional identity and ``(nu + p1) / (nu + p1 + 2 r)`` for the
    conditional one.
    """

    c_p: float | None
    d_p: float | None
    sigma_star_factor: float


def prop2_weight(p, nu, r):
    """Constant ``c_p(nu, r)`` and scale factor of the unconditional identity."""
    if not nu + 2 * r > 0 or not nu > 0:
        raise DomainError("need nu > 0 and nu + 2r > 0")
    logc = (r * np.log((nu + p) / nu)
            + special.gammaln(0.5 * (p + nu)) + special.gammaln(0.5 * (nu + 2 * r))
            - special.gammaln(0.5 * nu) - special.gammaln(0.5 * (p + nu + 2 * r)))
    return MomentWeights(c_p=float(np.exp(logc)), d_p=None,
                         sigma_star_factor=nu / (nu + 2 * r))


def prop3_weight(p, p1, nu, r):
    """Constant ``d_p(p1, nu, r)`` and scale factor of the conditional identity."""
    if not (0 < p1 < p) or not nu > 0 or not nu + p1 + 2 * r > 0:
        raise DomainError("need 0 < p1 < p, nu > 0 and nu + p1 + 2r > 0")
    logd = (r * np.log(nu + p)
            + special.gammaln(0.5 * (p + nu)) + special.gammaln(0.5 * (p1 + nu + 2 * r))
            - special.gammaln(0.5 * (p1 + nu)) - special.gammaln(0.5 * (p + nu + 2 * r)))
    return MomentWeights(c_p=None, d_p=float(np.exp(logd)),
                         sigma_star_factor=(nu + p1) / (nu + p1 + 2 * r))


# ---------------------------------------------------------------------------
# Univariate
# ---------------------------------------------------------------------------

def _reflect(a, b):
    flip = a > 0
    return flip, np.where(flip, -b, a), np.where(flip, -a, b)


def _fin(x):
    return np.where(np.isfinite(x), x, 0.0)


def tn1_moments(mu, sigma2, lower=-np.inf, upper=np.inf):
    """``(E[W], E[W^2])`` for ``W ~ TN(mu, sigma2; [lower, upper])``.

    Broadcasts over arrays.  Ratios are taken in log space, so regions far
    in either tail keep full relative accuracy.

    Raises
    ------
    DegenerateTruncationError
        If the region has mass below 1e-300 under the parent law.
    """
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(~(sigma2 > 0)):
        raise DomainError("sigma2 must be > 0")
    s = np.sqrt(sigma2)
    alpha = (np.asarray(lower, dtype=float) - mu) / s
    beta = (np.asarray(upper, dtype=float) - mu) / s
    if np.any(~(alpha < beta)):
        raise DomainError("region must satisfy lower < upper")
    flip, a, b = _reflect(alpha, beta)
    logp = log_norm_interval(a, b)
    if np.any(logp < np.log(MIN_MASS)):
        raise DegenerateTruncationError("truncation region has mass < 1e-300")
    ra = np.exp(norm_logpdf(a) - logp)
    rb = np.exp(norm_logpdf(b) - logp)
    ez = ra - rb
    ez2 = 1.0 + _fin(a) * ra - _fin(b) * rb
    ez = np.where(flip, -ez, ez)
    m1 = mu + s * ez
    m2 = mu * mu + 2.0 * mu * s * ez + sigma2 * ez2
    return m1, m2


def _std_t_first(a, b, d):
    """``int_a^b x t_d(x) dx`` for the standard t law, ``d > 1``."""
    ta = np.where(np.isfinite(a), t_pdf(_fin(a), 0.0, 1.0, d) * (d + _fin(a) ** 2), 0.0)
    tb = np.where(np.isfinite(b), t_pdf(_fin(b), 0.0, 1.0, d) * (d + _fin(b) ** 2), 0.0)
    return (ta - tb) / (d - 1.0)


def _std_t_second(a, b, d):
    """``int_a^b x^2 t_d(x) dx`` for the standard t law, ``d > 2``."""
    ta = np.where(np.isfinite(a),
                  _fin(a) * t_pdf(_fin(a), 0.0, 1.0, d) * (d + _fin(a) ** 2), 0.0)
    tb = np.where(np.isfinite(b),
                  _fin(b) * t_pdf(_fin(b), 0.0, 1.0, d) * (d + _fin(b) ** 2), 0.0)
    k = np.sqrt((d - 2.0) / d)
    p_lower = t_interval(a * k, b * k, 0.0, 1.0, d - 2.0)
    return (ta - tb) / (d - 1.0) + d / (d - 2.0) * p_lower


def _quad_moments_1d(logpdf, a, b):
    """Brute-force ``(P, E[W], E[W^2])`` by adaptive quadrature on one interval."""
    # Rescale by the density at a representative point to keep tiny masses relative.
    grid = np.array([a, b, 0.5 * (a + b) if np.isfinite(a + b) else (a if np.isfinite(a) else b)])
    grid = grid[np.isfinite(grid)]
    ref = float(np.max(logpdf(grid))) if grid.size else 0.0
    kw = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    f = lambda x, k: x ** k * np.exp(logpdf(x) - ref)  # noqa: E731
    i0 = integrate.quad(f, a, b, args=(0,), **kw)[0]
    i1 = integrate.quad(f, a, b, args=(1,), **kw)[0]
    i2 = integrate.quad(f, a, b, args=(2,), **kw)[0]
    return i0 * np.exp(ref), i1 / i0, i2 / i0


def tt1_moments(mu, sigma2, nu, lower=-np.inf, upper=np.inf, order=2):
    """``(E[W], E[W^2])`` for ``W ~ Tt(mu, sigma2, nu; [lower, upper])``.

    With ``order=1`` only the first moment is computed and the second entry
    is ``None``.  On unbounded regions the first moment needs ``nu > 1`` and
    the second ``nu > 2``; ``nu = inf`` gives the truncated normal.

    Raises
    ------
    MomentUndefinedError
        If a requested moment diverges for the given ``nu``.
    DegenerateTruncationError
        If the region has mass below 1e-300.
    """
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(~(nu_arr > 0)):
        raise DomainError("nu must be > 0")
    if np.all(np.isinf(nu_arr)):
        m1, m2 = tn1_moments(mu, sigma2, lower, upper)
        return (m1, m2) if order == 2 else (m1, None)
    mu, sigma2, nu_arr, lower, upper = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(sigma2, float), nu_arr,
        np.asarray(lower, float), np.asarray(upper, float))
    if np.any(~(sigma2 > 0)):
        raise DomainError("sigma2 must be > 0")
    s = np.sqrt(sigma2)
    alpha = (lower - mu) / s
    beta = (upper - mu) / s
    if np.any(~(alpha < beta)):
        raise DomainError("region must satisfy lower < upper")
    unbounded = ~(np.isfinite(alpha) & np.isfinite(beta))
    need = 2.0 if order == 2 else 1.0
    if np.any(unbounded & (nu_arr <= need)):
        raise MomentUndefinedError(
            f"moment of order {order} is undefined for nu <= {need:g} on an unbounded region")
    flip, a, b = _reflect(alpha, beta)
    p = t_interval(a, b, 0.0, 1.0, nu_arr)
    if np.any(p < MIN_MASS):
        raise DegenerateTruncationError("truncation region has mass < 1e-300")
    closed = (nu_arr > need) & (p >= QUAD_FALLBACK_MASS)
    ez = np.empty(p.shape)
    ez2 = np.empty(p.shape)
    if np.any(closed):
        ac, bc, dc, pc = a[closed], b[closed], nu_arr[closed], p[closed]
        ez[closed] = _std_t_first(ac, bc, dc) / pc
        if order == 2:
            ez2[closed] = _std_t_second(ac, bc, dc) / pc
    for idx in np.argwhere(~closed):
        idx = tuple(idx)
        d = float(nu_arr[idx])
        lp = lambda x, d=d: t_pdf_log_std(x, d)  # noqa: E731
        _, e1, e2 = _quad_moments_1d(lp, float(a[idx]), float(b[idx]))
        ez[idx], ez2[idx] = e1, e2
    ez = np.where(flip, -ez, ez)
    m1 = mu + s * ez
    if order != 2:
        return (m1[()] if m1.ndim == 0 else m1), None
    m2 = mu * mu + 2.0 * mu * s * ez + sigma2 * ez2
    if m1.ndim == 0:
        return m1[()], m2[()]
    return m1, m2


def t_pdf_log_std(x, d):
    return (special.gammaln(0.5 * (d + 1)) - special.gammaln(0.5 * d)
            - 0.5 * np.log(np.pi * d) - 0.5 * (d + 1) * np.log1p(np.asarray(x) ** 2 / d))


# ---------------------------------------------------------------------------
# Bivariate
# ---------------------------------------------------------------------------

def _rect_prob(alpha, beta, S, nu):
    """Rectangle probabilities for centred bounds, rows of ``(n, 2)`` arrays."""
    full0 = np.isneginf(alpha[:, 0]) & np.isposinf(beta[:, 0])
    full1 = np.isneginf(alpha[:, 1]) & np.isposinf(beta[:, 1])
    out = np.empty(alpha.shape[0])
    m = full0
    out[m] = t_interval(alpha[m, 1], beta[m, 1], 0.0, S[1, 1], nu)
    m = full1 & ~full0
    out[m] = t_interval(alpha[m, 0], beta[m, 0], 0.0, S[0, 0], nu)
    m = ~(full0 | full1)
    if np.any(m):
        if np.isinf(nu):
            out[m] = bvn_rect(alpha[m], beta[m], (0.0, 0.0), S)
        else:
            out[m] = np.atleast_1d(bvt_rect(alpha[m], beta[m], (0.0, 0.0), S, nu))
    return out


def _boundary_terms(alpha, beta, S, nu):
    """Boundary vector ``q`` and matrix ``H`` of the reduction identity.

    ``S``/``nu`` here describe the law whose density appears on the faces:
    the parent itself for the normal, the ``nu - 2`` companion for the t.
    """
    n = alpha.shape[0]
    q = np.zeros((n, 2))
    H = np.zeros((n, 2, 2))
    for j in (0, 1):
        o = 1 - j
        for c_all, sign in ((alpha[:, j], -1.0), (beta[:, j], 1.0)):
            f = np.isfinite(c_all)
            if not np.any(f):
                continue
            c = c_all[f]
            a_o, b_o = alpha[f, o], beta[f, o]
            loc = S[o, j] / S[j, j] * c
            s_cond = S[o, o] - S[o, j] ** 2 / S[j, j]
            if np.isinf(nu):
                dens = norm_pdf(c, 0.0, S[j, j])
                sc = np.full_like(c, s_cond)
                p_o = t_interval(a_o, b_o, loc, sc, np.inf)
                sd = np.sqrt(sc)
                za, zb = (a_o - loc) / sd, (b_o - loc) / sd
                first = (np.where(np.isfinite(za), norm_pdf(_fin(za)), 0.0)
                         - np.where(np.isfinite(zb), norm_pdf(_fin(zb)), 0.0))
            else:
                dens = t_pdf(c, 0.0, S[j, j], nu)
                sc = (nu + c * c / S[j, j]) / (nu + 1.0) * s_cond
                p_o = t_interval(a_o, b_o, loc, sc, nu + 1.0)
                sd = np.sqrt(sc)
                first = _std_t_first((a_o - loc) / sd, (b_o - loc) / sd, nu + 1.0)
            m_o = loc * p_o + sd * first
            q[f, j] += sign * dens * p_o
            H[f, j, j] += sign * c * dens * p_o
            H[f, j, o] += sign * dens * m_o
    return q, H


def trunc2_moments(mu, scale, nu, lower, upper, order=2):
    """Vectorised bivariate truncated moments.

    Parameters
    ----------
    mu : array_like, shape (n, 2) or (2,)
        Locations.
    scale : BivariateScale or (2, 2) array
        Common scale matrix.
    nu : float
        Degrees of freedom; ``np.inf`` for the normal law.
    lower, upper : array_like, shape (n, 2) or (2,)
        Rectangle bounds.

    Returns
    -------
    mass : ndarray (n,)
    m1 : ndarray (n, 2)
    m2 : ndarray (n, 2, 2)
    """
    S = _as_matrix(scale)
    nu = float(nu)
    if not nu > 0:
        raise DomainError("nu must be > 0")
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = max(mu.shape[0], np.atleast_2d(lower).shape[0], np.atleast_2d(upper).shape[0])
    mu = np.broadcast_to(mu, (n, 2))
    alpha = np.broadcast_to(lower, (n, 2)) - mu
    beta = np.broadcast_to(upper, (n, 2)) - mu
    if np.any(~(alpha < beta)):
        raise DomainError("region must satisfy lower < upper componentwise")
    unbounded = ~np.all(np.isfinite(alpha) & np.isfinite(beta), axis=1)
    need = 2.0 if order == 2 else 1.0
    if np.any(unbounded) and not nu > need:
        raise MomentUndefinedError(
            f"moment of order {order} is undefined for nu <= {need:g} on an unbounded region")
    mass = _rect_prob(alpha, beta, S, nu)
    if np.any(mass < MIN_MASS):
        raise DegenerateTruncationError("truncation region has mass < 1e-300")

    closed = mass >= QUAD_FALLBACK_MASS
    if not np.isinf(nu):
        closed &= nu > 2.0
    ez = np.empty((n, 2))
    ezz = np.empty((n, 2, 2))
    if np.any(closed):
        ac, bc, pc = alpha[closed], beta[closed], mass[closed]
        if np.isinf(nu):
            F, Sc, nuc, R = 1.0, S, np.inf, pc
        else:
            F, Sc, nuc = nu / (nu - 2.0), S * nu / (nu - 2.0), nu - 2.0
            R = _rect_prob(ac, bc, Sc, nuc)
        q, H = _boundary_terms(ac, bc, Sc, nuc)
        ez[closed] = -F * (q @ S.T) / pc[:, None]
        ezz[closed] = F * (S[None] @ (R[:, None, None] * np.eye(2)[None] - H)) / pc[:, None, None]
    for i in np.nonzero(~closed)[0]:
        _, ez[i], ezz[i] = _quad_moments_2d(alpha[i], beta[i], S, nu)
    ezz = 0.5 * (ezz + np.swapaxes(ezz, 1, 2))
    m1 = mu + ez
    m2 = (ezz + mu[:, :, None] * ez[:, None, :] + ez[:, :, None] * mu[:, None, :]
          + mu[:, :, None] * mu[:, None, :])
    return mass, m1, m2


def _quad_moments_2d(alpha, beta, S, nu):
    """Brute-force centred moments over a rectangle by nested quadrature."""
    Sinv = np.linalg.inv(S)
    logdet = np.log(np.linalg.det(S))
    if np.isinf(nu):
        def logf(x1, x2):
            d = Sinv[0, 0] * x1 * x1 + 2 * Sinv[0, 1] * x1 * x2 + Sinv[1, 1] * x2 * x2
            return -np.log(2 * np.pi) - 0.5 * logdet - 0.5 * d
    else:
        c0 = (special.gammaln(0.5 * (nu + 2)) - special.gammaln(0.5 * nu)
              - np.log(np.pi * nu) - 0.5 * logdet)

        def logf(x1, x2):
            d = Sinv[0, 0] * x1 * x1 + 2 * Sinv[0, 1] * x1 * x2 + Sinv[1, 1] * x2 * x2
            return c0 - 0.5 * (nu + 2) * np.log1p(d / nu)

    corners = [(x, y) for x in (alpha[0], beta[0]) for y in (alpha[1], beta[1])
               if np.isfinite(x) and np.isfinite(y)]
    ref = max([logf(*c) for c in corners] + [logf(
        float(np.clip(0.0, alpha[0], beta[0])), float(np.clip(0.0, alpha[1], beta[1])))])
    kw = dict(epsabs=0.0, epsrel=1e-11)

    def mom(k1, k2):
        g = lambda x2, x1: x1 ** k1 * x2 ** k2 * np.exp(logf(x1, x2) - ref)  # noqa: E731
        return integrate.dblquad(g, alpha[0], beta[0], alpha[1], beta[1], **kw)[0]

    i00 = mom(0, 0)
    e = np.array([mom(1, 0), mom(0, 1)]) / i00
    e11, e12, e22 = mom(2, 0) / i00, mom(1, 1) / i00, mom(0, 2) / i00
    return i00 * np.exp(ref), e, np.array([[e11, e12], [e12, e22]])


def _single(mu, scale, nu, lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mass, m1, m2 = trunc2_moments(np.asarray(mu, float)[None], scale, nu,
                                  lower[None], upper[None])
    return TruncMoments2(m1=m1[0], m2=m2[0], mass=float(mass[0]))


def tn2_moments(mu, scale, lower=(-np.inf, -np.inf), upper=(np.inf, np.inf)):
    """Moments of a bivariate normal truncated to ``[lower, upper]``."""
    return _single(mu, scale, np.inf, lower, upper)


def tt2_moments(mu, scale, nu, lower=(-np.inf, -np.inf), upper=(np.inf, np.inf)):
    """Moments of a bivariate Student-t truncated to ``[lower, upper]``."""
    return _single(mu, scale, nu, lower, upper)


# ---------------------------------------------------------------------------
# Weighted moments E[((nu+p)/(nu+delta))^r Y^(k)]
# ---------------------------------------------------------------------------

def weighted_moments2(mu, scale, nu, lower, upper, r=1.0):
    """Weighted truncated moments of a bivariate t law (unconditional identity).

    Returns ``(e0, e1, e2)`` with ``e_k = E[((nu+2)/(nu+delta(Y)))^r Y^(k)]``
    for ``Y ~ Tt_2(mu, S, nu; [lower, upper])``; arrays over rows of `mu`.
    """
    S = _as_matrix(scale)
    w = prop2_weight(2, nu, r)
    S_star = w.sigma_star_factor * S
    mass = _rect_mass(mu, S, nu, lower, upper)
    mass_star, m1, m2 = trunc2_moments(mu, S_star, nu + 2 * r, lower, upper)
    e0 = w.c_p * mass_star / mass
    return e0, e0[:, None] * m1, e0[:, None, None] * m2


def _rect_mass(mu, S, nu, lower, upper):
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    n = mu.shape[0]
    alpha = np.broadcast_to(np.asarray(lower, float), (n, 2)) - mu
    beta = np.broadcast_to(np.asarray(upper, float), (n, 2)) - mu
    return _rect_prob(alpha, beta, S, float(nu))


def conditional_weighted_moments(y1, mu, scale, nu, lower2, upper2, r=1.0):
    """Weighted moments of the second coordinate given the first (``p = 2, p1 = 1``).

    Returns ``(e0, e1, e2)`` with
    ``e_k = E[((nu+2)/(nu+delta(Y)))^r Y2^k | Y1 = y1]`` for
    ``Y ~ Tt_2(mu, S, nu; R x [lower2, upper2])``.
    """
    S = _as_matrix(scale)
    y1 = np.asarray(y1, dtype=float)
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    w = prop3_weight(2, 1, nu, r)
    r1 = y1 - mu[:, 0]
    delta1 = r1 * r1 / S[0, 0]
    loc = mu[:, 1] + S[1, 0] / S[0, 0] * r1
    s22_1 = S[1, 1] - S[0, 1] ** 2 / S[0, 0]
    s_tilde = (nu + delta1) / (nu + 1.0) * s22_1
    s_star = (nu + delta1) / (nu + 1.0 + 2 * r) * s22_1
    num = t_interval(lower2, upper2, loc, s_star, nu + 1.0 + 2 * r)
    den = t_interval(lower2, upper2, loc, s_tilde, nu + 1.0)
    e0 = w.d_p / (nu + delta1) ** r * num / den
    m1, m2 = tt1_moments(loc, s_star, nu + 1.0 + 2 * r, lower2, upper2)
    return e0, e0 * m1, e0 * m2

"""Normal and Student-t kernels, univariate and bivariate.

All functions broadcast over numpy arrays.  Infinite bounds are written as
``np.inf`` / ``-np.inf``; no finite sentinel values are used.  A Student-t law
with ``nu = np.inf`` is the normal law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .exceptions import DomainError

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _check_positive(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be > 0, got {value!r}")
    return arr


# ---------------------------------------------------------------------------
# Normal
# ---------------------------------------------------------------------------

def norm_logpdf(x, mu=0.0, sigma2=1.0):
    sigma2 = _check_positive("sigma2", sigma2)
    z2 = (np.asarray(x, dtype=float) - mu) ** 2 / sigma2
    return -LOG_SQRT_2PI - 0.5 * np.log(sigma2) - 0.5 * z2


def norm_pdf(x, mu=0.0, sigma2=1.0):
    """Normal density with mean `mu` and variance `sigma2`."""
    return np.exp(norm_logpdf(x, mu, sigma2))


def norm_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def norm_logcdf(x):
    return special.log_ndtr(x)


def mills_ratio(a):
    """Inverse Mills ratio ``phi(a) / Phi(a)``.

    Evaluated in log space, so it stays finite for very negative `a`, where
    it behaves like ``-a + 1/(-a)``.
    """
    a = np.asarray(a, dtype=float)
    return np.exp(norm_logpdf(a) - special.log_ndtr(a))


def norm_interval(a, b, mu=0.0, sigma2=1.0):
    """P(a <= X <= b) for X ~ N(mu, sigma2), accurate in both tails."""
    s = np.sqrt(_check_positive("sigma2", sigma2))
    lo = (np.asarray(a, dtype=float) - mu) / s
    hi = (np.asarray(b, dtype=float) - mu) / s
    # Reflect intervals lying in the upper tail so both ends use lower-tail CDFs.
    upper = lo > 0
    lo2 = np.where(upper, -hi, lo)
    hi2 = np.where(upper, -lo, hi)
    out = special.ndtr(hi2) - special.ndtr(lo2)
    return np.where(hi2 > lo2, out, 0.0)


def log_norm_interval(a, b, mu=0.0, sigma2=1.0):
    """log P(a <= X <= b) for X ~ N(mu, sigma2), computed in log space."""
    s = np.sqrt(_check_positive("sigma2", sigma2))
    lo = (np.asarray(a, dtype=float) - mu) / s
    hi = (np.asarray(b, dtype=float) - mu) / s
    upper = lo > 0
    lo2 = np.where(upper, -hi, lo)
    hi2 = np.where(upper, -lo, hi)
    lhi = special.log_ndtr(hi2)
    llo = special.log_ndtr(lo2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lhi + np.log1p(-np.exp(llo - lhi))
    return np.where(hi2 > lo2, out, -np.inf)


# ---------------------------------------------------------------------------
# Student-t
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnivariateT:
    """Location-scale Student-t law ``t(mu, sigma2, nu)``.

    ``nu = inf`` denotes the normal law ``N(mu, sigma2)``.
    """

    mu: float = 0.0
    sigma2: float = 1.0
    nu: float = np.inf

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2!r}")
        if not self.nu > 0:
            raise DomainError(f"nu must be > 0, got {self.nu!r}")

    def pdf(self, x):
        return t_pdf(x, self.mu, self.sigma2, self.nu)

    def logpdf(self, x):
        return t_logpdf(x, self.mu, self.sigma2, self.nu)

    def cdf(self, x):
        return t_cdf(x, self.mu, self.sigma2, self.nu)


def t_logpdf(x, mu=0.0, sigma2=1.0, nu=np.inf):
    nu = _check_positive("nu", nu)
    sigma2 = _check_positive("sigma2", sigma2)
    if np.all(np.isinf(nu)):
        return norm_logpdf(x, mu, sigma2)
    z2 = (np.asarray(x, dtype=float) - mu) ** 2 / sigma2
    # log G((nu+1)/2) - log G(nu/2) via betaln, which stays accurate for huge nu
    const = (special.gammaln(0.5) - special.betaln(0.5 * nu, 0.5)
             - 0.5 * np.log(np.pi * nu * sigma2))
    return const - 0.5 * (nu + 1.0) * np.log1p(z2 / nu)


def t_pdf(x, mu=0.0, sigma2=1.0, nu=np.inf):
    """Student-t density with location `mu`, scale `sigma2` and `nu` d.f."""
    return np.exp(t_logpdf(x, mu, sigma2, nu))


def _std_t_cdf(z, nu):
    nu = np.asarray(nu, dtype=float)
    if np.all(np.isinf(nu)):
        return special.ndtr(z)
    return special.stdtr(nu, z)


def t_cdf(x, mu=0.0, sigma2=1.0, nu=np.inf):
    """Student-t CDF ``T(x; mu, sigma2, nu)``."""
    nu = _check_positive("nu", nu)
    s = np.sqrt(_check_positive("sigma2", sigma2))
    return _std_t_cdf((np.asarray(x, dtype=float) - mu) / s, nu)


def t_interval(a, b, mu=0.0, sigma2=1.0, nu=np.inf):
    """``T(a, b; mu, sigma2, nu) = P(a <= X <= b)``, accurate in both tails."""
    nu = _check_positive("nu", nu)
    s = np.sqrt(_check_positive("sigma2", sigma2))
    lo = (np.asarray(a, dtype=float) - mu) / s
    hi = (np.asarray(b, dtype=float) - mu) / s
    upper = lo > 0
    lo2 = np.where(upper, -hi, lo)
    hi2 = np.where(upper, -lo, hi)
    out = _std_t_cdf(hi2, nu) - _std_t_cdf(lo2, nu)
    return np.where(hi2 > lo2, out, 0.0)


def log_t_cdf(x, mu=0.0, sigma2=1.0, nu=np.inf):
    """log of the Student-t CDF with an asymptotic lower-tail fallback."""
    nu = np.asarray(_check_positive("nu", nu), dtype=float)
    s = np.sqrt(_check_positive("sigma2", sigma2))
    z = (np.asarray(x, dtype=float) - mu) / s
    if np.all(np.isinf(nu)):
        return special.log_ndtr(z)
    z, nu = np.broadcast_arrays(z, nu)
    p = special.stdtr(nu, z)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    bad = ~(p > 1e-290)
    if np.any(bad):
        zb, nb = z[bad], nu[bad]
        # T(z) ~ t(z) (nu + z^2) / (nu |z|) as z -> -inf
        tail = (t_logpdf(zb, 0.0, 1.0, nb) + np.log(nb + zb * zb)
                - np.log(nb) - np.log(np.abs(zb)))
        out = np.array(out, dtype=float)
        out[bad] = np.where(np.isfinite(zb), tail, -np.inf)
    return out


# ---------------------------------------------------------------------------
# Bivariate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BivariateScale:
    """Scale matrix ``[[sigma2, rho*sigma], [rho*sigma, 1]]``."""

    sigma2: float
    rho: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2!r}")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho!r}")

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))

    @property
    def matrix(self):
        rs = self.rho * self.sigma
        return np.array([[self.sigma2, rs], [rs, 1.0]])


def _as_matrix(scale):
    if isinstance(scale, BivariateScale):
        return scale.matrix
    m = np.asarray(scale, dtype=float)
    if m.shape != (2, 2):
        raise DomainError("scale must be a BivariateScale or a 2x2 matrix")
    if not (m[0, 0] > 0 and m[1, 1] > 0):
        raise DomainError("scale matrix must have positive diagonal")
    r = m[0, 1] / np.sqrt(m[0, 0] * m[1, 1])
    if not abs(r) < 1:
        raise DomainError(f"|rho| must be < 1, got {r!r}")
    return m


def bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF ``P(X1 <= h, X2 <= k)`` with correlation `rho`.

    Uses Owen's T function; infinite arguments are handled exactly.
    """
    h, k, rho = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float),
                                    np.asarray(rho, float))
    if np.any(np.abs(rho) >= 1):
        raise DomainError("|rho| must be < 1")
    out = np.empty(h.shape, dtype=float)
    hinf_lo = np.isneginf(h) | np.isneginf(k)
    out[hinf_lo] = 0.0
    h_hi = np.isposinf(h) & ~hinf_lo
    k_hi = np.isposinf(k) & ~hinf_lo
    out[h_hi] = special.ndtr(k[h_hi])
    out[k_hi & ~h_hi] = special.ndtr(h[k_hi & ~h_hi])
    fin = ~(hinf_lo | h_hi | k_hi)
    if np.any(fin):
        hh, kk, rr = h[fin], k[fin], rho[fin]
        sq = np.sqrt((1.0 - rr) * (1.0 + rr))
        both0 = (hh == 0) & (kk == 0)
        # Ratio form: the products h * sq underflow for subnormal h.
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ah = (kk / hh - rr) / sq
            ak = (hh / kk - rr) / sq
        ah = np.where(hh == 0, np.where(kk >= 0, np.inf, -np.inf), ah)
        ak = np.where(kk == 0, np.where(hh >= 0, np.inf, -np.inf), ak)
        sgn = np.sign(hh) * np.sign(kk)  # hh * kk itself can underflow to zero
        beta = np.where((sgn > 0) | ((sgn == 0) & (hh + kk >= 0)), 0.0, 0.5)
        val = (0.5 * special.ndtr(hh) + 0.5 * special.ndtr(kk)
               - special.owens_t(hh, ah) - special.owens_t(kk, ak) - beta)
        val = np.where(both0, 0.25 + np.arcsin(rr) / (2.0 * np.pi), val)
        out[fin] = np.clip(val, 0.0, 1.0)
    return out


def _split_bounds(lower, upper, mu):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if lower.shape[-1:] != (2,) or upper.shape[-1:] != (2,):
        raise DomainError("bounds must be pairs")
    return lower - mu, upper - mu


def bvn_rect(lower, upper, mu=(0.0, 0.0), scale=BivariateScale(1.0, 0.0)):
    """Rectangle probability ``P(lower <= X <= upper)`` for a bivariate normal.

    `lower` / `upper` may carry leading batch dimensions ``(..., 2)``.
    Empty rectangles return 0.
    """
    S = _as_matrix(scale)
    lo, hi = _split_bounds(lower, upper, mu)
    sd = np.sqrt(np.diag(S))
    r = S[0, 1] / (sd[0] * sd[1])
    lo = lo / sd
    hi = hi / sd
    empty = np.any(hi <= lo, axis=-1)
    a1, a2 = lo[..., 0], lo[..., 1]
    b1, b2 = hi[..., 0], hi[..., 1]
    p = (bvn_cdf(b1, b2, r) - bvn_cdf(a1, b2, r)
         - bvn_cdf(b1, a2, r) + bvn_cdf(a1, a2, r))
    return np.where(empty, 0.0, np.clip(p, 0.0, 1.0))


def _cond_scale_t(S, nu, j, c):
    """Conditional law of component ``1-j`` given component ``j`` equal to `c`.

    Returns location, scale and degrees of freedom (centered parent).
    """
    o = 1 - j
    loc = S[o, j] / S[j, j] * c
    s22_1 = S[o, o] - S[o, j] ** 2 / S[j, j]
    if np.isinf(nu):
        return loc, s22_1 + 0.0 * c, nu
    return loc, (nu + c * c / S[j, j]) / (nu + 1.0) * s22_1, nu + 1.0


def bvt_rect(lower, upper, mu=(0.0, 0.0), scale=BivariateScale(1.0, 0.0),
             nu=np.inf, tol=1e-12):
    """Rectangle probability of a bivariate Student-t law.

    A rectangle that is unbounded on one coordinate reduces exactly to the
    univariate marginal.  Otherwise the conditional univariate t CDF is
    integrated against the marginal t density of the first coordinate with
    adaptive quadrature.  ``nu = inf`` dispatches to :func:`bvn_rect`.
    """
    nu = float(_check_positive("nu", nu))
    if np.isinf(nu):
        return bvn_rect(lower, upper, mu, scale)
    S = _as_matrix(scale)
    lo, hi = _split_bounds(lower, upper, mu)
    lo, hi = np.broadcast_arrays(lo, hi)
    flat_lo = lo.reshape(-1, 2)
    flat_hi = hi.reshape(-1, 2)
    out = np.empty(flat_lo.shape[0])
    for i, (a, b) in enumerate(zip(flat_lo, flat_hi)):
        out[i] = _bvt_rect_one(a, b, S, nu, tol)
    return out.reshape(lo.shape[:-1]) if lo.ndim > 1 else float(out[0])


def _bvt_rect_one(a, b, S, nu, tol):
    if np.any(b <= a):
        return 0.0
    full = np.isneginf(a) & np.isposinf(b)
    if full[0] and full[1]:
        return 1.0
    if full[0]:
        return float(t_interval(a[1], b[1], 0.0, S[1, 1], nu))
    if full[1]:
        return float(t_interval(a[0], b[0], 0.0, S[0, 0], nu))

    def integrand(x1):
        loc, sc, df = _cond_scale_t(S, nu, 0, x1)
        return t_pdf(x1, 0.0, S[0, 0], nu) * t_interval(a[1], b[1], loc, sc, df)

    sd = np.sqrt(S[0, 0])
    # Split at the mode so quad sees the bulk of the mass.
    pts = [p for p in (-sd, 0.0, sd) if a[0] < p < b[0]]
    edges = [a[0], *pts, b[0]]
    total = 0.0
    for lo_, hi_ in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, lo_, hi_, epsabs=tol, epsrel=tol, limit=200)
        total += val
    return float(min(max(total, 0.0), 1.0))


def log_bvt_rect(lower, upper, mu=(0.0, 0.0), scale=BivariateScale(1.0, 0.0), nu=np.inf):
    with np.errstate(divide="ignore"):
        return np.log(bvt_rect(lower, upper, mu, scale, nu))

"""Selection data, model parameters and observed-data log-likelihoods.

The latent pair ``Y = (Y1, Y2)`` follows either a bivariate normal (SLn) or a
bivariate Student-t (SLt) law with location ``(x'beta, w'gamma)`` and scale

    Sigma = [[sigma2, rho * sigma], [rho * sigma, 1]].

Only ``C = 1{Y2 > 0}`` is observed for every unit, and ``Y1`` only when
``C = 1``.  The variance of the selection error is fixed at one by the
``BivariateScale`` type, so it is never a free parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, special

from .exceptions import CollinearityError, DomainError, NumericalUnderflowError
from .special_fn import BivariateScale, log_t_cdf, norm_logcdf, norm_logpdf, t_logpdf


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def dependent_columns(mat, names, rtol=1e-10):
    """Names of columns left over by a rank-revealing pivoted QR of `mat`."""
    _, r, piv = linalg.qr(mat, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0:
        return [names[i] for i in piv]
    rank = int(np.sum(d > rtol * d[0]))
    return [names[i] for i in piv[rank:]]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Selection data.

    Parameters
    ----------
    c : array_like of {0, 1}, shape (n,)
        Selection indicators.
    v1 : array_like, shape (n,)
        Outcomes.  Entries with ``c = 0`` are treated as absent; pass NaN
        (or anything) there, it is replaced by NaN on construction.
    x : array_like, shape (n, p)
        Outcome design.
    w : array_like, shape (n, q)
        Selection design.
    x_names, w_names : sequence of str, optional
        Column names, used in error messages and reports.
    """

    c: np.ndarray
    v1: np.ndarray
    x: np.ndarray
    w: np.ndarray
    x_names: tuple = field(default=None)
    w_names: tuple = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.c)
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        v1 = np.asarray(self.v1, dtype=float).copy()
        n = c.shape[0]
        if c.ndim != 1 or not np.all(np.isin(c, (0, 1))):
            raise DomainError("c must be a vector of 0/1 indicators")
        if x.shape[0] != n or w.shape[0] != n or v1.shape != (n,):
            raise DomainError("c, v1, x and w must have the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise DomainError("x and w must contain finite values only")
        sel = c == 1
        if not np.all(np.isfinite(v1[sel])):
            bad = int(np.nonzero(sel & ~np.isfinite(v1))[0][0])
            raise DomainError(f"outcome missing on selected row {bad}")
        v1[~sel] = np.nan
        p, q = x.shape[1], w.shape[1]
        if n < p + q + 2:
            raise DomainError(f"need n >= p + q + 2 = {p + q + 2}, got n = {n}")
        xn = tuple(self.x_names) if self.x_names is not None else tuple(f"x{j}" for j in range(p))
        wn = tuple(self.w_names) if self.w_names is not None else tuple(f"w{j}" for j in range(q))
        if len(xn) != p or len(wn) != q:
            raise DomainError("column name count does not match the design")
        for mat, names, label in ((x, xn, "x"), (w, wn, "w")):
            if np.linalg.matrix_rank(mat) < mat.shape[1]:
                cols = dependent_columns(mat, names)
                raise CollinearityError(
                    f"design {label} is rank deficient; dependent columns: {cols}", cols)
        c = c.astype(int)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "v1", _frozen(v1))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "x_names", xn)
        object.__setattr__(self, "w_names", wn)

    @property
    def n(self):
        return self.c.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.w.shape[1]

    @property
    def selected(self):
        return self.c == 1

    @property
    def missing_rate(self):
        return 1.0 - self.c.mean()

    def subset(self, rows):
        """Dataset restricted to `rows` (index array or boolean mask)."""
        return Dataset(self.c[rows], self.v1[rows], self.x[rows], self.w[rows],
                       self.x_names, self.w_names)


@dataclass(frozen=True)
class TransformedParams:
    """Reparameterization ``psi = sigma2 (1 - rho^2)``, ``rho_star = rho sigma``."""

    psi: float
    rho_star: float

    def __post_init__(self):
        if not self.psi > 0:
            raise DomainError("psi must be > 0")

    @property
    def sigma2(self):
        return self.psi + self.rho_star ** 2

    @property
    def rho(self):
        return self.rho_star / np.sqrt(self.sigma2)


@dataclass(frozen=True, eq=False)
class SlParams:
    """Parameters of the selection model; ``nu = inf`` is the normal model."""

    beta: np.ndarray
    gamma: np.ndarray
    sigma2: float
    rho: float
    nu: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(np.atleast_1d(self.beta)))
        object.__setattr__(self, "gamma", _frozen(np.atleast_1d(self.gamma)))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "nu", float(self.nu))
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")
        if not self.nu > 0:
            raise DomainError(f"nu must be > 0, got {self.nu}")

    @property
    def is_normal(self):
        return np.isinf(self.nu)

    @property
    def sigma(self):
        return np.sqrt(self.sigma2)

    @property
    def scale(self):
        return BivariateScale(self.sigma2, self.rho)

    @property
    def Sigma(self):
        return self.scale.matrix

    @property
    def transformed(self):
        return TransformedParams(psi=self.sigma2 * (1.0 - self.rho ** 2),
                                 rho_star=self.rho * self.sigma)

    @classmethod
    def from_transformed(cls, beta, gamma, tp: TransformedParams, nu=np.inf):
        return cls(beta, gamma, tp.sigma2, tp.rho, nu)

    def theta(self):
        """Vector ``(beta, gamma, sigma2, rho)``."""
        return np.concatenate([self.beta, self.gamma, [self.sigma2, self.rho]])

    @classmethod
    def from_theta(cls, theta, p, nu=np.inf):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:p], theta[p:-2], theta[-2], theta[-1], nu)

    def with_(self, **kw):
        return replace(self, **kw)

    def locations(self, data):
        """``(n, 2)`` array of ``(x'beta, w'gamma)``."""
        return np.column_stack([data.x @ self.beta, data.w @ self.gamma])


def conditional_normal(params, x_i, w_i, v1):
    """Law of ``Y2 | Y1 = v1`` under the normal model: ``(mu_c, sigma2_c)``.

    Broadcasts over rows of `x_i`, `w_i` and entries of `v1`.
    """
    xb = np.asarray(x_i, dtype=float) @ params.beta
    wg = np.asarray(w_i, dtype=float) @ params.gamma
    mu_c = wg + params.rho / params.sigma * (np.asarray(v1, dtype=float) - xb)
    return mu_c, np.broadcast_to(1.0 - params.rho ** 2, np.shape(mu_c))[()]


def conditional_t(params, x_i, w_i, v1):
    """Law of ``Y2 | Y1 = v1`` under the t model: ``(mu_t, sigma2_t, delta)``.

    The conditional law is Student-t with ``nu + 1`` degrees of freedom,
    location `mu_t` and scale `sigma2_t`; `delta` is the squared
    standardized outcome residual ``(v1 - x'beta)^2 / sigma2``.
    """
    nu = params.nu
    if not np.isfinite(nu):
        raise DomainError("conditional_t needs a finite nu")
    xb = np.asarray(x_i, dtype=float) @ params.beta
    wg = np.asarray(w_i, dtype=float) @ params.gamma
    r = np.asarray(v1, dtype=float) - xb
    mu_t = wg + params.rho / params.sigma * r
    delta = r * r / params.sigma2
    s2 = (nu + delta) / (nu + 1.0) * (1.0 - params.rho ** 2)
    return mu_t, s2, delta


def loglik_rows(params, data):
    """Per-row observed-data log-likelihood contributions.

    Uses the normal kernels when ``params.nu`` is infinite and the Student-t
    kernels otherwise.
    """
    sel = data.selected
    out = np.empty(data.n)
    x1, w1, v = data.x[sel], data.w[sel], data.v1[sel]
    wg0 = data.w[~sel] @ params.gamma
    if params.is_normal:
        mu_c, s2c = conditional_normal(params, x1, w1, v)
        out[sel] = (norm_logpdf(v, x1 @ params.beta, params.sigma2)
                    + norm_logcdf(mu_c / np.sqrt(s2c)))
        out[~sel] = norm_logcdf(-wg0)
    else:
        nu = params.nu
        mu_t, s2t, _ = conditional_t(params, x1, w1, v)
        out[sel] = (t_logpdf(v, x1 @ params.beta, params.sigma2, nu)
                    + log_t_cdf(mu_t / np.sqrt(s2t), 0.0, 1.0, nu + 1.0))
        out[~sel] = log_t_cdf(-wg0, 0.0, 1.0, nu)
    return out


def _total(rows):
    if not np.all(np.isfinite(rows)):
        bad = int(np.nonzero(~np.isfinite(rows))[0][0])
        raise NumericalUnderflowError(
            f"log-likelihood contribution of row {bad} is not finite", row=bad)
    return float(np.sum(rows))


def loglik_sln(params, data):
    """Observed log-likelihood of the normal selection model."""
    if not params.is_normal:
        params = params.with_(nu=np.inf)
    return _total(loglik_rows(params, data))


def loglik_slt(params, data):
    """Observed log-likelihood of the Student-t selection model."""
    if params.is_normal:
        raise DomainError("loglik_slt needs a finite nu")
    return _total(loglik_rows(params, data))


def loglik(params, data):
    """Observed log-likelihood of the family implied by ``params.nu``."""
    return _total(loglik_rows(params, data))


def nu_profile(params, data):
    """Observed t log-likelihood as a function of ``nu`` alone.

    Everything that does not depend on ``nu`` is computed once, which makes
    repeated evaluation (as in a one-dimensional search) cheap.
    """
    sel = data.selected
    r = data.v1[sel] - data.x[sel] @ params.beta
    delta = r * r / params.sigma2
    a = data.w[sel] @ params.gamma + params.rho / params.sigma * r
    s0 = 1.0 - params.rho ** 2
    b = -(data.w[~sel] @ params.gamma)
    half_log_s2 = 0.5 * np.log(np.pi * params.sigma2)

    def f(nu):
        const = special.gammaln(0.5) - special.betaln(0.5 * nu, 0.5) - 0.5 * np.log(nu)
        rows1 = (const - half_log_s2 - 0.5 * (nu + 1.0) * np.log1p(delta / nu)
                 + log_t_cdf(a / np.sqrt((nu + delta) / (nu + 1.0) * s0), 0.0, 1.0, nu + 1.0))
        rows0 = log_t_cdf(b, 0.0, 1.0, nu)
        return _total(np.concatenate([rows1, rows0]))

    return f

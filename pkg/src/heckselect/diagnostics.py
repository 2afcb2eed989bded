"""Martingale-type residuals and simulated QQ envelopes.

For row ``i`` let ``S_i`` be the fitted probability that the selection
variable is non-positive, computed from the conditional law given the
observed outcome when ``C_i = 1`` and from the marginal law when
``C_i = 0``.  The martingale residual is ``r_M = C + log S`` and the
martingale-type residual is

    r_MT = sign(r_M) * sqrt(-2 [r_M + C log(C - r_M)]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .model import conditional_normal, conditional_t
from .special_fn import log_t_cdf


@dataclass(frozen=True)
class ResidualSet:
    r_m: np.ndarray
    r_mt: np.ndarray
    c: np.ndarray

    @property
    def flagged(self):
        """Rows whose survival term underflowed (residual is infinite)."""
        return ~np.isfinite(self.r_mt)


@dataclass(frozen=True)
class Envelope:
    sorted_theoretical: np.ndarray
    low: np.ndarray
    median: np.ndarray
    high: np.ndarray
    coverage: float
    n_sim: int

    def outside(self, r_mt):
        """Boolean mask (in sorted order) of residuals outside the bands."""
        r = np.sort(np.asarray(r_mt, dtype=float))
        return (r < self.low) | (r > self.high)

    def fraction_outside(self, r_mt):
        return float(np.mean(self.outside(r_mt)))


def log_survival(params, data):
    """``log P(Y2 <= 0 | observed data)`` for every row."""
    sel = data.selected
    out = np.empty(data.n)
    wg0 = data.w[~sel] @ params.gamma
    x1, w1, v = data.x[sel], data.w[sel], data.v1[sel]
    if params.is_normal:
        mu_c, s2c = conditional_normal(params, x1, w1, v)
        out[sel] = special.log_ndtr(-mu_c / np.sqrt(s2c))
        out[~sel] = special.log_ndtr(-wg0)
    else:
        mu_t, s2t, _ = conditional_t(params, x1, w1, v)
        out[sel] = log_t_cdf(-mu_t / np.sqrt(s2t), 0.0, 1.0, params.nu + 1.0)
        out[~sel] = log_t_cdf(-wg0, 0.0, 1.0, params.nu)
    return out


def residuals_from_params(params, data):
    """Residual set at the given parameters."""
    c = data.c.astype(float)
    r_m = c + log_survival(params, data)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = r_m + c * np.log(c - r_m)
        inner = np.minimum(inner, 0.0)  # rounding can push the C = 1 term just above 0
        r_mt = np.sign(r_m) * np.sqrt(-2.0 * inner)
    r_mt = np.where(np.isfinite(r_m), r_mt, np.sign(r_m) * np.inf)
    return ResidualSet(r_m=r_m, r_mt=r_mt, c=data.c.copy())


def martingale_residuals(fit, data):
    """Residuals ``r_M`` and ``r_MT`` of a fitted model (a FitResult or SlParams)."""
    params = getattr(fit, "params", fit)
    return residuals_from_params(params, data)


def blom_quantiles(n):
    """Standard normal plotting positions ``Phi^{-1}((i - 3/8) / (n + 1/4))``."""
    i = np.arange(1, n + 1)
    return special.ndtri((i - 0.375) / (n + 0.25))


def simulated_envelope(fit, data, n_sim=100, coverage=0.95, seed=None, refit=False,
                       family=None, fit_options=None):
    """Per-rank quantile bands of ``r_MT`` from data simulated under the fit.

    Each replicate keeps the designs of `data`, draws new errors from the
    fitted law and recomputes the residuals at the fitted parameters
    (``refit=False``) or at a fresh fit of the replicate (``refit=True``).

    Parameters
    ----------
    fit : FitResult or SlParams
    family : {"normal", "t", "slash"}, optional
        Error law used for simulation; defaults to the fitted family.
    """
    from .simgen import replicate_rng, simulate_outcomes

    params = getattr(fit, "params", fit)
    fam = family or ("normal" if params.is_normal else "t")
    n = data.n
    sims = np.empty((n_sim, n))
    for b in range(n_sim):
        rng = replicate_rng(0 if seed is None else seed, b)
        y1, c = simulate_outcomes(params, data.x, data.w, fam, rng)
        d = type(data)(c, np.where(c == 1, y1, np.nan), data.x, data.w,
                       data.x_names, data.w_names)
        p_b = params
        if refit:
            from .em import FitOptions, fit as em_fit

            opts = fit_options or FitOptions(family="normal" if params.is_normal else "t")
            p_b = em_fit(d, opts).params
        sims[b] = np.sort(residuals_from_params(p_b, d).r_mt)
    alpha = (1.0 - coverage) / 2.0
    low, med, high = np.quantile(sims, [alpha, 0.5, 1.0 - alpha], axis=0)
    return Envelope(sorted_theoretical=blom_quantiles(n), low=low, median=med, high=high,
                    coverage=coverage, n_sim=n_sim)

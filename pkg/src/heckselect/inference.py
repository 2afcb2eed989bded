"""Score vectors, empirical information, standard errors and AIC/BIC.

Per-row scores are the conditional expectations of the complete-data
scores given the observed data.  Summed over rows they equal the gradient of
the observed log-likelihood at any parameter value, not only at the
maximum, which is what the finite-difference checks in the test-suite use.
The ordering is ``(beta, gamma, sigma, rho)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

COND_LIMIT = 1e12


@dataclass(frozen=True)
class ScoreVector:
    """Score of one observation split into its blocks."""

    s_beta_c: np.ndarray
    s_sigma: float
    s_rho: float

    def as_array(self):
        return np.concatenate([self.s_beta_c, [self.s_sigma, self.s_rho]])


@dataclass(frozen=True)
class InfoMatrix:
    matrix: np.ndarray
    condition: float
    rank_deficient: bool


def scores(params, data, records):
    """Per-row scores, shape ``(n, p + q + 2)``.

    Works for both families: the normal model is the special case of unit
    weights ``uhat = 1`` in the records.
    """
    mu = params.locations(data)
    S = params.Sigma
    Om = np.linalg.inv(S)
    u, uy, uyy = records.uhat, records.uy, records.uyy
    r = uy - u[:, None] * mu
    Or = r @ Om.T
    s_beta = data.x * Or[:, :1]
    s_gamma = data.w * Or[:, 1:]
    Gam = (uyy - uy[:, :, None] * mu[:, None, :] - mu[:, :, None] * uy[:, None, :]
           + u[:, None, None] * mu[:, :, None] * mu[:, None, :])
    sig, rho = params.sigma, params.rho
    B = np.array([[2.0 * sig, rho], [rho, 0.0]])
    D = np.array([[0.0, sig], [sig, 0.0]])
    OGO = Om @ Gam @ Om

    def trace_score(M):
        return -0.5 * np.trace(Om @ M) + 0.5 * np.einsum("nij,ji->n", OGO, M)

    return np.column_stack([s_beta, s_gamma, trace_score(B), trace_score(D)])


def score_sln(params, data, records):
    """Per-row scores of the normal model (rows of ``(beta, gamma, sigma, rho)``)."""
    return scores(params, data, records)


def score_slt(params, data, records):
    """Per-row scores of the t model for fixed ``nu``."""
    return scores(params, data, records)


def to_sigma2_scale(s, params):
    """Convert scores from the ``sigma`` to the ``sigma2`` parameterization."""
    s = np.array(s, dtype=float, copy=True)
    s[..., -2] /= 2.0 * params.sigma
    return s


def empirical_info(score_rows, centered=False):
    """Empirical information ``sum_i s_i s_i^T``.

    With ``centered=True`` the term ``S S^T / n`` (``S`` the total score) is
    subtracted, which is the general form; at the maximum it vanishes.
    """
    s = np.atleast_2d(np.asarray(score_rows, dtype=float))
    m = s.T @ s
    if centered:
        tot = s.sum(axis=0)
        m = m - np.outer(tot, tot) / s.shape[0]
    m = 0.5 * (m + m.T)
    ev = np.linalg.eigvalsh(m)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf
    return InfoMatrix(m, cond, bool(ev[0] <= COND_LIMIT ** -1 * max(ev[-1], 1e-300)))


def standard_errors(info):
    """Square roots of the diagonal of the inverse information.

    Coordinates that cannot be resolved (singular information) come back as
    NaN.  A warning is issued when the condition number exceeds 1e12.
    """
    m = info.matrix if isinstance(info, InfoMatrix) else np.asarray(info, dtype=float)
    m = 0.5 * (m + m.T)
    try:
        cf = linalg.cho_factor(m)
        cov = linalg.cho_solve(cf, np.eye(m.shape[0]))
    except linalg.LinAlgError:
        ev, vec = np.linalg.eigh(m)
        good = ev > COND_LIMIT ** -1 * max(ev[-1], 1e-300)
        cov = (vec[:, good] / ev[good]) @ vec[:, good].T
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        # Coordinates touching the null space are not identified.
        null = np.any(np.abs(vec[:, ~good]) > 1e-8, axis=1)
        se[null] = np.nan
        return se
    ev = np.linalg.eigvalsh(m)
    if ev[-1] / ev[0] > COND_LIMIT:
        warnings.warn("information matrix is ill conditioned; standard errors are unreliable",
                      RuntimeWarning, stacklevel=2)
    return np.sqrt(np.diag(cov))


def se_sigma2(se, params):
    """Standard errors with the ``sigma`` entry mapped to ``sigma2`` (delta method)."""
    se = np.array(se, dtype=float, copy=True)
    se[-2] *= 2.0 * params.sigma
    return se


def information_criteria(loglik, k, n):
    """``(aic, bic)`` with ``aic = -2 l + 2 k`` and ``bic = -2 l + k log n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * np.log(n)


def n_params(p, q, normal):
    """Free-parameter count: ``p + q + 2`` for SLn, one more (``nu``) for SLt."""
    return p + q + 2 + (0 if normal else 1)

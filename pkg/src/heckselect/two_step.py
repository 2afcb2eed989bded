"""Heckman two-step estimator and the probit fit it starts from."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CollinearityError, DomainError, SeparationError
from .model import SlParams, dependent_columns
from .special_fn import mills_ratio, norm_logcdf

RHO_CLAMP = 0.999


@dataclass(frozen=True)
class ProbitFit:
    gamma: np.ndarray
    loglik: float
    iterations: int
    converged: bool


def _probit_loglik(eta, q):
    return float(np.sum(norm_logcdf(q * eta)))


# Every row fitted beyond this many standard units on the correct side means
# the score has vanished only because the coefficients are running off.
_SEPARATION_MARGIN = 5.0


def probit_fit(w, c, max_iter=100, tol=1e-8):
    """Probit maximum likelihood by Newton steps with step-halving.

    Parameters
    ----------
    w : ndarray, shape (n, q)
        Design, full column rank.
    c : ndarray of {0, 1}, shape (n,)
        Binary response; both classes must be present.
    tol : float
        Convergence threshold on the Euclidean norm of the score.

    Raises
    ------
    SeparationError
        If the coefficients diverge, which happens under (quasi-)complete
        separation of the two classes.
    """
    w = np.asarray(w, dtype=float)
    c = np.asarray(c)
    if np.all(c == 1) or np.all(c == 0):
        raise DomainError("probit needs both classes present in c")
    if np.linalg.matrix_rank(w) < w.shape[1]:
        raise CollinearityError("probit design is rank deficient",
                                dependent_columns(w, list(range(w.shape[1]))))
    q = 2.0 * c - 1.0
    gamma = np.zeros(w.shape[1])
    eta = w @ gamma
    ll = _probit_loglik(eta, q)
    for it in range(1, max_iter + 1):
        lam = q * mills_ratio(q * eta)
        score = w.T @ lam
        if np.linalg.norm(score) < tol:
            if np.all(q * eta > _SEPARATION_MARGIN):
                raise SeparationError("probit classifies every row perfectly; "
                                      "the classes are separated")
            return ProbitFit(gamma, ll, it - 1, True)
        weight = lam * (lam + eta)
        hess = (w * weight[:, None]).T @ w
        step = np.linalg.solve(hess, score)
        t = 1.0
        while True:
            cand = gamma + t * step
            eta_c = w @ cand
            ll_c = _probit_loglik(eta_c, q)
            if ll_c >= ll - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        gamma, eta, ll = cand, eta_c, ll_c
        if np.linalg.norm(gamma) > 1e3 or ll > -1e-8:
            raise SeparationError("probit coefficients diverge; the classes look separated")
    lam = q * mills_ratio(q * eta)
    return ProbitFit(gamma, ll, max_iter, bool(np.linalg.norm(w.T @ lam) < tol))


def heckman_two_step(data):
    """Two-step estimates of ``(beta, gamma, sigma2, rho)``.

    Step one is a probit of ``c`` on ``w``.  Step two regresses the selected
    outcomes on ``x`` and the inverse Mills ratio ``lambda(w'gamma)``; the
    coefficient on ``lambda`` estimates ``rho * sigma``.  The outcome
    variance is recovered as ``mean(e^2) + rho_star^2 * mean(lambda (lambda + w'gamma))``
    over the selected rows, and ``rho`` is clamped into ``(-0.999, 0.999)``.

    Returns
    -------
    SlParams
        With ``nu = inf``.
    """
    sel = data.selected
    if sel.sum() < data.p + 2:
        raise DomainError("two-step needs at least p + 2 selected rows")
    pf = probit_fit(data.w, data.c)
    gamma = pf.gamma
    wg = data.w[sel] @ gamma
    lam = mills_ratio(wg)
    z = np.column_stack([data.x[sel], lam])
    names = list(data.x_names) + ["inverse_mills"]
    if np.linalg.matrix_rank(z) < z.shape[1] or np.linalg.cond(z) > 1e12:
        cols = dependent_columns(z, names)
        raise CollinearityError(
            f"outcome design is (nearly) collinear with the inverse Mills ratio: {cols}", cols)
    coef, *_ = np.linalg.lstsq(z, data.v1[sel], rcond=None)
    beta, rho_star = coef[:-1], coef[-1]
    resid = data.v1[sel] - z @ coef
    sigma2 = np.mean(resid ** 2) + rho_star ** 2 * np.mean(lam * (lam + wg))
    rho = float(np.clip(rho_star / np.sqrt(sigma2), -RHO_CLAMP, RHO_CLAMP))
    return SlParams(beta, gamma, sigma2, rho)

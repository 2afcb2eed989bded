"""EM-type fitting of the normal (SLn) and Student-t (SLt) selection models.

One iteration consists of

* an E-step, filling the conditional moments ``E[U | obs]``, ``E[U Y | obs]``
  and ``E[U Y Y^T | obs]`` for every row (``U = 1`` in the normal model);
* a closed-form M-step in ``(beta, gamma)`` followed by ``(psi, rho_star)``,
  from which ``(sigma2, rho)`` are recovered;
* for the t model with ``nu`` estimated, a CML step maximizing the observed
  log-likelihood in ``nu`` with the other parameters held fixed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import inference
from .exceptions import CollinearityError, DomainError, HeckselectError
from .model import (
    SlParams,
    TransformedParams,
    conditional_normal,
    dependent_columns,
    loglik,
    nu_profile,
)
from .trunc_moments import (
    SELECTION_REGION,
    conditional_weighted_moments,
    tn1_moments,
    trunc2_moments,
    weighted_moments2,
)

RHO_LIMIT = 1.0 - 1e-8


@dataclass(frozen=True)
class EStepRecord:
    """Conditional moments of one row."""

    y1hat: np.ndarray
    y2hat: np.ndarray
    uhat: float
    uy: np.ndarray
    uyy: np.ndarray


@dataclass(frozen=True, eq=False)
class EStepRecords:
    """E-step output for all rows, stored column-wise.

    ``y1hat`` and ``y2hat`` are the unweighted moments ``E[Y | obs]`` and
    ``E[Y Y^T | obs]``.  The fit loop only needs the weighted moments, so for
    the t model they are filled only when requested (otherwise ``None``).
    """

    uhat: np.ndarray
    uy: np.ndarray
    uyy: np.ndarray
    y1hat: np.ndarray | None = None
    y2hat: np.ndarray | None = None

    def __len__(self):
        return self.uhat.shape[0]

    def __getitem__(self, i):
        y1 = self.y1hat[i] if self.y1hat is not None else None
        y2 = self.y2hat[i] if self.y2hat is not None else None
        return EStepRecord(y1, y2, float(self.uhat[i]), self.uy[i], self.uyy[i])


def estep_sln(params, data):
    """E-step of the normal model.

    Selected rows: ``Y2 | Y1 = v`` is normal, so only a univariate truncated
    normal on ``(0, inf)`` is needed.  Unselected rows: the pair is a
    bivariate normal truncated to ``R x (-inf, 0]``.
    """
    n = data.n
    sel = data.selected
    mu = params.locations(data)
    y1 = np.empty((n, 2))
    y2 = np.empty((n, 2, 2))
    v = data.v1[sel]
    mu_c, s2c = conditional_normal(params, data.x[sel], data.w[sel], v)
    m1, m2 = tn1_moments(mu_c, s2c, 0.0, np.inf)
    y1[sel, 0], y1[sel, 1] = v, m1
    y2[sel] = np.stack([np.stack([v * v, v * m1], -1), np.stack([v * m1, m2], -1)], -2)
    if np.any(~sel):
        _, b1, b2 = trunc2_moments(mu[~sel], params.Sigma, np.inf,
                                   SELECTION_REGION.lower, SELECTION_REGION.upper)
        y1[~sel], y2[~sel] = b1, b2
    return EStepRecords(uhat=np.ones(n), uy=y1, uyy=y2, y1hat=y1, y2hat=y2)


def estep_slt(params, data, plain_moments=False):
    """E-step of the t model (needs finite ``nu > 2``).

    Unselected rows use the unconditional weighted-moment identity with
    ``r = 1``: the weighted moments are those of a bivariate t with
    ``nu + 2`` degrees of freedom and scale ``nu Sigma / (nu + 2)``, times a
    ratio of selection probabilities.  Selected rows use the conditional
    identity given ``Y1 = v``: a univariate t with ``nu + 3`` degrees of
    freedom on ``[0, inf)``.
    """
    nu = params.nu
    if not (np.isfinite(nu) and nu > 2):
        raise DomainError(f"estep_slt needs finite nu > 2, got {nu}")
    n = data.n
    sel = data.selected
    mu = params.locations(data)
    S = params.Sigma
    uhat = np.empty(n)
    uy = np.empty((n, 2))
    uyy = np.empty((n, 2, 2))
    v = data.v1[sel]
    e0, e1, e2 = conditional_weighted_moments(v, mu[sel], S, nu, 0.0, np.inf)
    uhat[sel] = e0
    uy[sel, 0], uy[sel, 1] = v * e0, e1
    uyy[sel] = np.stack([np.stack([v * v * e0, v * e1], -1), np.stack([v * e1, e2], -1)], -2)
    if np.any(~sel):
        f0, f1, f2 = weighted_moments2(mu[~sel], S, nu, SELECTION_REGION.lower,
                                       SELECTION_REGION.upper)
        uhat[~sel], uy[~sel], uyy[~sel] = f0, f1, f2
    y1 = y2 = None
    if plain_moments:
        y1, y2 = _plain_t_moments(params, data, mu)
    return EStepRecords(uhat=uhat, uy=uy, uyy=uyy, y1hat=y1, y2hat=y2)


def _plain_t_moments(params, data, mu):
    from .model import conditional_t
    from .trunc_moments import tt1_moments

    sel = data.selected
    n = data.n
    y1 = np.empty((n, 2))
    y2 = np.empty((n, 2, 2))
    v = data.v1[sel]
    mu_t, s2t, _ = conditional_t(params, data.x[sel], data.w[sel], v)
    m1, m2 = tt1_moments(mu_t, s2t, params.nu + 1.0, 0.0, np.inf)
    y1[sel, 0], y1[sel, 1] = v, m1
    y2[sel] = np.stack([np.stack([v * v, v * m1], -1), np.stack([v * m1, m2], -1)], -2)
    if np.any(~sel):
        _, b1, b2 = trunc2_moments(mu[~sel], params.Sigma, params.nu,
                                   SELECTION_REGION.lower, SELECTION_REGION.upper)
        y1[~sel], y2[~sel] = b1, b2
    return y1, y2


def estep(params, data, plain_moments=False):
    """Dispatch to the E-step of the family implied by ``params.nu``."""
    if params.is_normal:
        return estep_sln(params, data)
    return estep_slt(params, data, plain_moments=plain_moments)


def _mstep(records, data, params, literal=False):
    """Shared M-step; the normal model is the case ``uhat = 1``.

    ``(beta, gamma)`` solve the weighted normal equations with weight
    ``Sigma^{-1}`` at the current ``Sigma``.  With ``literal=True`` the weight
    is ``Sigma`` itself and ``psi`` is updated with the previous
    ``rho_star`` (kept for comparison only; it is not an ascent step).
    """
    x, w = data.x, data.w
    p = data.p
    u, uy, uyy = records.uhat, records.uy, records.uyy
    S = params.Sigma
    Om = S if literal else np.linalg.inv(S)
    ux = x * u[:, None]
    uw = w * u[:, None]
    A = np.block([[Om[0, 0] * ux.T @ x, Om[0, 1] * ux.T @ w],
                  [Om[1, 0] * uw.T @ x, Om[1, 1] * uw.T @ w]])
    b = np.concatenate([x.T @ (Om[0, 0] * uy[:, 0] + Om[0, 1] * uy[:, 1]),
                        w.T @ (Om[1, 0] * uy[:, 0] + Om[1, 1] * uy[:, 1])])
    names = [f"x:{s}" for s in data.x_names] + [f"w:{s}" for s in data.w_names]
    if np.linalg.cond(A) > 1e13:
        cols = dependent_columns(A, names)
        raise CollinearityError(f"M-step normal equations are singular: {cols}", cols)
    coef = np.linalg.solve(A, b)
    beta, gamma = coef[:p], coef[p:]
    mu = np.column_stack([x @ beta, w @ gamma])
    G = (uyy - uy[:, :, None] * mu[:, None, :] - mu[:, :, None] * uy[:, None, :]
         + u[:, None, None] * mu[:, :, None] * mu[:, None, :]).sum(axis=0)
    n = data.n
    rho_star = G[0, 1] / G[1, 1]
    rs_psi = params.rho * params.sigma if literal else rho_star
    psi = (G[0, 0] - 2.0 * rs_psi * G[0, 1] + rs_psi ** 2 * G[1, 1]) / n
    if not psi > 0:
        raise HeckselectError("M-step produced a non-positive psi")
    tp = TransformedParams(psi=psi, rho_star=rho_star)
    rho = tp.rho
    if abs(rho) >= RHO_LIMIT:
        warnings.warn("M-step rho reached the boundary and was clamped", RuntimeWarning,
                      stacklevel=3)
        rho = float(np.sign(rho) * RHO_LIMIT)
    return SlParams(beta, gamma, tp.sigma2, rho, params.nu)


def mstep_sln(records, data, params, literal=False):
    """M-step of the normal model; returns updated parameters (``nu = inf``)."""
    return _mstep(records, data, params, literal=literal)


def mstep_slt(records, data, params, literal=False):
    """M-step of the t model; ``nu`` is carried over unchanged."""
    return _mstep(records, data, params, literal=literal)


@dataclass(frozen=True)
class NuStep:
    nu: float
    loglik: float
    at_upper: bool
    evaluations: int


def cml_step_nu(params, data, bounds=(2.01, 200.0), xatol=1e-4, maxiter=60, window=None):
    """Maximize the observed log-likelihood in ``nu``, other parameters fixed.

    Bounded Brent search (golden section with parabolic steps) on
    ``log(nu)``, to absolute tolerance `xatol` in ``nu``.  With `window` set,
    the search first runs over ``log(nu) +- window`` around the current
    value and widens to the full `bounds` only if the maximizer lands on the
    window edge.  ``at_upper`` flags a maximizer on the upper bound, i.e. a
    fit that is effectively normal.
    """
    lo, hi = np.log(float(bounds[0])), np.log(float(bounds[1]))
    if not (np.log(2.0) < lo < hi):
        raise DomainError("nu bounds must satisfy 2 < lower < upper")
    prof = nu_profile(params, data)
    nfev = 0

    def negll(t):
        nonlocal nfev
        nfev += 1
        try:
            return -prof(float(np.exp(t)))
        except HeckselectError:
            return np.inf

    def search(a, b):
        res = optimize.minimize_scalar(negll, bounds=(a, b), method="bounded",
                                       options={"xatol": xatol / np.exp(b), "maxiter": maxiter})
        return float(res.x), -float(res.fun)

    a, b = lo, hi
    if window is not None and np.isfinite(params.nu):
        c = np.log(np.clip(params.nu, *np.exp([lo, hi])))
        a, b = max(lo, c - window), min(hi, c + window)
    t, ll = search(a, b)
    edge = 4.0 * xatol / np.exp(b)
    if (a > lo and t - a < edge) or (b < hi and b - t < edge):
        t, ll = search(lo, hi)
    # Bounded Brent never evaluates the endpoints themselves.
    for e in (lo, hi):
        if abs(t - e) < 1e-2:
            ll_e = -negll(e)
            if ll_e >= ll:
                t, ll = e, ll_e
    nu = float(np.exp(t))
    return NuStep(nu=nu, loglik=ll, at_upper=bool(t >= hi - 1e-4), evaluations=nfev)


@dataclass(frozen=True)
class FitOptions:
    """Options of :func:`fit`.

    Parameters
    ----------
    family : {"normal", "t"}
    nu : float or "estimate"
        Fixed degrees of freedom, or ``"estimate"`` for the CML step.
        Ignored for the normal family.
    tol : float
        Stop when ``|l_{k+1} / l_k - 1| < tol``.
    max_iter : int
    nu_bounds : (float, float)
        Search interval of the CML step.
    init : "two_step" or SlParams
    nu_init : float
        Starting ``nu`` when it is estimated.
    nu_every : int
        Run the CML step every ``nu_every`` iterations.
    grad_tol : float or None
        Additional stopping requirement: the largest absolute component of the
        observed-data gradient in ``(beta, gamma, sigma2, rho)`` must be below
        this value.  ``None`` uses the relative-change rule alone.
    nu_window : float or None
        Half-width, on the ``log(nu)`` scale, of the first search interval of
        the CML step around the current ``nu``; ``None`` searches all of
        `nu_bounds` every time.
    literal_mstep : bool
        Debug switch for the variant of the M-step with ``Sigma`` weights.
    """

    family: str = "normal"
    nu: float | str = "estimate"
    tol: float = 1e-6
    max_iter: int = 500
    nu_bounds: tuple = (2.01, 200.0)
    init: object = "two_step"
    nu_init: float = 10.0
    nu_every: int = 1
    grad_tol: float | None = None
    nu_window: float | None = 0.5
    literal_mstep: bool = False

    def __post_init__(self):
        if self.family not in ("normal", "t"):
            raise DomainError(f"unknown family {self.family!r}")
        if not self.tol > 0:
            raise DomainError("tol must be > 0")
        if not (2.0 < self.nu_bounds[0] < self.nu_bounds[1]):
            raise DomainError("nu_bounds must lie inside (2, inf)")
        if self.max_iter < 0 or self.nu_every < 1:
            raise DomainError("max_iter must be >= 0 and nu_every >= 1")
        if self.family == "t" and self.nu != "estimate" and not float(self.nu) > 2:
            raise DomainError("a fixed nu must be > 2 for the E-step moments to exist")

    @property
    def estimate_nu(self):
        return self.family == "t" and self.nu == "estimate"


@dataclass(frozen=True, eq=False)
class FitResult:
    """Output of :func:`fit`.

    ``se`` follows ``params.theta()`` ordering ``(beta, gamma, sigma2, rho)``;
    ``se_sigma`` is the standard error of ``sigma`` itself.  The standard
    error of ``nu`` is not computed (``se_nu`` is ``None``).
    """

    params: SlParams
    se: np.ndarray
    loglik: float
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    aic: float
    bic: float
    k: int
    n: int
    family: str
    nu_trace: np.ndarray = field(default=None)
    normal_limit: bool = False
    info_condition: float = np.nan
    grad_max: float = np.nan
    warnings: tuple = ()
    se_sigma: float = np.nan
    se_nu: None = None

    def summary(self, names=None, digits=4):
        th = self.params.theta()
        names = names or [f"theta{i}" for i in range(th.size)]
        lines = [f"{'param':>12} {'estimate':>12} {'se':>12}"]
        for nm, e, s in zip(names, th, self.se):
            lines.append(f"{nm:>12} {e:>12.{digits}f} {s:>12.{digits}f}")
        if self.family == "t":
            lines.append(f"{'nu':>12} {self.params.nu:>12.{digits}f} {'-':>12}")
        lines.append(f"loglik = {self.loglik:.{digits}f}  AIC = {self.aic:.{digits}f}  "
                     f"BIC = {self.bic:.{digits}f}  iterations = {self.iterations}  "
                     f"converged = {self.converged}")
        return "\n".join(lines)


def param_names(data):
    return ([f"beta:{s}" for s in data.x_names] + [f"gamma:{s}" for s in data.w_names]
            + ["sigma2", "rho"])


def observed_gradient(params, data, records=None):
    """Gradient of the observed log-likelihood in ``(beta, gamma, sigma2, rho)``."""
    if records is None:
        records = estep(params, data)
    s = inference.scores(params, data, records).sum(axis=0)
    return inference.to_sigma2_scale(s, params)


def _initial(data, options):
    from .two_step import heckman_two_step

    if isinstance(options.init, SlParams):
        init = options.init
    elif options.init in ("two_step", "two-step"):
        init = heckman_two_step(data)
    else:
        raise DomainError(f"unknown init {options.init!r}")
    if options.family == "normal":
        return init.with_(nu=np.inf)
    if options.estimate_nu:
        nu0 = init.nu if np.isfinite(init.nu) else options.nu_init
        nu0 = float(np.clip(nu0, *options.nu_bounds))
    else:
        nu0 = float(options.nu)
    return init.with_(nu=nu0)


def fit(data, options=None, **kw):
    """Fit a selection model by EM.

    Parameters
    ----------
    data : Dataset
    options : FitOptions, optional
        Keyword arguments build a ``FitOptions`` when `options` is omitted.

    Returns
    -------
    FitResult
        ``converged`` is False when `max_iter` is hit; the last iterate is
        returned in that case.
    """
    if options is None:
        options = FitOptions(**kw)
    elif kw:
        raise TypeError("pass either options or keyword arguments, not both")
    params = _initial(data, options)
    notes = []
    ll = loglik(params, data)
    trace = [ll]
    nus = [params.nu]
    rel = np.inf
    converged = False
    normal_limit = False
    it = 0
    records = None
    mstep = mstep_sln if options.family == "normal" else mstep_slt
    while True:
        try:
            records = estep(params, data)
        except HeckselectError as exc:
            raise type(exc)(f"E-step failed at iteration {it}: {exc}") from exc
        if it > 0 and rel < options.tol:
            if options.grad_tol is None:
                converged = True
            else:
                g = observed_gradient(params, data, records)
                converged = bool(np.max(np.abs(g)) < options.grad_tol)
        if converged or it >= options.max_iter:
            break
        try:
            new = mstep(records, data, params, literal=options.literal_mstep)
        except HeckselectError as exc:
            raise type(exc)(f"M-step failed at iteration {it}: {exc}") from exc
        ll_new = loglik(new, data)
        if options.estimate_nu and (it % options.nu_every == 0):
            step = cml_step_nu(new, data, options.nu_bounds, window=options.nu_window)
            if step.loglik > ll_new:
                new, ll_new = new.with_(nu=step.nu), step.loglik
                normal_limit = step.at_upper
        rel = abs(ll_new / ll - 1.0)
        params, ll = new, ll_new
        trace.append(ll)
        nus.append(params.nu)
        it += 1
    if not converged:
        notes.append(f"EM did not converge within {options.max_iter} iterations")
    if normal_limit:
        notes.append("nu reached its upper bound; the fit is effectively normal")
    score_rows = inference.scores(params, data, records)
    grad = inference.to_sigma2_scale(score_rows.sum(axis=0), params)
    info = inference.empirical_info(score_rows)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        se_raw = inference.standard_errors(info)
    se = inference.se_sigma2(se_raw, params)
    notes.extend(str(c.message) for c in caught)
    k = inference.n_params(data.p, data.q, options.family == "normal")
    aic, bic = inference.information_criteria(ll, k, data.n)
    return FitResult(params=params, se=se, loglik=ll, loglik_trace=np.array(trace),
                     iterations=it, converged=converged, aic=aic, bic=bic, k=k, n=data.n,
                     family=options.family, nu_trace=np.array(nus),
                     normal_limit=normal_limit, info_condition=info.condition,
                     grad_max=float(np.max(np.abs(grad))), warnings=tuple(notes),
                     se_sigma=float(se_raw[-2]))

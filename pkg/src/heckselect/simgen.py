"""Synthetic selection data and the Monte Carlo study runner.

Errors are scale mixtures of normals, ``eps = U^{-1/2} Z`` with
``Z ~ N2(0, Sigma)``:

* normal: ``U = 1``;
* Student-t(nu): ``U ~ Gamma(nu/2, rate = nu/2)``;
* slash(nu): ``U ~ Beta(nu, 1)``, i.e. mixing density ``nu u^(nu - 1)`` on (0, 1).

The design follows the usual two-covariate layout: ``w = (1, U(-1, 1), N(0, 1))``
and ``x = (1, w1)``, so ``w2`` is the exclusion restriction.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, optimize, special

from .em import FitOptions, fit
from .exceptions import DomainError, HeckselectError
from .model import Dataset, SlParams

FAMILIES = ("normal", "t", "slash")


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process of a simulation scenario.

    ``gamma0 = None`` calibrates the selection intercept so that the expected
    missing fraction equals ``target_missing``.
    """

    family: str = "normal"
    nu: float = np.inf
    n: int = 500
    beta: tuple = (1.0, 0.5)
    gamma0: float | None = None
    gamma_slopes: tuple = (0.3, -0.5)
    sigma2: float = 1.0
    rho: float = 0.6
    target_missing: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}")
        if self.family != "normal" and not (self.nu > 0 and np.isfinite(self.nu)):
            raise DomainError("t and slash families need a finite nu > 0")
        if not 0 < self.target_missing < 1:
            raise DomainError("target_missing must lie in (0, 1)")
        if not self.sigma2 > 0 or not abs(self.rho) < 1 or self.n < 1:
            raise DomainError("invalid sigma2, rho or n")

    @property
    def gamma(self):
        g0 = self.gamma0
        if g0 is None:
            g0 = calibrate_intercept(self.family, self.nu, self.target_missing)
        return (float(g0),) + tuple(self.gamma_slopes)

    @property
    def params(self):
        nu = np.inf if self.family == "normal" else self.nu
        return SlParams(self.beta, self.gamma, self.sigma2, self.rho, nu)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "nu" in d and d["nu"] in (None, "inf", "Infinity"):
            d["nu"] = np.inf
        for key in ("beta", "gamma_slopes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["nu"] = None if np.isinf(self.nu) else self.nu
        return d


def slash_cdf(x, nu):
    """CDF of the standard univariate slash law with mixing ``Beta(nu, 1)``."""
    f = lambda u: special.ndtr(x * np.sqrt(u)) * nu * u ** (nu - 1.0)  # noqa: E731
    return integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)[0]


def calibrate_intercept(family, nu=np.inf, target_missing=0.25):
    """Selection intercept ``gamma0 = -Q(target_missing)``.

    ``Q`` is the quantile function of the (unit-scale) marginal law of the
    selection error, so ``P(eps2 <= -gamma0) = target_missing`` when the
    remaining selection covariates have mean zero.
    """
    if not 0 < target_missing < 1:
        raise DomainError("target_missing must lie in (0, 1)")
    if family == "normal":
        return float(-special.ndtri(target_missing))
    if family == "t":
        return float(-special.stdtrit(nu, target_missing))
    if family == "slash":
        lo = special.ndtri(target_missing) * 0.5 - 1.0
        while slash_cdf(lo, nu) > target_missing:
            lo *= 2.0
        hi = -lo
        q = optimize.brentq(lambda t: slash_cdf(t, nu) - target_missing, lo, hi, xtol=1e-12)
        return float(-q)
    raise DomainError(f"unknown family {family!r}")


def mixing_draws(family, nu, size, rng):
    """Draws of the mixing variable ``U`` (``eps = U^{-1/2} Z``)."""
    if family == "normal":
        return np.ones(size)
    if family == "t":
        return rng.gamma(0.5 * nu, 2.0 / nu, size)
    if family == "slash":
        return rng.beta(nu, 1.0, size)
    raise DomainError(f"unknown family {family!r}")


def draw_errors(family, nu, sigma2, rho, size, rng):
    """``(size, 2)`` error pairs with scale ``[[sigma2, rho sigma], [rho sigma, 1]]``."""
    z = rng.standard_normal((size, 2))
    s = np.sqrt(sigma2)
    e1 = s * z[:, 0]
    e2 = rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1]
    u = mixing_draws(family, nu, size, rng)
    return np.column_stack([e1, e2]) / np.sqrt(u)[:, None]


def simulate_outcomes(params, x, w, family, rng):
    """Dataset with the given designs and freshly drawn errors."""
    nu = params.nu if family != "normal" else np.inf
    eps = draw_errors(family, nu, params.sigma2, params.rho, x.shape[0], rng)
    y1 = x @ params.beta + eps[:, 0]
    y2 = w @ params.gamma + eps[:, 1]
    c = (y2 > 0).astype(int)
    return y1, c


def generate(config, rng=None):
    """Draw a Dataset from `config`.

    `rng` defaults to a generator seeded with ``config.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.n
    w = np.column_stack([np.ones(n), rng.uniform(-1.0, 1.0, n), rng.standard_normal(n)])
    x = w[:, :2]
    y1, c = simulate_outcomes(config.params, x, w, config.family, rng)
    return Dataset(c, np.where(c == 1, y1, np.nan), x, w,
                   x_names=("const", "w1"), w_names=("const", "w1", "w2"))


def replicate_rng(seed, index):
    """Independent generator of replicate `index` under master `seed`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def finite_difference_gradient(params, data, step=1e-5):
    """Central differences of the observed log-likelihood in ``(beta, gamma, sigma2, rho)``."""
    from .model import loglik

    th = params.theta()
    p = params.beta.size
    g = np.empty(th.size)
    for j in range(th.size):
        h = step * max(1.0, abs(th[j]))
        a, b = th.copy(), th.copy()
        a[j] += h
        b[j] -= h
        g[j] = (loglik(SlParams.from_theta(a, p, params.nu), data)
                - loglik(SlParams.from_theta(b, p, params.nu), data)) / (2.0 * h)
    return g


@dataclass
class ReplicateRecord:
    replicate: int
    family: str
    converged: bool
    estimates: np.ndarray | None = None
    se: np.ndarray | None = None
    nu: float = np.nan
    loglik: float = np.nan
    aic: float = np.nan
    bic: float = np.nan
    iterations: int = 0
    grad_max: float = np.nan
    fd_grad_max: float = np.nan
    se_sigma: float = np.nan
    error: str | None = None


@dataclass
class McSummary:
    """Monte Carlo summary of one fitted family."""

    family: str
    names: list
    true: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    mc_sd: np.ndarray
    mean_nu: float
    mean_aic: float
    mean_bic: float
    replicates: int
    failures: int
    records: list = field(default_factory=list)


def _fit_options(family, base):
    if family == "normal":
        return replace(base, family="normal")
    return replace(base, family="t")


def _run_replicate(args):
    config, index, families, base, check_fd = args
    data = generate(config, replicate_rng(config.seed, index))
    out = []
    for fam in families:
        try:
            res = fit(data, _fit_options(fam, base))
            rec = ReplicateRecord(index, fam, res.converged, res.params.theta(), res.se,
                                  res.params.nu, res.loglik, res.aic, res.bic, res.iterations,
                                  res.grad_max, se_sigma=res.se_sigma)
            if check_fd and res.converged:
                rec.fd_grad_max = float(np.max(np.abs(
                    finite_difference_gradient(res.params, data))))
        except HeckselectError as exc:
            rec = ReplicateRecord(index, fam, False, error=f"{type(exc).__name__}: {exc}")
        out.append(rec)
    return out


def default_threads():
    """Worker count from the ``HECKSELECT_THREADS`` environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("HECKSELECT_THREADS", "1")))
    except ValueError:
        return 1


def mc_study(config, fit_families=("normal", "t"), replicates=100, fit_options=None,
             parallelism=None, check_fd=False):
    """Generate, fit and summarize `replicates` datasets.

    Replicate ``i`` draws its data from ``replicate_rng(config.seed, i)``, so
    results do not depend on `parallelism`.  Failed and non-converged fits
    are excluded from the summaries and counted in ``failures``.

    Returns
    -------
    dict
        Family name to :class:`McSummary`.
    """
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    base = fit_options or FitOptions()
    parallelism = parallelism or default_threads()
    jobs = [(config, i, tuple(fit_families), base, check_fd) for i in range(replicates)]
    if parallelism > 1:
        with ProcessPoolExecutor(parallelism) as ex:
            results = list(ex.map(_run_replicate, jobs))
    else:
        results = [_run_replicate(j) for j in jobs]
    records = sorted((r for rs in results for r in rs), key=lambda r: (r.family, r.replicate))
    true = config.params.theta()
    names = (["beta0", "beta1"] + [f"gamma{j}" for j in range(len(config.gamma))]
             + ["sigma2", "rho"])
    out = {}
    for fam in fit_families:
        recs = [r for r in records if r.family == fam]
        ok = [r for r in recs if r.converged]
        if ok:
            est = np.array([r.estimates for r in ok])
            se = np.array([r.se for r in ok])
            summ = McSummary(fam, names, true, est.mean(0), np.nanmean(se, 0),
                             est.std(0, ddof=1) if len(ok) > 1 else np.zeros(true.size),
                             float(np.mean([r.nu for r in ok])),
                             float(np.mean([r.aic for r in ok])),
                             float(np.mean([r.bic for r in ok])),
                             len(ok), len(recs) - len(ok), recs)
        else:
            nanv = np.full(true.size, np.nan)
            summ = McSummary(fam, names, true, nanv, nanv, nanv, np.nan, np.nan, np.nan,
                             0, len(recs), recs)
        out[fam] = summ
    return out


def rho_sweep(base, rhos=(0.2, 0.4, 0.6, 0.8)):
    """Configs varying the error correlation."""
    return [replace(base, rho=r) for r in rhos]


def missing_sweep(base, rates=(0.10, 0.25, 0.50)):
    """Configs varying the expected missing fraction (intercept recalibrated)."""
    return [replace(base, target_missing=m, gamma0=None) for m in rates]


def load_config(path):
    """Read a study configuration from a JSON document.

    Keys ``dgp`` (fields of :class:`DgpConfig`), ``fit`` (fields of
    :class:`FitOptions`), ``families`` and ``replicates`` are recognized.
    """
    with open(path) as fh:
        doc = json.load(fh)
    dgp = DgpConfig.from_dict(doc.get("dgp", {}))
    fit_kw = dict(doc.get("fit", {}))
    if "nu_bounds" in fit_kw:
        fit_kw["nu_bounds"] = tuple(fit_kw["nu_bounds"])
    return {"dgp": dgp, "fit": FitOptions(**fit_kw),
            "families": tuple(doc.get("families", ("normal", "t"))),
            "replicates": int(doc.get("replicates", 100))}


def _g(v):
    return "NA" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def write_summary_csv(summaries, path):
    """Table layout: one row per parameter, TRUE then EM/SE/MC_SE per family; AIC and BIC rows."""
    fams = list(summaries)
    first = summaries[fams[0]]
    header = ["parameter", "TRUE"]
    for f in fams:
        header += [f"{f}_EM", f"{f}_SE", f"{f}_MC_SE"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for j, nm in enumerate(first.names):
            row = [nm, _g(first.true[j])]
            for f in fams:
                s = summaries[f]
                row += [_g(s.mean[j]), _g(s.mean_se[j]), _g(s.mc_sd[j])]
            wr.writerow(row)
        for label, attr in (("nu", "mean_nu"), ("AIC", "mean_aic"), ("BIC", "mean_bic")):
            row = [label, "NA"]
            for f in fams:
                row += [_g(getattr(summaries[f], attr)), "NA", "NA"]
            wr.writerow(row)
        row = ["replicates", "NA"]
        for f in fams:
            row += [str(summaries[f].replicates), str(summaries[f].failures), "NA"]
        wr.writerow(row)


def write_long_csv(summaries, path, scenario=""):
    """Long format of centred estimates (estimate minus truth), ready for boxplots."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "family", "replicate", "parameter", "estimate", "centred"])
        for fam, s in summaries.items():
            for r in s.records:
                if not r.converged:
                    continue
                for j, nm in enumerate(s.names):
                    wr.writerow([scenario, fam, r.replicate, nm, _g(r.estimates[j]),
                                 _g(r.estimates[j] - s.true[j])])

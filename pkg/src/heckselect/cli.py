"""Command-line interface: ``heckselect {fit,simulate,mcstudy,residuals}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .exceptions import HeckselectError
from .model import Dataset, SlParams

SCHEMA_VERSION = 1
MISSING = {"", "na"}


class CsvFormatError(HeckselectError, ValueError):
    """A CSV cell could not be parsed, or a row contradicts the selection contract."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass
class ColumnBindings:
    """Which CSV columns play which role."""

    outcome: str
    select: str
    x: list = field(default_factory=list)
    w: list = field(default_factory=list)
    intercept: bool = True


def _parse_float(cell, row, col):
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number",
                             row, col) from None


def load_csv(path, bindings):
    """Read a Dataset from a CSV file with a header row.

    Outcome cells of unselected rows must be empty or ``NA`` (any case).
    Row numbers in errors count the header as row 1.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [bindings.outcome, bindings.select, *bindings.x, *bindings.w]
        absent = [c for c in needed if c not in header]
        if absent:
            raise CsvFormatError(f"columns not found in {path}: {absent}")
        c, v, xs, ws = [], [], [], []
        for i, rec in enumerate(reader, start=2):
            sel_cell = rec[bindings.select].strip()
            if sel_cell not in ("0", "1", "0.0", "1.0"):
                raise CsvFormatError(f"row {i}, column {bindings.select!r}: selection "
                                     f"indicator must be 0 or 1, got {sel_cell!r}",
                                     i, bindings.select)
            ci = int(float(sel_cell))
            cell = rec[bindings.outcome].strip()
            if cell.lower() in MISSING:
                if ci == 1:
                    raise CsvFormatError(f"row {i}: outcome missing on a selected row",
                                         i, bindings.outcome)
                vi = np.nan
            else:
                if ci == 0:
                    raise CsvFormatError(f"row {i}: unselected row has an observed outcome "
                                         f"{cell!r}", i, bindings.outcome)
                vi = _parse_float(cell, i, bindings.outcome)
            c.append(ci)
            v.append(vi)
            xs.append([_parse_float(rec[k].strip(), i, k) for k in bindings.x])
            ws.append([_parse_float(rec[k].strip(), i, k) for k in bindings.w])
    n = len(c)
    x = np.array(xs, dtype=float).reshape(n, len(bindings.x))
    w = np.array(ws, dtype=float).reshape(n, len(bindings.w))
    xn, wn = list(bindings.x), list(bindings.w)
    if bindings.intercept:
        x = np.column_stack([np.ones(n), x])
        w = np.column_stack([np.ones(n), w])
        xn, wn = ["const"] + xn, ["const"] + wn
    return Dataset(np.array(c), np.array(v), x, w, xn, wn)


def exclusion_warning(bindings):
    """Warning text when the selection design adds no column beyond the outcome design."""
    if set(bindings.w) <= set(bindings.x):
        return ("exclusion restriction does not hold: every selection covariate also "
                "enters the outcome equation")
    return None


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else (v if math.isfinite(v) else ("Infinity" if v > 0 else "-Infinity"))


def result_document(res, data, warnings=()):
    """JSON-serializable document of a FitResult."""
    from .em import param_names

    names = param_names(data)
    th = res.params.theta()
    return {
        "schema_version": SCHEMA_VERSION,
        "family": res.family,
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "n": int(res.n),
        "k": int(res.k),
        "loglik": _num(res.loglik),
        "aic": _num(res.aic),
        "bic": _num(res.bic),
        "estimates": {k: _num(v) for k, v in zip(names, th)},
        "se": {k: _num(v) for k, v in zip(names, res.se)},
        "se_sigma": _num(res.se_sigma),
        "nu": None if res.params.is_normal else _num(res.params.nu),
        "se_nu": None,
        "normal_limit": bool(res.normal_limit),
        "info_condition": _num(res.info_condition),
        "max_abs_gradient": _num(res.grad_max),
        "loglik_trace": [_num(v) for v in res.loglik_trace],
        "warnings": list(warnings) + list(res.warnings),
    }


def two_step_document(params, data, warnings=()):
    from .em import param_names

    names = param_names(data)
    return {"schema_version": SCHEMA_VERSION, "method": "two-step",
            "estimates": {k: _num(v) for k, v in zip(names, params.theta())},
            "warnings": list(warnings)}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _dump(doc, path):
    text = json.dumps(doc, indent=2, default=_json_default)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _fmt17(v):
    return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.17g}"


def _split_cols(values):
    out = []
    for v in values or []:
        out.extend(s for s in v.split(",") if s)
    return out


def _bindings(args):
    return ColumnBindings(args.outcome, args.select, _split_cols(args.x), _split_cols(args.w),
                          not args.no_intercept)


def _fit_options(args):
    from .em import FitOptions

    nu = args.nu if args.nu == "estimate" else float(args.nu)
    init = "two_step"
    if args.init == "file":
        if not args.init_file:
            raise HeckselectError("--init file needs --init-file PATH")
        with open(args.init_file) as fh:
            d = json.load(fh)
        init = SlParams(d["beta"], d["gamma"], d["sigma2"], d["rho"],
                        d.get("nu") or np.inf)
    return FitOptions(family=args.family, nu=nu, tol=args.tol, max_iter=args.max_iter,
                      nu_bounds=tuple(args.nu_bounds), init=init, grad_tol=args.grad_tol)


def cmd_fit(args):
    from .em import fit
    from .two_step import heckman_two_step

    b = _bindings(args)
    warns = [w for w in [exclusion_warning(b)] if w]
    for w in warns:
        print(f"warning: {w}", file=sys.stderr)
    data = load_csv(args.input, b)
    if args.method == "two-step":
        _dump(two_step_document(heckman_two_step(data), data, warns), args.output)
        return 0
    res = fit(data, _fit_options(args))
    if not res.converged:
        print("warning: EM did not converge", file=sys.stderr)
    _dump(result_document(res, data, warns), args.output)
    if args.output not in (None, "-"):
        from .em import param_names

        print(res.summary(param_names(data)))
    return 0


def cmd_simulate(args):
    from .simgen import DgpConfig, generate

    nu = np.inf if args.family == "normal" else args.dgp_nu
    cfg = DgpConfig(family=args.family, nu=nu, n=args.n, rho=args.rho, sigma2=args.sigma2,
                    gamma0=args.gamma0, target_missing=args.missing, seed=args.seed)
    data = generate(cfg)
    out = sys.stdout if args.output in (None, "-") else open(args.output, "w", newline="")
    try:
        wr = csv.writer(out)
        wr.writerow(["c", "y", "w1", "w2"])
        for i in range(data.n):
            wr.writerow([int(data.c[i]), _fmt17(data.v1[i]) if data.c[i] else "NA",
                         _fmt17(data.w[i, 1]), _fmt17(data.w[i, 2])])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_mcstudy(args):
    from dataclasses import replace

    from .em import FitOptions
    from .simgen import DgpConfig, load_config, mc_study, write_long_csv, write_summary_csv

    if args.config:
        cfg = load_config(args.config)
    else:
        nu = np.inf if args.family == "normal" else args.dgp_nu
        cfg = {"dgp": DgpConfig(family=args.family, nu=nu, n=args.n, rho=args.rho,
                                target_missing=args.missing, seed=args.seed),
               "fit": FitOptions(tol=args.tol, max_iter=args.max_iter, grad_tol=args.grad_tol),
               "families": ("normal", "t"), "replicates": args.replicates}
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if args.seed is not None and args.config:
        cfg["dgp"] = replace(cfg["dgp"], seed=args.seed)
    summ = mc_study(cfg["dgp"], cfg["families"], cfg["replicates"], cfg["fit"],
                    parallelism=args.threads)
    prefix = args.output
    write_summary_csv(summ, f"{prefix}_summary.csv")
    write_long_csv(summ, f"{prefix}_long.csv", scenario=cfg["dgp"].family)
    for fam, s in summ.items():
        print(f"{fam}: {s.replicates} converged, {s.failures} excluded")
    return 0


def plot_envelope(env, r_mt, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    q = env.sorted_theoretical
    ax.plot(q, env.low, color="0.4", lw=1)
    ax.plot(q, env.high, color="0.4", lw=1)
    ax.plot(q, env.median, color="0.4", lw=1, ls="--")
    ax.scatter(q, np.sort(r_mt), s=8, color="k")
    ax.set_xlabel("standard normal quantile")
    ax.set_ylabel("ordered martingale-type residual")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_residuals(args):
    from .diagnostics import martingale_residuals, simulated_envelope
    from .em import fit

    b = _bindings(args)
    data = load_csv(args.input, b)
    opts = _fit_options(args)
    res = fit(data, opts)
    if not res.converged:
        print("warning: EM did not converge", file=sys.stderr)
    rs = martingale_residuals(res, data)
    env = simulated_envelope(res, data, n_sim=args.replicates, coverage=args.coverage,
                             seed=args.seed, refit=args.refit_envelope, fit_options=opts)
    prefix = args.output
    with open(f"{prefix}_residuals.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["row", "c", "r_m", "r_mt"])
        for i in range(data.n):
            wr.writerow([i, int(rs.c[i]), _fmt17(rs.r_m[i]), _fmt17(rs.r_mt[i])])
    with open(f"{prefix}_envelope.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["rank", "theoretical", "observed", "low", "median", "high"])
        obs = np.sort(rs.r_mt)
        for i in range(data.n):
            wr.writerow([i + 1, _fmt17(env.sorted_theoretical[i]), _fmt17(obs[i]),
                         _fmt17(env.low[i]), _fmt17(env.median[i]), _fmt17(env.high[i])])
    plot_envelope(env, rs.r_mt, f"{prefix}_qq.svg")
    print(f"{100 * env.fraction_outside(rs.r_mt):.1f}% of residuals outside the "
          f"{100 * args.coverage:g}% envelope")
    return 0


def _add_fit_flags(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--outcome", required=True, help="outcome column (empty/NA when unselected)")
    p.add_argument("--select", required=True, help="0/1 selection indicator column")
    p.add_argument("--x", action="append", default=[], help="outcome covariates (comma list)")
    p.add_argument("--w", action="append", default=[], help="selection covariates (comma list)")
    p.add_argument("--no-intercept", action="store_true", help="do not prepend intercepts")
    p.add_argument("--family", choices=("normal", "t"), default="normal")
    p.add_argument("--nu", default="estimate", help="degrees of freedom or 'estimate'")
    p.add_argument("--nu-bounds", type=float, nargs=2, default=(2.01, 200.0))
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--init", choices=("two-step", "file"), default="two-step")
    p.add_argument("--init-file", default=None, help="JSON with beta, gamma, sigma2, rho[, nu]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="heckselect",
                                     description="Sample-selection models fitted by EM")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a selection model to a CSV file")
    _add_fit_flags(p)
    p.add_argument("--method", choices=("em", "two-step"), default="em")
    p.add_argument("--output", default="-", help="JSON result path ('-' for stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    p.add_argument("--family", choices=("normal", "t", "slash"), default="normal")
    p.add_argument("--dgp-nu", type=float, default=4.0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--missing", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mcstudy", help="run a Monte Carlo study")
    p.add_argument("--config", default=None, help="JSON study configuration")
    p.add_argument("--family", choices=("normal", "t", "slash"), default="normal")
    p.add_argument("--dgp-nu", type=float, default=4.0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--missing", type=float, default=0.25)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--output", required=True, help="prefix of the output CSV files")
    p.set_defaults(func=cmd_mcstudy)

    p = sub.add_parser("residuals", help="martingale-type residuals and QQ envelope")
    _add_fit_flags(p)
    p.add_argument("--replicates", type=int, default=100, help="simulated datasets")
    p.add_argument("--coverage", type=float, default=0.95)
    p.add_argument("--refit-envelope", action="store_true")
    p.add_argument("--output", required=True, help="prefix of the output files")
    p.set_defaults(func=cmd_residuals)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        os.environ["HECKSELECT_THREADS"] = str(args.threads)
    if args.command == "mcstudy" and args.replicates is None and not args.config:
        args.replicates = 100
    try:
        return args.func(args)
    except (HeckselectError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "column", "columns"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

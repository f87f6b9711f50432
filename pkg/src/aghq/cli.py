"""Command line entry point.

Exit status is 0 on success, 1 on usage or input errors, 2 on numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import adapt, marglaplace, models, summaries
from .errors import AGHQError, DataError, NumericalError
from .quadrature import product_rule, verify_pkp
from .simulation import rate_slope, simulate_rates

THREADS_ENV = "AGHQ_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _param(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {name!r} needs a numeric value") from None


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser():
    parser = _Parser(prog="aghq", description="Adaptive Gauss-Hermite quadrature for Bayesian inference.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_args(p):
        p.add_argument("--model", required=True, help=f"one of: {', '.join(sorted(models.REGISTRY))}")
        p.add_argument("--data", required=True, help="CSV data file for the model")
        p.add_argument("--k", type=int, default=5, help="quadrature points per dimension")
        p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=VALUE",
                       help="model hyperparameter (repeatable)")
        p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("normalize", help="fit and report the log normalizing constant")
    model_args(p)

    p = sub.add_parser("summarize", help="moments, marginal quantiles and CDFs")
    model_args(p)
    p.add_argument("--alphas", type=_float_list, default=[0.025, 0.5, 0.975])
    p.add_argument("--grid-size", type=int, default=summaries.DEFAULT_GRID_SIZE)
    p.add_argument("--csv-dir", help="write grid,density,cdf CSV per dimension here")

    p = sub.add_parser("simulate", help="relative-error simulation on the conjugate Poisson model")
    p.add_argument("--lambda", dest="lam", type=float, default=5.0)
    p.add_argument("--nmax", type=int, default=100)
    p.add_argument("--nmin", type=int, default=1)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--k", type=_int_list, default=[3, 5, 7, 11])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--slopes", action="store_true", help="print fitted rate slopes as JSON")
    p.add_argument("--threads", type=int, default=_default_threads())

    p = sub.add_parser("marglaplace", help="marginal Laplace fit with Gaussian-mixture samples")
    model_args(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples-out", help="CSV of latent samples")

    p = sub.add_parser("verify-rules", help="check polynomial exactness of a product rule")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--out")
    return parser


def _emit(payload, path):
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load(args):
    try:
        return models.load_model(args.model, args.data, dict(args.param))
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except TypeError as exc:
        raise UsageError(f"bad model parameters: {exc}") from None


def _fit(model, k):
    if model.joint is not None:
        return marglaplace.fit_marginal_laplace(model.joint, k)
    return adapt.fit(model.target, k), None


def _oracle(model, ap):
    if model.log_z_exact is None:
        return {}
    return {
        "logNormConstExact": model.log_z_exact,
        "relativeError": adapt.relative_error(model.log_z_exact, ap.log_norm_const),
    }


def cmd_normalize(args):
    model = _load(args)
    ap, _ = _fit(model, args.k)
    _emit({"model": model.name, **ap.to_dict(), **_oracle(model, ap)}, args.out)


def _dim_summary(model, ap, dim, alphas, grid_size):
    mean = summaries.moment(ap, lambda x: x[dim])
    var = summaries.moment(ap, lambda x: (x[dim] - mean) ** 2)
    entry = {"dim": dim, "mean": mean, "sd": math.sqrt(max(var, 0.0))}
    ms = None
    if ap.k >= 2:
        ms, quants = summaries.marginal_summary(ap, dim, alphas, grid_size)
    else:
        from statistics import NormalDist

        mu, sd = summaries.gaussian_marginal(ap, dim)
        quants = {a: NormalDist(mu, sd).inv_cdf(a) for a in alphas}
        entry["marginal"] = "laplace-gaussian"
    entry["quantiles"] = {repr(a): q for a, q in quants.items()}
    if model.transform.kind != "identity":
        inv = model.transform.inverse

        def coord(x):
            return float(np.asarray(inv(np.asarray(x, dtype=float)))[dim])

        entry["constrained"] = {
            "mean": summaries.moment(ap, coord),
            "quantiles": {repr(a): coord(_at(ap.mode, dim, q)) for a, q in quants.items()},
        }
    if model.marginal_cdf is not None and ms is not None:
        entry["ks"] = summaries.ks_distance(ms.cdf_at, model.marginal_cdf(dim), ms.grid)
    return entry, ms


def _at(base, dim, value):
    x = np.array(base, dtype=float)
    x[dim] = value
    return x


def cmd_summarize(args):
    model = _load(args)
    ap, _ = _fit(model, args.k)
    dims = []
    for dim in range(ap.dim):
        entry, ms = _dim_summary(model, ap, dim, args.alphas, args.grid_size)
        dims.append(entry)
        if args.csv_dir and ms is not None:
            os.makedirs(args.csv_dir, exist_ok=True)
            _write_table(
                os.path.join(args.csv_dir, f"marginal_{dim}.csv"),
                ("grid", "density", "cdf"),
                zip(ms.grid, ms.density, ms.cdf),
            )
    payload = {
        "model": model.name,
        "k": ap.k,
        "logNormConst": ap.log_norm_const,
        "mode": ap.mode.tolist(),
        **_oracle(model, ap),
        "dims": dims,
    }
    _emit(payload, args.out)


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(float(v), ".17g") for v in row])


def cmd_simulate(args):
    if args.nmin < 1 or args.nmin > args.nmax:
        raise UsageError("need 1 <= --nmin <= --nmax")
    result = simulate_rates(
        args.lam, args.nmax, args.reps, args.k, args.seed,
        n_values=range(args.nmin, args.nmax + 1), threads=args.threads,
    )
    with open(args.out, "w", newline="") as fh:
        fh.write(result.to_csv())
    if args.slopes:
        slopes = {}
        for k in result.ks:
            try:
                slope, intercept = rate_slope(result, k)
                slopes[str(k)] = {"slope": slope, "intercept": intercept}
            except AGHQError as exc:
                slopes[str(k)] = {"error": str(exc)}
        print(json.dumps(slopes, indent=2))


def cmd_marglaplace(args):
    model = _load(args)
    if model.joint is None:
        raise UsageError(f"model {model.name!r} has no latent block; use normalize or summarize")
    ap, mix = marglaplace.fit_marginal_laplace(model.joint, args.k)
    draws = mix.sample(args.samples, seed=args.seed)
    dims = [_dim_summary(model, ap, d, (0.025, 0.5, 0.975), summaries.DEFAULT_GRID_SIZE)[0] for d in range(ap.dim)]
    payload = {
        "model": model.name,
        "k": ap.k,
        "logNormConst": ap.log_norm_const,
        **_oracle(model, ap),
        "theta": dims,
        "components": mix.size,
        "mixtureMeanW": mix.mean().tolist(),
        "sampleMeanW": draws.mean(axis=0).tolist(),
        "samples": args.samples,
        "seed": args.seed,
    }
    if args.samples_out:
        _write_table(args.samples_out, [f"w{i + 1}" for i in range(draws.shape[1])], draws)
    _emit(payload, args.out)


def cmd_verify_rules(args):
    rule = product_rule(args.k, args.p)
    report = verify_pkp(rule, rtol=args.rtol, atol=args.atol)
    failures = [c for c in report if not c.passed]
    payload = {
        "k": args.k,
        "p": args.p,
        "maxTotalOrder": 2 * args.k - 1,
        "monomials": len(report),
        "failures": len(failures),
        "checks": [
            {"alpha": list(c.alpha), "value": c.value, "exact": c.exact, "passed": c.passed} for c in report
        ],
    }
    _emit(payload, args.out)
    return 2 if failures else 0


COMMANDS = {
    "normalize": cmd_normalize,
    "summarize": cmd_summarize,
    "simulate": cmd_simulate,
    "marglaplace": cmd_marglaplace,
    "verify-rules": cmd_verify_rules,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"aghq: data error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"aghq: numerical failure: {exc}", file=sys.stderr)
        return 2
    except AGHQError as exc:
        print(f"aghq: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

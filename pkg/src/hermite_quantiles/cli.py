"""Command-line front end.

    hermite-quantiles run [FILE] --quantiles 0.5,0.9 --emit-every 1000
    hermite-quantiles simulate --model chi2 --runs 100 --seed 7
    hermite-quantiles verify --check cdf-mse-bound --model exp

Exit status is 0 on success, 1 for usage errors and 2 when no input line
could be used.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from . import oracle
from .density import CdfVariant
from .estimator import EstimatorConfig, GaussHermiteEstimator
from .quantile import RootFinderSettings
from .simulate import ExperimentSpec, StreamModel, run_experiment, summary_json, write_rmse_csv
from .special_functions import DomainError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SEED_ENV = "HERMITE_QUANTILES_SEED"

MODEL_ALIASES = {
    "chi2": "chi_squared_5",
    "exp": "exponential_unit",
    "normal-drift": "normal_drift",
    "exp-drift": "exponential_drift",
    "change-point": "change_point",
    "pareto": "pareto",
}
# i.i.d. experiments default to m=4000, non-stationary ones to m=1000
DEFAULT_OBSERVATIONS = {"chi_squared_5": 4000, "exponential_unit": 4000, "pareto": 4000}
CHECKS = ("cdf-mse-bound", "omega-bound", "ewgh-variance-identity", "ewgh-coefficient-mse")
REFERENCE_MODELS = {"exp": ("exp", {}), "chi2": ("chi2", {"df": 5}), "normal": ("normal", {})}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Shortest repr that reads back to the same double."""
    if x is None:
        return ""
    return repr(float(x))


def parse_quantiles(text: str) -> tuple[float, ...]:
    try:
        ps = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"quantiles must be comma-separated numbers: {text!r}")
    if not ps or not all(0.0 < p < 1.0 for p in ps):
        raise argparse.ArgumentTypeError("quantiles must lie strictly between 0 and 1")
    return ps


def parse_reals(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}")


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _estimator_args(p: argparse.ArgumentParser) -> None:
    d = EstimatorConfig()
    p.add_argument("--mode", choices=("static", "ewgh"), default=d.mode)
    p.add_argument("--n-terms", type=int, default=d.n_terms, help="truncation order N")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="EWGH weight")
    p.add_argument("--variant", choices=[v.value for v in CdfVariant], default=d.cdf_variant.value)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--tolerance", type=float, default=d.root_finder.tolerance)


def config_from_args(args) -> EstimatorConfig:
    if args.variant == CdfVariant.POSITIVE_SUPPORT.value and not args.no_standardize:
        raise UsageError("positive_support needs raw non-negative data; add --no-standardize")
    try:
        return EstimatorConfig(
            n_terms=args.n_terms,
            mode=args.mode,
            lam=args.lam,
            standardize=not args.no_standardize,
            cdf_variant=CdfVariant(args.variant),
            root_finder=RootFinderSettings(tolerance=args.tolerance),
        )
    except (ValueError, DomainError) as exc:
        raise UsageError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hermite-quantiles", description="Online quantile estimation with Gauss-Hermite series")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="estimate quantiles of a stream of numbers")
    run.add_argument("input", nargs="?", default="-", help="file with one number per line (default stdin)")
    _estimator_args(run)
    run.add_argument("--quantiles", type=parse_quantiles, default=(0.5,))
    run.add_argument("--emit-every", type=_positive_int, default=1000)
    run.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    run.add_argument("--cdf-probes", type=parse_reals, default=(), help="points at which to report the CDF")
    run.add_argument("--coverage", action="store_true",
                     help="also count how often each value falls below the preceding estimate")

    sim = sub.add_parser("simulate", help="Monte Carlo RMSE curves")
    sim.add_argument("--model", choices=sorted(MODEL_ALIASES), required=True)
    sim.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="model parameter override")
    _estimator_args(sim)
    sim.add_argument("--method", choices=("gh", "window"), default="gh")
    sim.add_argument("--window", type=_positive_int, default=None)
    sim.add_argument("--quantiles", type=parse_quantiles, default=(0.5, 0.9, 0.99))
    sim.add_argument("--observations", type=_positive_int, default=None)
    sim.add_argument("--runs", type=int, default=1000)
    sim.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples")
    sim.add_argument("--seed", type=int, default=None, help=f"base seed (default ${SEED_ENV} or 0)")
    sim.add_argument("--stride", type=_positive_int, default=1)
    sim.add_argument("--output", default="-", help="CSV destination (default stdout)")
    sim.add_argument("--summary", default=None, help="write a JSON summary here")

    ver = sub.add_parser("verify", help="Monte Carlo checks of the theoretical results")
    ver.add_argument("--check", choices=CHECKS, required=True)
    ver.add_argument("--model", choices=sorted(REFERENCE_MODELS), default="exp")
    ver.add_argument("--runs", type=int, default=500)
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--n-terms", type=int, default=6)
    ver.add_argument("--n", type=_positive_int, default=None, help="stream length")
    ver.add_argument("--lambda", dest="lam", type=float, default=0.05)
    ver.add_argument("--x-grid", type=parse_reals, default=(0.5, 1.0, 2.0, 4.0))
    ver.add_argument("--ks", type=parse_ints, default=(0, 1, 2, 6))
    ver.add_argument("--k", type=int, default=1)
    ver.add_argument("--s", type=_positive_int, default=500)
    ver.add_argument("--t", type=parse_ints, default=(10, 100, 500))
    return parser


# -- run ---------------------------------------------------------------------

def _lines(path):
    if path == "-":
        yield from sys.stdin
    else:
        with open(path) as fh:
            yield from fh


class _Emitter:
    def __init__(self, fmt_name, quantiles, probes, out):
        self.format = fmt_name
        self.quantiles = quantiles
        self.probes = probes
        self.out = out
        if fmt_name == "csv":
            self.writer = csv.writer(out, lineterminator="\n")
            header = ["index", "count"]
            for p in quantiles:
                header += [f"q{fmt(p)}", f"converged{fmt(p)}"]
            header += [f"cdf{fmt(x)}" for x in probes]
            self.writer.writerow(header)

    def emit(self, index, est):
        qs = [est.quantile(p) for p in self.quantiles]
        cdfs = [est.cdf_at(x, clamp=True) for x in self.probes]
        if self.format == "csv":
            row = [index, est.count]
            for q in qs:
                row += [fmt(q.value), int(q.converged)]
            row += [fmt(c) for c in cdfs]
            self.writer.writerow(row)
        else:
            rec = {
                "index": index,
                "count": est.count,
                "quantiles": {fmt(p): {"value": q.value, "converged": q.converged}
                              for p, q in zip(self.quantiles, qs)},
            }
            if self.probes:
                rec["cdf"] = {fmt(x): c for x, c in zip(self.probes, cdfs)}
            self.out.write(json.dumps(rec) + "\n")


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    config = config_from_args(args)
    est = GaussHermiteEstimator(config)
    emitter = _Emitter(args.format, args.quantiles, args.cdf_probes, out)
    bad = 0
    last_index = 0
    last_emitted = 0
    below = {p: 0 for p in args.quantiles}
    checked = {p: 0 for p in args.quantiles}
    try:
        lines = _lines(args.input)
        for index, line in enumerate(lines, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                x = float(text)
                if not math.isfinite(x):
                    raise DomainError("non-finite value")
            except (ValueError, DomainError):
                bad += 1
                err.write(f"line {index}: skipped unparseable value {text[:40]!r}\n")
                continue
            if args.coverage and est.count >= 2:
                for p in args.quantiles:
                    q = est.quantile(p)
                    if q.converged:
                        checked[p] += 1
                        below[p] += x < q.value
            est.observe(x)
            last_index = index
            if est.count % args.emit_every == 0:
                emitter.emit(index, est)
                last_emitted = est.count
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}")
    if est.count and last_emitted != est.count:
        emitter.emit(last_index, est)
    out.flush()
    err.write(f"{est.count} observations, {bad} skipped\n")
    if args.coverage:
        freqs = {fmt(p): (below[p] / checked[p] if checked[p] else None) for p in args.quantiles}
        err.write(json.dumps({"coverage": freqs, "evaluated": {fmt(p): checked[p] for p in args.quantiles}}) + "\n")
    if est.count == 0 and bad > 0:
        return EXIT_DATA
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def _model_params(pairs) -> dict:
    params = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {key}: not a number: {value!r}")
    if "s" in params:
        params["s"] = int(params["s"])
    return params


def cmd_simulate(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    config = config_from_args(args)
    kind = MODEL_ALIASES[args.model]
    try:
        model = StreamModel(kind, _model_params(args.param))
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc))
    if args.method == "window" and args.window is None and config.mode != "ewgh":
        raise UsageError("--method window needs --window or --mode ewgh (window derived from lambda)")
    seed = args.seed if args.seed is not None else _default_seed()
    m = args.observations or DEFAULT_OBSERVATIONS.get(kind, 1000)
    try:
        spec = ExperimentSpec(model, config, args.quantiles, m, args.runs, args.bootstrap, seed,
                              args.stride, method=args.method, window=args.window)
    except ValueError as exc:
        raise UsageError(str(exc))
    result = run_experiment(spec)
    if args.output == "-":
        write_rmse_csv(result, out)
    else:
        with open(args.output, "w", newline="") as fh:
            write_rmse_csv(result, fh)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(summary_json(result) + "\n")
    failed = sum(int(c.failures.sum()) for c in result.curves.values())
    err.write(f"{spec.runs} runs x {m} observations in {result.elapsed:.2f}s, {failed} failed inversions\n")
    return EXIT_OK


# -- verify ------------------------------------------------------------------

def cmd_verify(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    seed = args.seed if args.seed is not None else _default_seed()
    name, params = REFERENCE_MODELS[args.model]
    dist = oracle.reference(name, **params)
    if args.check in ("cdf-mse-bound", "omega-bound") and dist.support[0] < 0.0:
        raise UsageError(f"{args.check} needs a model on [0, inf); use exp or chi2")
    if args.check == "cdf-mse-bound":
        report = oracle.check_cdf_mse_bound(dist, args.n_terms, args.n or 500, args.x_grid, args.runs, seed)
    elif args.check == "omega-bound":
        report = oracle.check_omega_bound(dist, args.n_terms, args.n or 500, args.runs, seed)
    elif args.check == "ewgh-variance-identity":
        report = oracle.check_ewgh_variance_identity(args.lam, args.n or 200, args.ks, args.runs, seed, dist)
    else:
        report = oracle.check_ewgh_coefficient_mse(args.s, args.t, args.lam, args.k, args.runs, seed)
    out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "simulate": cmd_simulate, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"hermite-quantiles: error: {exc}\n")
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

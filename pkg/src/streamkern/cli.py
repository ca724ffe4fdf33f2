"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import simulate, snapshot
from .eigensystems import ConfigurationError
from .simulate import CsvFormatError, ExperimentSpec, PRESETS, get_preset, log_grid
from .verify import run_checks

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- config files -----------------------------------------------------------

_INT_KEYS = {"repetitions", "mc_points", "seed", "dim", "n0", "krr_max_n", "sgd_max_n"}
_FLOAT_KEYS = {
    "noise_param", "alpha", "c", "noise_df", "clamp",
    "krr_lambda_coef", "krr_lambda_exp", "sgd_gamma0",
}
_STR_KEYS = {"example_id", "covariate", "noise", "kernel"}
_GRID_KEYS = {"n_min", "n_max", "per_decade"}


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float(Fraction(text.replace(" ", "")))


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in {"1", "true", "yes", "on"}:
        return True
    if low in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def spec_from_mapping(values: dict[str, str]) -> ExperimentSpec:
    """Build a spec from string key/values, optionally on top of ``preset``."""
    values = {k.strip().lower(): v.strip() for k, v in values.items()}
    preset = values.pop("preset", None)
    base = get_preset(preset).to_dict() if preset else {}
    grid = {k: values.pop(k) for k in _GRID_KEYS & set(values)}
    fields = dict(base)
    for key, raw in values.items():
        if key in _INT_KEYS:
            fields[key] = int(raw)
        elif key in _FLOAT_KEYS:
            fields[key] = _parse_float(raw)
        elif key in _STR_KEYS:
            fields[key] = raw
        elif key == "additive":
            fields[key] = _parse_bool(raw)
        elif key == "estimators":
            fields[key] = tuple(e.strip() for e in raw.split(",") if e.strip())
        elif key == "n_grid":
            fields[key] = tuple(int(float(v)) for v in raw.split(",") if v.strip())
        else:
            raise ValueError(f"unknown config key {key!r}")
    if grid:
        if "n_grid" in values:
            raise ValueError("give either n_grid or n_min/n_max, not both")
        old = fields.get("n_grid") or (None,)
        lo = int(float(grid.get("n_min", old[0] or 0)))
        hi = int(float(grid.get("n_max", old[-1] or 0)))
        fields["n_grid"] = log_grid(lo, hi, int(grid.get("per_decade", 12)))
    try:
        return ExperimentSpec(**fields)
    except TypeError as exc:
        raise ValueError(f"incomplete experiment description: {exc}") from None


def load_config(path: str) -> ExperimentSpec:
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path):
        raise ValueError(f"cannot read config file {path!r}")
    if not parser.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    return spec_from_mapping(dict(parser.items("experiment")))


def _resolve_spec(args) -> tuple[str, ExperimentSpec]:
    try:
        if args.config:
            spec = load_config(args.config)
            name = os.path.splitext(os.path.basename(args.config))[0]
        else:
            if args.preset not in PRESETS:
                raise ValueError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
            spec, name = get_preset(args.preset), args.preset
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if getattr(args, "reps", None) is not None:
            overrides["repetitions"] = args.reps
        if getattr(args, "estimators", None):
            overrides["estimators"] = tuple(e for e in args.estimators.split(",") if e)
        grid_max = getattr(args, "grid_max", None)
        if grid_max is not None:
            kept = tuple(n for n in spec.n_grid if n <= grid_max)
            overrides["n_grid"] = kept
        return name, spec.with_overrides(**overrides) if overrides else spec
    except (ValueError, KeyError, ConfigurationError) as exc:
        raise UsageError(str(exc)) from None


# -- subcommands ------------------------------------------------------------


def _slope_text(rows, n_min, n_max) -> str:
    try:
        fit = simulate.curve_slope(rows, n_min, n_max)
    except ValueError:
        return "n/a"
    return f"{fit.slope:+.3f} +/- {fit.stderr:.3f}"


def cmd_run(args) -> int:
    name, spec = _resolve_spec(args)
    out = args.out or f"{name}.csv"
    curve = simulate.run_experiment(spec, serial=args.serial, timing=not args.no_timing)
    simulate.write_csv(curve.rows, out)
    n_min = args.nmin if args.nmin is not None else 0
    n_max = args.nmax if args.nmax is not None else math.inf
    print(f"{name}: {spec.repetitions} repetitions, seed {spec.seed} -> {out}")
    print(f"{'estimator':<12}{'final n':>9}{'mean sq L2 error':>18}   slope")
    for est in spec.estimators:
        rows = curve.select(est)
        ns, errs = simulate.mean_curve(rows)
        if ns.size == 0:
            continue
        print(f"{est:<12}{int(ns[-1]):>9}{errs[-1]:>18.4e}   {_slope_text(rows, n_min, n_max)}")
    if curve.failures:
        print(f"{curve.failures} estimator failure(s); affected cells are NA", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(args.filter)
    if not results:
        print(f"no checks match {args.filter!r}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<34}{r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_slope(args) -> int:
    if not os.path.isfile(args.csv):
        raise UsageError(f"no such file: {args.csv}")
    try:
        rows = simulate.read_csv(args.csv)
    except CsvFormatError as exc:
        raise UsageError(f"malformed CSV: {exc}") from None
    n_min = args.nmin if args.nmin is not None else 0
    n_max = args.nmax if args.nmax is not None else math.inf
    names = list(dict.fromkeys(r.estimator for r in rows))
    if not names:
        raise UsageError("CSV has no data rows")
    fits = {}
    for est in names:
        try:
            fits[est] = simulate.curve_slope([r for r in rows if r.estimator == est], n_min, n_max)
        except ValueError as exc:
            raise UsageError(f"{est}: {exc}") from None
    print(f"{'estimator':<12}{'slope':>9}{'stderr':>9}{'points':>8}")
    for est, fit in fits.items():
        print(f"{est:<12}{fit.slope:>9.3f}{fit.stderr:>9.3f}{fit.points:>8}")
    return EXIT_OK


def cmd_snapshot(args) -> int:
    if args.inspect:
        try:
            with open(args.inspect, "rb") as fh:
                header, _ = snapshot.read_header(fh.read())
        except (OSError, snapshot.SnapshotError) as exc:
            raise UsageError(str(exc)) from None
        for key in sorted(k for k in header if k != "arrays"):
            print(f"{key}: {header[key]}")
        return EXIT_OK
    if args.resume:
        try:
            est = snapshot.load(args.resume)
        except (OSError, snapshot.SnapshotError) as exc:
            raise UsageError(str(exc)) from None
    else:
        est = None
    if not (args.preset or args.config):
        raise UsageError("snapshot needs --preset/--config (or --inspect)")
    if args.n is None or args.n < 1:
        raise UsageError("snapshot needs --n >= 1")
    name, spec = _resolve_spec(args)
    spec = spec.with_overrides(n_grid=(args.n,))
    X, Y = simulate.generate_stream(spec, args.rep)
    if est is None:
        est = simulate.make_projection(spec)
    if est.n > args.n:
        raise UsageError(f"snapshot already holds {est.n} > {args.n} observations")
    for i in range(est.n, args.n):
        est.observe(X[i], Y[i])
    out = args.out or f"{name}.ope"
    snapshot.save(est, out)
    print(f"{name}: n={est.n} N={est.N} -> {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_source(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--preset", help=f"built-in experiment ({', '.join(PRESETS)})")
    g.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--seed", type=int, help="override the master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamkern", description="Streaming kernel regression benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write a CSV")
    _add_source(run)
    run.add_argument("--out", help="CSV path (default <name>.csv)")
    run.add_argument("--serial", action="store_true", help="run repetitions in this process")
    run.add_argument("--reps", type=int, help="override the repetition count")
    run.add_argument("--estimators", help="comma-separated subset, e.g. projection,krr")
    run.add_argument("--grid-max", type=int, dest="grid_max", help="drop checkpoints above this n")
    run.add_argument("--nmin", type=float, help="lower end of the summary slope fit")
    run.add_argument("--nmax", type=float, help="upper end of the summary slope fit")
    run.add_argument("--no-timing", action="store_true", help="write cum_cpu_ns as 0 (byte-stable output)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the fast invariant suite")
    ver.add_argument("--filter", help="only checks whose name contains this text")
    ver.set_defaults(func=cmd_verify)

    slope = sub.add_parser("slope", help="fit log-log slopes from a CSV")
    slope.add_argument("csv")
    slope.add_argument("--nmin", type=float)
    slope.add_argument("--nmax", type=float)
    slope.set_defaults(func=cmd_slope)

    snap = sub.add_parser("snapshot", help="stream a preset to n and save the estimator state")
    _add_source(snap, required=False)
    snap.add_argument("--n", type=int, help="observations to absorb")
    snap.add_argument("--rep", type=int, default=0, help="repetition whose stream is used")
    snap.add_argument("--out", help="snapshot path (default <name>.ope)")
    snap.add_argument("--resume", help="continue from an existing snapshot")
    snap.add_argument("--inspect", help="print the header of a snapshot and exit")
    snap.set_defaults(func=cmd_snapshot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

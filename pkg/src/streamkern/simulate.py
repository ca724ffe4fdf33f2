"""Simulation harness: data-generating processes, L2 error, timing, slopes.

Every random draw comes from a Philox stream keyed by ``(seed, repetition,
purpose)``, so adding an estimator to a run never perturbs the data and the
whole output is a pure function of the ExperimentSpec.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .additive import AdditiveEstimator
from .baselines import KrrModel, SgdModel
from .eigensystems import bernoulli4, make_system
from .projection import DegeneratePivotError, EstimatorConfig, ProjectionEstimator

CSV_HEADER = ("estimator", "rep", "n", "N", "sq_l2_error", "cum_cpu_ns")
ESTIMATORS = ("projection", "sgd", "krr")

_STREAM_DATA = 0
_STREAM_EVAL = 1
_STREAM_NOISE = 2


def substream(seed: int, rep: int, purpose: int) -> np.random.Generator:
    """Counter-based generator for one (repetition, purpose) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


# -- covariate laws ---------------------------------------------------------


def tilted_inverse_cdf(u):
    """Inverse CDF of the density ``x + 1/2`` on [0, 1], ``F(x) = (x^2 + x) / 2``."""
    u = np.asarray(u, dtype=float)
    return (-1.0 + np.sqrt(1.0 + 8.0 * u)) / 2.0


def sample_covariate(law: str, rng: np.random.Generator, size: int | None = None, dim: int = 1):
    """Draw covariates from ``uniform``, ``tilted`` or ``product_uniform``."""
    if law == "uniform":
        return rng.uniform(0.0, 1.0, size)
    if law == "tilted":
        return tilted_inverse_cdf(rng.uniform(0.0, 1.0, size))
    if law == "product_uniform":
        shape = (dim,) if size is None else (size, dim)
        return rng.uniform(0.0, 1.0, shape)
    raise ValueError(f"unknown covariate law {law!r}")


def covariate_density(law: str, x):
    x = np.asarray(x, dtype=float)
    if law == "uniform":
        return ((x >= 0) & (x <= 1)).astype(float)
    if law == "tilted":
        return np.where((x >= 0) & (x <= 1), x + 0.5, 0.0)
    if law == "product_uniform":
        return np.all((x >= 0) & (x <= 1), axis=-1).astype(float)
    raise ValueError(f"unknown covariate law {law!r}")


# -- noise laws -------------------------------------------------------------


def sample_noise(law: str, param: float, rng: np.random.Generator, size: int | None = None, df: float = 2.1):
    """Zero-mean noise.

    ``uniform``: Unif(-param, param); ``normal``: standard deviation ``param``;
    ``student_t``: ``param`` times a t variable with ``df`` degrees of freedom.
    """
    if law == "uniform":
        return rng.uniform(-param, param, size)
    if law == "normal":
        return rng.normal(0.0, param, size)
    if law == "student_t":
        return param * rng.standard_t(df, size)
    raise ValueError(f"unknown noise law {law!r}")


# -- regression functions ---------------------------------------------------


def _ex2(x):
    return (6.0 * x - 3.0) * np.sin(12.0 * x - 6.0) + np.cos(12.0 * x - 6.0) ** 2


def _exA1(x):
    return 1.0 + (x - 0.5) * (x >= 0.5) + 2.0 * (x - 0.2) * (x >= 0.2)


def _exA2(x):
    return 1.0 + _ex2(x) + 10.0 * (x - 0.5) ** 2 * (x >= 0.5)


def doppler_component(k: int, u):
    """``sin(2 pi / (u + 0.1)^(k/20)) - sin(2 pi / 0.1^(k/20))``."""
    u = np.asarray(u, dtype=float)
    e = k / 20.0
    return np.sin(2.0 * math.pi / (u + 0.1) ** e) - math.sin(2.0 * math.pi / 0.1**e)


def _additive10(x):
    x = np.asarray(x, dtype=float)
    return sum(doppler_component(k, x[..., k - 1]) for k in range(1, x.shape[-1] + 1))


TRUTHS: dict[str, Callable] = {
    "ex1": bernoulli4,
    "ex2": _ex2,
    "exA1": _exA1,
    "exA2": _exA2,
    "additive10": _additive10,
}


def regression_truth(example_id: str, x):
    try:
        f = TRUTHS[example_id]
    except KeyError:
        raise ValueError(f"unknown example id {example_id!r}") from None
    out = f(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def l2_error(predict: Callable, truth: Callable, law: str, mc_points: int = 1000, seed: int = 0, dim: int = 1) -> float:
    """Monte Carlo estimate of ``||predict - truth||^2`` in L2 of the covariate law."""
    if mc_points < 1:
        raise ValueError("mc_points must be >= 1")
    Z = sample_covariate(law, substream(seed, 0, _STREAM_EVAL), mc_points, dim)
    return squared_error_at(predict, truth(Z), Z)


def squared_error_at(predict: Callable, truth_values: np.ndarray, Z: np.ndarray) -> float:
    diff = np.asarray(predict(Z), dtype=float) - truth_values
    return float(np.mean(diff * diff))


# -- experiment specification -----------------------------------------------


def log_grid(n_min: int, n_max: int, per_decade: int = 12) -> tuple[int, ...]:
    """Logarithmically spaced sample sizes, always including both ends."""
    if n_min < 1 or n_max < n_min:
        raise ValueError("need 1 <= n_min <= n_max")
    lo, hi = math.log10(n_min), math.log10(n_max)
    k = np.arange(math.ceil(lo * per_decade), math.floor(hi * per_decade) + 1)
    pts = {int(round(10 ** (i / per_decade))) for i in k}
    pts |= {int(n_min), int(n_max)}
    return tuple(sorted(p for p in pts if n_min <= p <= n_max))


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines one simulation run."""

    example_id: str
    covariate: str
    noise: str
    noise_param: float
    kernel: str
    alpha: float
    c: float
    n_grid: tuple[int, ...]
    repetitions: int = 15
    mc_points: int = 1000
    seed: int = 0
    estimators: tuple[str, ...] = ("projection",)
    dim: int = 1
    additive: bool = False
    noise_df: float = 2.1
    n0: int = 1
    clamp: float = math.inf
    krr_lambda_coef: float = 0.1
    krr_lambda_exp: float = -2.0 / 3.0
    krr_max_n: int = 2000
    sgd_gamma0: float = 5.0
    sgd_max_n: int = 10_000

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n_grid must be non-empty and strictly increasing")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.mc_points < 1:
            raise ValueError("mc_points must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if self.example_id not in TRUTHS:
            raise ValueError(f"unknown example id {self.example_id!r}")
        if self.additive and ({"sgd", "krr"} & set(self.estimators)):
            raise ValueError("baselines are only defined for non-additive examples")
        make_system(self.kernel)

    @property
    def n_max(self) -> int:
        return self.n_grid[-1]

    def with_overrides(self, **kw) -> "ExperimentSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


_EX_GRID = log_grid(100, 100_000)

PRESETS: dict[str, ExperimentSpec] = {
    "ex1": ExperimentSpec(
        example_id="ex1", covariate="uniform", noise="uniform", noise_param=0.02,
        kernel="periodic_bernoulli", alpha=2.0, c=0.2, n_grid=_EX_GRID,
        estimators=("projection", "sgd", "krr"),
        krr_lambda_coef=1e-3, krr_lambda_exp=-0.8, sgd_gamma0=128.0,
    ),
    "ex2": ExperimentSpec(
        example_id="ex2", covariate="tilted", noise="normal", noise_param=5.0,
        kernel="sobolev_min", alpha=1.0, c=0.5, n_grid=_EX_GRID,
        estimators=("projection", "sgd", "krr"),
        krr_lambda_coef=0.1, krr_lambda_exp=-2.0 / 3.0, sgd_gamma0=5.0,
    ),
    "ex2_heavy": ExperimentSpec(
        example_id="ex2", covariate="tilted", noise="student_t", noise_param=5.0 / math.sqrt(21.0),
        noise_df=2.1, kernel="sobolev_min", alpha=1.0, c=0.5, n_grid=_EX_GRID,
    ),
    "exA1": ExperimentSpec(
        example_id="exA1", covariate="tilted", noise="normal", noise_param=1.0,
        kernel="poly0+sobolev_min", alpha=1.0, c=0.5, n_grid=_EX_GRID,
    ),
    "exA2": ExperimentSpec(
        example_id="exA2", covariate="uniform", noise="uniform", noise_param=5.0,
        kernel="poly2+periodic_bernoulli", alpha=2.0, c=1.0 / 30.0, n_grid=_EX_GRID,
    ),
    "additive10": ExperimentSpec(
        example_id="additive10", covariate="product_uniform", dim=10, additive=True,
        noise="normal", noise_param=5.0, kernel="poly2+periodic_bernoulli",
        alpha=2.0, c=0.2, n_grid=log_grid(300, 30_000),
    ),
}


def get_preset(name: str) -> ExperimentSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- running ----------------------------------------------------------------


@dataclass
class ErrorRow:
    estimator: str
    rep: int
    n: int
    N: int
    sq_l2_error: float
    cum_cpu_ns: int


@dataclass
class ErrorCurve:
    """All rows of one experiment plus per-estimator failure counts."""

    rows: list[ErrorRow] = field(default_factory=list)
    failures: int = 0

    def select(self, estimator: str) -> list[ErrorRow]:
        return [r for r in self.rows if r.estimator == estimator]

    def mean_curve(self, estimator: str) -> tuple[np.ndarray, np.ndarray]:
        return mean_curve(self.select(estimator))


def make_projection(spec: ExperimentSpec):
    system = make_system(spec.kernel)
    if spec.additive:
        return AdditiveEstimator(system, spec.dim, alpha=spec.alpha, c=spec.c, n0=spec.n0, clamp=spec.clamp)
    return ProjectionEstimator(EstimatorConfig(system, alpha=spec.alpha, c=spec.c, n0=spec.n0, clamp=spec.clamp))


def generate_stream(spec: ExperimentSpec, rep: int) -> tuple[np.ndarray, np.ndarray]:
    # separate streams keep every prefix independent of n_max
    X = sample_covariate(spec.covariate, substream(spec.seed, rep, _STREAM_DATA), spec.n_max, spec.dim)
    rng = substream(spec.seed, rep, _STREAM_NOISE)
    eps = sample_noise(spec.noise, spec.noise_param, rng, spec.n_max, df=spec.noise_df)
    Y = TRUTHS[spec.example_id](X) + eps
    return X, Y


def evaluation_points(spec: ExperimentSpec, rep: int) -> tuple[np.ndarray, np.ndarray]:
    Z = sample_covariate(spec.covariate, substream(spec.seed, rep, _STREAM_EVAL), spec.mc_points, spec.dim)
    return Z, TRUTHS[spec.example_id](Z)


def _cpu_ns() -> int:
    return time.process_time_ns()


def _score(predict, fZ, Z) -> float:
    try:
        return squared_error_at(predict, fZ, Z)
    except Exception:
        return math.nan


def _run_projection(spec, rep, X, Y, Z, fZ, timing):
    est = make_projection(spec)
    rows, failures = [], 0
    cum = 0
    i = 0
    observe = est.observe
    for n in spec.n_grid:
        t0 = _cpu_ns() if timing else 0
        while i < n:
            try:
                observe(X[i], Y[i])
            except DegeneratePivotError:
                failures += 1
            i += 1
        if timing:
            cum += _cpu_ns() - t0
        err = _score(est.predict, fZ, Z)
        failures += math.isnan(err)
        rows.append(ErrorRow("projection", rep, n, est.N, err, cum))
    return rows, failures


def _run_sgd(spec, rep, X, Y, Z, fZ, timing):
    model = SgdModel(make_system(spec.kernel), spec.sgd_gamma0)
    rows, failures = [], 0
    cum = 0
    i = 0
    for n in spec.n_grid:
        if n > spec.sgd_max_n:
            break
        t0 = _cpu_ns() if timing else 0
        while i < n:
            model.step(X[i], Y[i])
            i += 1
        if timing:
            cum += _cpu_ns() - t0
        err = _score(model.predict, fZ, Z)
        failures += math.isnan(err)
        rows.append(ErrorRow("sgd", rep, n, n, err, cum))
    return rows, failures


def _run_krr(spec, rep, X, Y, Z, fZ, timing):
    system = make_system(spec.kernel)
    rows, failures = [], 0
    cum = 0
    for n in spec.n_grid:
        if n > spec.krr_max_n:
            break
        lam = spec.krr_lambda_coef * n**spec.krr_lambda_exp
        t0 = _cpu_ns() if timing else 0
        try:
            model = KrrModel(system, lam).fit(X[:n], Y[:n])
        except ArithmeticError:
            model = None
        if timing:
            cum += _cpu_ns() - t0
        err = _score(model.predict, fZ, Z) if model is not None else math.nan
        failures += math.isnan(err)
        rows.append(ErrorRow("krr", rep, n, n, err, cum))
    return rows, failures


_RUNNERS = {"projection": _run_projection, "sgd": _run_sgd, "krr": _run_krr}


def run_repetition(spec: ExperimentSpec, rep: int, timing: bool = True) -> tuple[list[ErrorRow], int]:
    X, Y = generate_stream(spec, rep)
    Z, fZ = evaluation_points(spec, rep)
    rows, failures = [], 0
    for name in spec.estimators:
        r, f = _RUNNERS[name](spec, rep, X, Y, Z, fZ, timing)
        rows.extend(r)
        failures += f
    return rows, failures


def _run_repetition_star(args):
    return run_repetition(*args)


def worker_count(serial: bool = False) -> int:
    if serial:
        return 1
    cap = os.environ.get("STREAMKERN_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_experiment(spec: ExperimentSpec, serial: bool = False, timing: bool = True, workers: int | None = None) -> ErrorCurve:
    """Run every repetition of ``spec``; rows come back ordered by repetition."""
    workers = worker_count(serial) if workers is None else workers
    jobs = [(spec, rep, timing) for rep in range(spec.repetitions)]
    if workers <= 1 or spec.repetitions == 1:
        results = [_run_repetition_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_repetition_star, jobs))
    curve = ErrorCurve()
    for rows, failures in results:
        curve.rows.extend(rows)
        curve.failures += failures
    return curve


# -- slopes -----------------------------------------------------------------


def mean_curve(rows: Iterable[ErrorRow]) -> tuple[np.ndarray, np.ndarray]:
    """Repetition-averaged squared error per sample size (NaN cells ignored)."""
    by_n: dict[int, list[float]] = {}
    for r in rows:
        by_n.setdefault(r.n, []).append(r.sq_l2_error)
    ns = np.array(sorted(by_n), dtype=float)
    means = []
    for n in sorted(by_n):
        vals = np.array(by_n[n], dtype=float)
        vals = vals[~np.isnan(vals)]
        means.append(vals.mean() if vals.size else math.nan)
    return ns, np.array(means)


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    points: int


def fit_loglog_slope(ns: Sequence[float], errors: Sequence[float], n_min: float = 0, n_max: float = math.inf) -> SlopeFit:
    """OLS slope of ``log10(error)`` on ``log10(n)`` over ``n_min <= n <= n_max``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = (ns >= n_min) & (ns <= n_max) & np.isfinite(errors) & (errors > 0)
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 checkpoints in [{n_min}, {n_max}], have {int(keep.sum())}")
    res = stats.linregress(np.log10(ns[keep]), np.log10(errors[keep]))
    return SlopeFit(float(res.slope), float(res.stderr), int(keep.sum()))


def curve_slope(rows: Iterable[ErrorRow], n_min: float = 0, n_max: float = math.inf) -> SlopeFit:
    ns, errs = mean_curve(rows)
    return fit_loglog_slope(ns, errs, n_min, n_max)


# -- CSV --------------------------------------------------------------------


def _fmt_error(v: float) -> str:
    return "NA" if math.isnan(v) else repr(float(v))


def write_csv(rows: Iterable[ErrorRow], path_or_buf) -> None:
    """Write rows with header ``estimator,rep,n,N,sq_l2_error,cum_cpu_ns`` (LF endings)."""
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.estimator, r.rep, r.n, r.N, _fmt_error(r.sq_l2_error), int(r.cum_cpu_ns)])
    finally:
        if own:
            fh.close()


class CsvFormatError(ValueError):
    pass


def read_csv(path_or_text) -> list[ErrorRow]:
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, newline="") as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("empty CSV") from None
    if tuple(header) != CSV_HEADER:
        raise CsvFormatError(f"unexpected header {header!r}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(CSV_HEADER):
            raise CsvFormatError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
        try:
            err = math.nan if rec[4] == "NA" else float(rec[4])
            rows.append(ErrorRow(rec[0], int(rec[1]), int(rec[2]), int(rec[3]), err, int(rec[5])))
        except ValueError as exc:
            raise CsvFormatError(f"line {lineno}: {exc}") from None
    return rows

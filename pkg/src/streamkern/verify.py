"""Fast invariant suite behind ``streamkern verify``."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import projection
from .eigensystems import make_system, orthonormality_error
from .projection import EstimatorConfig, ProjectionEstimator, basis_added_at, schedule_basis_count
from .simulate import TRUTHS, sample_covariate, sample_noise, substream

CATALOG = (
    "sobolev_min",
    "periodic_bernoulli",
    "gaussian",
    "tensor:sobolev_min:2",
    "poly2+periodic_bernoulli",
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def ex2_stream(seed: int, n: int):
    rng = substream(seed, 0, 0)
    X = sample_covariate("tilted", rng, n)
    Y = TRUTHS["ex2"](X) + sample_noise("normal", 5.0, rng, n)
    return X, Y


def ex2_estimator() -> ProjectionEstimator:
    return ProjectionEstimator(EstimatorConfig(make_system("sobolev_min"), alpha=1.0, c=0.5))


def _ortho(kernel_id: str, tol: float = 1e-6) -> Callable[[], CheckResult]:
    def check():
        err = orthonormality_error(make_system(kernel_id), 20)
        return CheckResult(f"ortho[{kernel_id}]", err <= tol, f"max |<psi_i, psi_j> - delta_ij| = {err:.2e}")

    return check


def check_oracle(streams: int = 3, n: int = 300, every: int = 10, tol: float = 1e-8) -> CheckResult:
    """Streaming coefficients against a dense least-squares refit."""
    worst = 0.0
    for seed in range(streams):
        X, Y = ex2_stream(seed, n)
        est = ex2_estimator()
        for i in range(n):
            est.observe(X[i], Y[i])
            if est.initialized and (est.n % every == 0 or est.n == n):
                worst = max(worst, _rel(est.theta, est.refit_direct()))
    return CheckResult("oracle", worst <= tol, f"max relative error {worst:.2e} over {streams} streams, n={n}")


def check_row_recursion(n: int = 300, tol: float = 1e-9) -> CheckResult:
    X, Y = ex2_stream(11, n)
    est = ex2_estimator()
    worst = 0.0
    for i in range(n):
        if est.initialized:
            theta, N = est.theta.copy(), est.N
            row = est.features.rows(X[i], N)
            residual = Y[i] - row @ theta
            est.observe(X[i], Y[i])
            if est.N == N:
                worst = max(worst, _rel(projection.theta_row_recursion(theta, est.phi, row, residual), est.theta))
        else:
            est.observe(X[i], Y[i])
    return CheckResult("recursion[row]", worst <= tol, f"max relative gap {worst:.2e}")


def check_column_recursion(events: int = 10, tol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(5)
    worst = 0.0
    for e in range(events):
        X, Y = ex2_stream(100 + e, int(rng.integers(40, 300)))
        est = ex2_estimator()
        for x, y in zip(X, Y):
            est.observe(x, y)
        new_col = est.features.level_columns(est.X, est.N + 1)[:, 0]
        via_residual = projection.theta_column_recursion(est.theta, est.design, est.Y, new_col)
        block = copy.deepcopy(est)
        if not block.add_basis():
            return CheckResult("recursion[column]", False, f"add_basis refused at event {e}")
        worst = max(worst, _rel(via_residual, block.phi @ block.s))
    return CheckResult("recursion[column]", worst <= tol, f"max relative gap {worst:.2e} over {events} events")


def check_schedule(n_max: int = 100_000, alpha: float = 1.0, c: float = 0.5) -> CheckResult:
    worst = 0.0
    prev = 0
    for n in range(1, n_max + 1):
        N = schedule_basis_count(n, alpha, 1, c)
        if N < prev:
            return CheckResult("schedule", False, f"basis count decreased at n={n}")
        if basis_added_at(N + 1, alpha, 1, c) <= n or (N > 1 and basis_added_at(N, alpha, 1, c) > n):
            return CheckResult("schedule", False, f"N={N} inconsistent with trigger points at n={n}")
        worst = max(worst, abs(N - (n / c) ** (1.0 / (2.0 * alpha + 1.0))))
        prev = N
    return CheckResult("schedule", worst <= 1.0, f"max |N - (n/c)^(1/3)| = {worst:.3f} for n <= {n_max}")


CHECKS: dict[str, Callable[[], CheckResult]] = {
    **{f"ortho[{k}]": _ortho(k) for k in CATALOG},
    "oracle": check_oracle,
    "recursion[row]": check_row_recursion,
    "recursion[column]": check_column_recursion,
    "schedule": check_schedule,
}


def run_checks(name_filter: str | None = None) -> list[CheckResult]:
    """Run every check whose name contains ``name_filter``.

    A check that raises counts as a failure.
    """
    results = []
    for name, fn in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        try:
            results.append(fn())
        except Exception as exc:  # noqa: BLE001 - report, do not crash the suite
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results


def relative_error(a, b) -> float:
    return _rel(a, b)


__all__ = ["CATALOG", "CHECKS", "CheckResult", "run_checks", "relative_error"]

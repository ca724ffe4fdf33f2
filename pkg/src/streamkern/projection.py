"""Online projection estimator.

Maintains the least-squares fit over ``span(psi_1, ..., psi_N)`` as
observations stream in. Each new row updates the inverse Gram matrix
``Phi = (Psi^T Psi)^{-1}`` by Sherman-Morrison; when the schedule asks for
another basis function, ``Phi`` grows by block inversion around the Schur
complement of the new column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensystems import EigenSystem


class DegeneratePivotError(ArithmeticError):
    """A rank-one or Schur-complement pivot fell below ``jitter_tol``."""


class InitializationError(ArithmeticError):
    """The warm-start Gram matrix is singular to working precision."""


class NotReadyError(RuntimeError):
    """Prediction requested before the inverse Gram matrix exists."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for :class:`ProjectionEstimator`.

    ``alpha`` is the smoothness with ``lambda_j = Theta(j^{-2 alpha / d})``;
    ``c`` scales the basis-adding schedule; ``clamp`` bounds predictions.
    ``d`` defaults to the system dimension.
    """

    system: EigenSystem
    alpha: float
    c: float
    n0: int = 1
    clamp: float = math.inf
    jitter_tol: float = 1e-10
    buffer: int = 3
    d: int | None = None

    def __post_init__(self):
        if self.d is None:
            object.__setattr__(self, "d", self.system.dim)
        if not self.alpha > self.d / 2:
            raise ValueError(f"need alpha > d/2, got alpha={self.alpha}, d={self.d}")
        if not self.c > 0:
            raise ValueError("schedule constant c must be positive")
        if self.n0 < 1:
            raise ValueError("initial basis count n0 must be >= 1")
        if not self.clamp > 0:
            raise ValueError("clamp must be positive")
        if self.buffer < 0:
            raise ValueError("buffer must be non-negative")

    @property
    def exponent(self) -> float:
        return (2.0 * self.alpha + self.d) / self.d


# -- pure building blocks ---------------------------------------------------


def schedule_basis_count(n: int, alpha: float, d: int, c: float, n0: int = 1) -> int:
    """Largest ``N`` with ``floor(c N^((2 alpha + d)/d)) <= n``, floored at ``n0``."""
    p = (2.0 * alpha + d) / d
    N = max(1, int((n / c) ** (1.0 / p)))
    # the float root can be off by one either way; settle it with exact floors
    while math.floor(c * (N + 1) ** p) <= n:
        N += 1
    while N > 1 and math.floor(c * N**p) > n:
        N -= 1
    return max(N, n0)


def basis_added_at(N: int, alpha: float, d: int, c: float) -> int:
    """Sample count at which basis number ``N`` joins: ``floor(c N^p)``."""
    return math.floor(c * N ** ((2.0 * alpha + d) / d))


def sherman_morrison_update(
    phi: np.ndarray, psi: np.ndarray, jitter_tol: float = 1e-10, out: np.ndarray | None = None
) -> np.ndarray:
    """Return ``(G + psi psi^T)^{-1}`` given ``phi = G^{-1}``.

    The rank-one term is formed as ``v v^T`` with ``v = phi psi / sqrt(denom)``
    so a symmetric ``phi`` stays bitwise symmetric. ``out=phi`` updates in place.
    """
    u = phi @ psi
    denom = 1.0 + psi @ u
    if denom <= jitter_tol:
        raise DegeneratePivotError(f"Sherman-Morrison denominator {denom:.3e}")
    v = u / math.sqrt(denom)
    return np.subtract(phi, np.multiply.outer(v, v), out=out)


def block_inverse_extend(phi: np.ndarray, b: np.ndarray, c: float, jitter_tol: float = 1e-10) -> np.ndarray:
    """Inverse of ``[[G, b], [b^T, c]]`` given ``phi = G^{-1}``."""
    u = phi @ b
    k = c - b @ u
    if k <= jitter_tol:
        raise DegeneratePivotError(f"Schur complement {k:.3e}")
    m = phi.shape[0]
    out = np.empty((m + 1, m + 1))
    out[:m, :m] = phi + np.outer(u, u) / k
    out[:m, m] = -u / k
    out[m, :m] = -u / k
    out[m, m] = 1.0 / k
    return out


def theta_row_recursion(theta: np.ndarray, phi: np.ndarray, psi: np.ndarray, residual: float) -> np.ndarray:
    """``theta + Phi_n psi_n (y_n - f_{n-1}(x_n))``, with ``Phi_n`` already row-updated.

    Passing ``phi = gamma * I`` gives the plain stochastic-gradient step.
    """
    return theta + (phi @ psi) * residual


def theta_column_recursion(theta: np.ndarray, design: np.ndarray, y: np.ndarray, new_col: np.ndarray) -> np.ndarray:
    """Coefficients after appending ``new_col`` to ``design``, via residual projection.

    ``[theta; 0] + (v^T r / ||(I - P) v||^2) [-P v; 1]`` where ``r`` is the
    current residual vector and ``P v`` the least-squares coefficients of
    ``v`` on the existing columns.
    """
    residual = y - design @ theta
    pv, *_ = np.linalg.lstsq(design, new_col, rcond=None)
    orth = new_col - design @ pv
    scale = (new_col @ residual) / (orth @ orth)
    return np.concatenate([theta - scale * pv, [scale]])


# -- feature maps -----------------------------------------------------------


class SystemFeatures:
    """Feature map of a single eigensystem: one new column per basis level."""

    per_level = 1

    def __init__(self, system: EigenSystem):
        self.system = system
        self.n_fixed = system.n_fixed
        self.point_dim = system.dim
        self.point_shape = () if system.dim == 1 else (system.dim,)

    def n_columns(self, levels: int) -> int:
        return self.n_fixed + levels

    def rows(self, X, levels: int) -> np.ndarray:
        return self.system.features(X, 0, self.n_fixed + levels)

    def level_columns(self, X, level: int) -> np.ndarray:
        j = self.n_fixed + level
        return self.system.features(X, j - 1, j)


# -- the estimator ----------------------------------------------------------


class ProjectionEstimator:
    """Streaming least-squares projection onto the leading eigenfunctions.

    The estimator buffers the first ``p + buffer`` observations (``p`` the
    initial column count), inverts
    their Gram matrix directly, then streams. After every observation the
    basis count is brought up to the schedule; an addition whose Schur
    complement is degenerate is deferred and retried on the next step.

    Attributes:
        N: number of basis levels in use (fixed polynomial columns excluded).
        n: observations absorbed.
        phi: inverse Gram matrix, ``(p, p)``.
        s: ``Psi^T Y``.
        theta: coefficient vector, ``phi @ s``.
        flops: instrumented multiply-add count of all updates so far.
    """

    def __init__(self, config: EstimatorConfig, features=None):
        self.config = config
        self.features = features if features is not None else SystemFeatures(config.system)
        self.N = config.n0
        self.n = 0
        self.initialized = False
        self.phi = np.empty((0, 0))
        self.s = np.empty(0)
        self.theta = np.empty(0)
        self.flops = 0
        self.deferred_additions = 0
        self._next_add = 0
        self._xshape = self.features.point_shape
        self._X = np.empty((64,) + self._xshape)
        self._Y = np.empty(64)
        self._Psi = np.empty((64, max(8, self.p)))

    # -- bookkeeping --------------------------------------------------------

    @property
    def p(self) -> int:
        """Number of columns in the design matrix."""
        return self.features.n_columns(self.N)

    @property
    def X(self) -> np.ndarray:
        return self._X[: self.n]

    @property
    def Y(self) -> np.ndarray:
        return self._Y[: self.n]

    @property
    def design(self) -> np.ndarray:
        return self._Psi[: self.n, : self.p]

    def target_levels(self, n: int | None = None) -> int:
        cfg = self.config
        return schedule_basis_count(self.n if n is None else n, cfg.alpha, cfg.d, cfg.c, cfg.n0)

    def _reserve(self, rows: int, cols: int):
        cap_r, cap_c = self._Psi.shape
        if rows <= cap_r and cols <= cap_c:
            return
        new_r = max(cap_r, rows) if rows <= cap_r else max(rows, 2 * cap_r)
        new_c = max(cap_c, cols) if cols <= cap_c else max(cols, 2 * cap_c)
        psi = np.empty((new_r, new_c))
        psi[: self.n, : self.p] = self._Psi[: self.n, : self.p]
        self._Psi = psi
        if new_r != cap_r:
            X = np.empty((new_r,) + self._xshape)
            X[: self.n] = self._X[: self.n]
            Y = np.empty(new_r)
            Y[: self.n] = self._Y[: self.n]
            self._X, self._Y = X, Y

    def _append(self, x, y: float, row: np.ndarray):
        self._reserve(self.n + 1, self.p)
        self._X[self.n] = x
        self._Y[self.n] = y
        self._Psi[self.n, : row.shape[0]] = row
        self.n += 1

    # -- updates ------------------------------------------------------------

    def observe(self, x, y: float) -> "ProjectionEstimator":
        """Absorb one observation.

        Raises :class:`DegeneratePivotError` (state untouched) if the
        Sherman-Morrison pivot is degenerate.
        """
        y = float(y)
        p = self.p
        row = self.features.rows(np.asarray(x, dtype=float), self.N)
        self.flops += p
        if not self.initialized:
            self._append(x, y, row)
            if self.n >= self.p + self.config.buffer:
                try:
                    self._initialize()
                except InitializationError:
                    return self
                self._sync_basis()
            return self

        phi = self.phi
        sherman_morrison_update(phi, row, self.config.jitter_tol, out=phi)
        self.s += row * y
        self.flops += 3 * p * p + 2 * p
        self._append(x, y, row)
        if self.n >= self._next_add:
            self._sync_basis()
        else:
            self.theta = phi @ self.s
            self.flops += p * p
        return self

    def warm_start(self, X, Y) -> "ProjectionEstimator":
        """Initialise from a batch, then stream the remainder of it.

        The first ``p + buffer`` pairs (``p`` initial design columns) form the initial Gram matrix. Raises
        :class:`InitializationError` if it is singular.
        """
        if self.n or self.initialized:
            raise RuntimeError("warm_start needs a fresh estimator")
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        m = self.p + self.config.buffer
        if len(Y) < m:
            raise ValueError(f"warm start needs at least {m} observations, got {len(Y)}")
        for i in range(m):
            row = self.features.rows(X[i], self.N)
            self.flops += self.p
            self._append(X[i], Y[i], row)
        self._initialize()
        self._sync_basis()
        for i in range(m, len(Y)):
            self.observe(X[i], Y[i])
        return self

    def _initialize(self):
        Psi = self.design
        G = Psi.T @ Psi
        p = self.p
        self.flops += self.n * p * p
        eig = np.linalg.eigvalsh(G)
        if eig[0] <= self.config.jitter_tol * max(eig[-1], 1.0):
            raise InitializationError(f"Gram matrix singular (min eigenvalue {eig[0]:.3e})")
        phi = np.linalg.inv(G)
        self.phi = 0.5 * (phi + phi.T)
        self.s = Psi.T @ self.Y
        self.theta = self.phi @ self.s
        self.flops += p**3 + self.n * p + p * p
        self.initialized = True

    def _sync_basis(self):
        while self.N < self.target_levels():
            if not self.add_basis():
                self.deferred_additions += 1
                break
        cfg = self.config
        self._next_add = basis_added_at(self.N + 1, cfg.alpha, cfg.d, cfg.c)
        self.theta = self.phi @ self.s
        self.flops += self.p * self.p

    def add_basis(self) -> bool:
        """Append the next basis level by block inversion.

        Returns ``False`` and leaves the state unchanged when a Schur
        complement is degenerate (including ``n <= p``).
        """
        if not self.initialized:
            raise NotReadyError("cannot add a basis before initialisation")
        n, p = self.n, self.p
        cols = self.features.level_columns(self.X, self.N + 1)
        q = cols.shape[1]
        if n < p + q:
            return False
        phi = self.phi
        s = self.s
        Psi = self.design
        flops = n * q
        for i in range(q):
            v = cols[:, i]
            c = v @ v
            b = Psi.T @ v
            try:
                phi = block_inverse_extend(phi, b, c, self.config.jitter_tol)
            except DegeneratePivotError:
                return False
            s = np.append(s, v @ self.Y)
            Psi = np.column_stack([Psi, v]) if i + 1 < q else Psi
            m = phi.shape[0] - 1
            flops += 2 * n + n * m + 3 * m * m + 2 * m
        self._reserve(n, p + q)
        self._Psi[:n, p : p + q] = cols
        self.phi, self.s = phi, s
        self.N += 1
        self.flops += flops
        return True

    # -- evaluation ---------------------------------------------------------

    def coefficients(self) -> np.ndarray:
        if not self.initialized:
            raise NotReadyError("estimator has not been initialised")
        return self.theta

    def predict(self, x):
        """``clamp(sum_j theta_j psi_j(x), -M, M)``; vectorised over points."""
        theta = self.coefficients()
        F = self.features.rows(np.asarray(x, dtype=float), self.N)
        out = F @ theta
        if math.isfinite(self.config.clamp):
            out = np.clip(out, -self.config.clamp, self.config.clamp)
        return float(out) if np.ndim(out) == 0 else out

    def refit_direct(self) -> np.ndarray:
        """Least-squares coefficients recomputed from the stored history."""
        Psi = self.features.rows(self.X, self.N)
        theta, *_ = np.linalg.lstsq(Psi, self.Y, rcond=None)
        return theta

    def __repr__(self):
        return f"{type(self).__name__}(N={self.N}, n={self.n}, p={self.p}, initialized={self.initialized})"

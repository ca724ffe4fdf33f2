"""Additive-model projection estimator.

Each coordinate gets its own copy of a 1-d expansion; the stacked design has
``N * d`` eigen-columns plus shared parametric terms. Adding a basis level
appends ``d`` columns (one per coordinate) through ``d`` successive block
inversions.
"""

from __future__ import annotations

import math

import numpy as np

from .eigensystems import EigenSystem, PolyAugmented
from .projection import EstimatorConfig, ProjectionEstimator


class AdditiveFeatures:
    """Stacked feature map ``(psi_j(x^(k)))_{j <= N, k <= d}``.

    Column layout: one global intercept and per-coordinate monomials
    ``x^(k), ..., (x^(k))^deg`` when the 1-d system is polynomial-augmented,
    then levels ``j = 1, 2, ...`` each holding ``d`` columns ordered by
    coordinate.
    """

    def __init__(self, system: EigenSystem, d: int):
        if system.dim != 1:
            raise ValueError("additive models are built from a 1-d system")
        if d < 1:
            raise ValueError("dimension must be positive")
        self.d = int(d)
        self.point_dim = self.d
        self.point_shape = (self.d,)
        self.per_level = self.d
        if isinstance(system, PolyAugmented):
            self.base = system.base
            self.degree = system.degree
            self.n_fixed = 1 + self.d * self.degree
        else:
            self.base = system
            self.degree = -1
            self.n_fixed = 0
        self.system = system

    def n_columns(self, levels: int) -> int:
        return self.n_fixed + self.d * levels

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise ValueError(f"expected points with trailing axis {self.d}, got {X.shape}")
        return X

    def poly_part(self, X) -> np.ndarray:
        X = self._check(X)
        if self.degree < 0:
            return np.empty(X.shape[:-1] + (0,))
        one = np.ones(X.shape[:-1] + (1,))
        if self.degree == 0:
            return one
        mono = X[..., :, None] ** np.arange(1, self.degree + 1)
        return np.concatenate([one, mono.reshape(X.shape[:-1] + (-1,))], axis=-1)

    def rows(self, X, levels: int) -> np.ndarray:
        X = self._check(X)
        eig = self.base.features(X, 0, levels)  # (..., d, levels)
        eig = np.swapaxes(eig, -1, -2).reshape(X.shape[:-1] + (-1,))
        if self.n_fixed == 0:
            return eig
        return np.concatenate([self.poly_part(X), eig], axis=-1)

    def level_columns(self, X, level: int) -> np.ndarray:
        X = self._check(X)
        return self.base.features(X, level - 1, level)[..., 0]


class AdditiveEstimator(ProjectionEstimator):
    """Projection estimator for ``f(x) = sum_k f_k(x^(k))``.

    The basis schedule is the one-dimensional one, driven by ``alpha`` of the
    per-coordinate space.
    """

    def __init__(
        self,
        system: EigenSystem,
        d: int,
        alpha: float,
        c: float,
        n0: int = 1,
        clamp: float = math.inf,
        jitter_tol: float = 1e-10,
        buffer: int = 3,
    ):
        config = EstimatorConfig(
            system, alpha=alpha, c=c, n0=n0, clamp=clamp, jitter_tol=jitter_tol, buffer=buffer, d=1
        )
        super().__init__(config, AdditiveFeatures(system, d))
        self.d = int(d)

    def coefficient_table(self) -> np.ndarray:
        """Eigen-coefficients ``theta_{jk}`` as an ``(N, d)`` array."""
        theta = self.coefficients()
        return theta[self.features.n_fixed :].reshape(self.N, self.d)

    def component_function(self, k: int):
        """Return ``u -> f_k(u)`` for coordinate ``k`` (1-based).

        The global intercept is split evenly over the ``d`` components, so
        the components sum to the unclamped prediction.
        """
        if not 1 <= k <= self.d:
            raise IndexError(f"coordinate {k} out of range 1..{self.d}")
        theta = self.coefficients()
        feats = self.features
        table = self.coefficient_table()[:, k - 1]
        if feats.degree >= 0:
            intercept = theta[0] / self.d
            poly = theta[1 + (k - 1) * feats.degree : 1 + k * feats.degree]
        else:
            intercept = 0.0
            poly = np.empty(0)
        base = feats.base
        levels = self.N

        def f_k(u):
            u_arr = np.asarray(u, dtype=float)
            out = base.features(u_arr, 0, levels) @ table + intercept
            if poly.size:
                out = out + (u_arr[..., None] ** np.arange(1, poly.size + 1)) @ poly
            return float(out) if np.ndim(out) == 0 else out

        return f_k


def additive_observe(state: AdditiveEstimator, x, y: float) -> AdditiveEstimator:
    return state.observe(x, y)


def additive_predict(state: AdditiveEstimator, x):
    return state.predict(x)


def component_function(state: AdditiveEstimator, k: int):
    return state.component_function(k)

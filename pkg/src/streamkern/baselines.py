"""Reference estimators: batch kernel ridge regression and averaged kernel SGD."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from .eigensystems import EigenSystem


class KrrModel:
    """Kernel ridge regression with the loss averaged over ``n``.

    Solves ``(K + n lam I) a = Y``; the fit is ``f(x) = sum_i a_i K(X_i, x)``.
    """

    def __init__(self, system: EigenSystem, lam: float):
        if not lam > 0:
            raise ValueError("ridge level must be positive")
        self.system = system
        self.lam = float(lam)
        self.X = None
        self.coef = None

    def fit(self, X, Y) -> "KrrModel":
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        n = len(Y)
        if n < 1:
            raise ValueError("need at least one observation")
        K = self.system.gram(X)
        K[np.diag_indices_from(K)] += n * self.lam
        try:
            factor = linalg.cho_factor(K, lower=True, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise ArithmeticError(f"kernel ridge factorisation failed: {exc}") from exc
        self.coef = linalg.cho_solve(factor, Y, check_finite=False)
        self.X = X
        return self

    def predict(self, x):
        if self.coef is None:
            raise RuntimeError("model is not fitted")
        x = np.asarray(x, dtype=float)
        scalar = np.ndim(x) == (0 if self.system.dim == 1 else 1)
        pts = x.reshape((1,) + x.shape) if scalar else x
        out = self.system.gram(pts, self.X) @ self.coef
        return float(out[0]) if scalar else out


def krr_fit(X, Y, system: EigenSystem, lam: float) -> KrrModel:
    return KrrModel(system, lam).fit(X, Y)


def krr_predict(model: KrrModel, x):
    return model.predict(x)


class SgdModel:
    """Functional SGD with step ``gamma0 / sqrt(n)`` and Polyak averaging.

    ``f~_n = f~_{n-1} + gamma_n (y_n - f~_{n-1}(x_n)) K(x_n, .)`` and the
    reported estimator is ``f^_n = (1/(n+1)) sum_{k=0}^n f~_k``. Raw weights
    never change once appended, so the averaged weights are kept as a
    running mean over padded raw-weight vectors.

    ``kernel_evals`` counts kernel evaluations spent inside :meth:`step`.
    """

    def __init__(self, system: EigenSystem, gamma0: float):
        if not gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        self.system = system
        self.gamma0 = float(gamma0)
        self.n = 0
        self.kernel_evals = 0
        xshape = () if system.dim == 1 else (system.dim,)
        self._X = np.empty((64,) + xshape)
        self._raw = np.zeros(64)
        self._avg = np.zeros(64)

    @property
    def X(self):
        return self._X[: self.n]

    @property
    def raw_weights(self):
        return self._raw[: self.n]

    @property
    def avg_weights(self):
        return self._avg[: self.n]

    def _grow(self):
        cap = 2 * len(self._raw)
        X = np.empty((cap,) + self._X.shape[1:])
        X[: self.n] = self._X[: self.n]
        raw = np.zeros(cap)
        raw[: self.n] = self._raw[: self.n]
        avg = np.zeros(cap)
        avg[: self.n] = self._avg[: self.n]
        self._X, self._raw, self._avg = X, raw, avg

    def step(self, x, y: float) -> "SgdModel":
        n = self.n
        if n == len(self._raw):
            self._grow()
        if n:
            kx = self.system.kernel(self._X[:n], x)
            if self.system.dim > 1:
                kx = np.asarray(kx)
            pred = float(self._raw[:n] @ kx)
            self.kernel_evals += n
        else:
            pred = 0.0
        gamma = self.gamma0 / math.sqrt(n + 1)
        self._X[n] = x
        self._raw[n] = gamma * (float(y) - pred)
        self.n = n + 1
        m = self.n
        # avg_n = (n * avg_{n-1} + raw_n) / (n + 1), with avg_{n-1} zero-padded
        avg = self._avg[:m]
        avg *= (m / (m + 1))
        avg += self._raw[:m] / (m + 1)
        return self

    def predict(self, x, averaged: bool = True):
        w = self.avg_weights if averaged else self.raw_weights
        x = np.asarray(x, dtype=float)
        if self.n == 0:
            return 0.0 if np.ndim(x) == (0 if self.system.dim == 1 else 1) else np.zeros(
                self.system.point_shape(x)
            )
        scalar = np.ndim(x) == (0 if self.system.dim == 1 else 1)
        pts = x.reshape((1,) + x.shape) if scalar else x
        out = self.system.gram(pts, self.X) @ w
        return float(out[0]) if scalar else out


def sgd_step(model: SgdModel, x, y: float) -> SgdModel:
    return model.step(x, y)


def sgd_predict(model: SgdModel, x):
    return model.predict(x)

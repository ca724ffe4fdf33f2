"""Closed-form Mercer eigensystems for the kernel catalog.

Each system exposes eigenvalues ``lambda_j`` and eigenfunctions ``psi_j``
(1-based index ``j``), orthonormal in L2 of its working measure, together
with the closed-form kernel where one exists.

Points follow one convention throughout: a system of dimension 1 accepts a
scalar or an array of points of any shape; a system of dimension ``d > 1``
accepts arrays whose trailing axis has length ``d``.
"""

from __future__ import annotations

import heapq
import math
import re
import threading
from abc import ABC, abstractmethod

import numpy as np


class ConfigurationError(ValueError):
    """Unknown kernel id or unsupported system parameters."""


# -- working measures -------------------------------------------------------


class WorkingMeasure(ABC):
    """Probability measure under which an eigensystem is orthonormal."""

    dim: int = 1

    @abstractmethod
    def density(self, x) -> np.ndarray: ...

    @abstractmethod
    def quadrature(self, n_nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(nodes, weights)`` with ``sum(w * f(nodes)) ~ E[f(X)]``."""


class UniformUnit(WorkingMeasure):
    default_nodes = 256

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return ((x >= 0.0) & (x <= 1.0)).astype(float)

    def quadrature(self, n_nodes=None):
        t, w = np.polynomial.legendre.leggauss(n_nodes or self.default_nodes)
        return 0.5 * (t + 1.0), 0.5 * w

    def __repr__(self):
        return "UniformUnit()"


class GaussianDensity(WorkingMeasure):
    """Density ``a / sqrt(pi) * exp(-a^2 x^2)`` on the real line."""

    default_nodes = 128

    def __init__(self, alpha: float = 1.0):
        if alpha <= 0:
            raise ConfigurationError("Gaussian measure parameter must be positive")
        self.alpha = float(alpha)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha / math.sqrt(math.pi) * np.exp(-(self.alpha * x) ** 2)

    def quadrature(self, n_nodes=None):
        t, w = np.polynomial.hermite.hermgauss(n_nodes or self.default_nodes)
        return t / self.alpha, w / math.sqrt(math.pi)

    def __repr__(self):
        return f"GaussianDensity(alpha={self.alpha})"


class ProductMeasure(WorkingMeasure):
    """``d``-fold product of a one-dimensional measure (ProductUniform when uniform)."""

    def __init__(self, base: WorkingMeasure, dim: int):
        if base.dim != 1:
            raise ConfigurationError("product measures are built from 1-d measures")
        self.base = base
        self.dim = int(dim)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod(self.base.density(x), axis=-1)

    def quadrature(self, n_nodes=None):
        t, w = self.base.quadrature(n_nodes)
        grids = np.meshgrid(*([t] * self.dim), indexing="ij")
        wgrids = np.meshgrid(*([w] * self.dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        return nodes, weights

    def __repr__(self):
        return f"ProductMeasure({self.base!r}, {self.dim})"


def ProductUniform(dim: int) -> ProductMeasure:
    return ProductMeasure(UniformUnit(), dim)


# -- eigensystems -----------------------------------------------------------


def bernoulli4(x):
    """Fourth Bernoulli polynomial ``x^4 - 2x^3 + x^2 - 1/30``."""
    x = np.asarray(x, dtype=float)
    return x**4 - 2.0 * x**3 + x**2 - 1.0 / 30.0


class EigenSystem(ABC):
    """Ordered eigenvalue/eigenfunction catalog of a kernel.

    Subclasses implement :meth:`features`, the vectorised evaluation of a
    contiguous block of eigenfunctions; everything else derives from it.
    """

    kernel_id: str
    dim: int = 1
    measure: WorkingMeasure
    #: leading basis functions that are fixed parametric terms, not eigenfunctions
    n_fixed: int = 0

    @abstractmethod
    def eigenvalue(self, j: int) -> float: ...

    @abstractmethod
    def features(self, x, start: int, stop: int) -> np.ndarray:
        """Evaluate ``psi_{start+1} .. psi_stop`` at ``x``.

        Returns an array of shape ``point_shape + (stop - start,)``.
        """

    @abstractmethod
    def kernel(self, x, z) -> np.ndarray:
        """Closed-form ``K(x, z)``, broadcasting over points."""

    def eigenvalues(self, J: int) -> np.ndarray:
        return np.array([self.eigenvalue(j) for j in range(1, J + 1)])

    def basis(self, j: int, x):
        _check_index(j)
        out = self.features(x, j - 1, j)[..., 0]
        return float(out) if out.ndim == 0 else out

    def point_shape(self, x) -> tuple[int, ...]:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return x.shape
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points with trailing axis {self.dim}, got {x.shape}")
        return x.shape[:-1]

    def mercer_partial_sum(self, x, z, J: int):
        """Truncated expansion ``sum_{j<=J} lambda_j psi_j(x) psi_j(z)``."""
        _check_index(J)
        lam = self.eigenvalues(J)
        fx = self.features(x, 0, J)
        fz = self.features(z, 0, J)
        out = np.sum(lam * fx * fz, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def gram(self, X, Z=None) -> np.ndarray:
        """Kernel matrix ``K(X_i, Z_j)`` for point arrays ``X`` and ``Z``."""
        X = np.asarray(X, dtype=float)
        Z = X if Z is None else np.asarray(Z, dtype=float)
        if self.dim == 1:
            return self.kernel(X.reshape(-1, 1), Z.reshape(1, -1))
        return self.kernel(X[:, None, :], Z[None, :, :])


def _check_index(j):
    if int(j) != j or j < 1:
        raise ValueError(f"basis index must be a positive integer, got {j!r}")


class SobolevMin(EigenSystem):
    """``K(s, t) = min(s, t)`` on [0, 1], the kernel of W_1^0."""

    kernel_id = "sobolev_min"

    def __init__(self):
        self.measure = UniformUnit()

    def eigenvalue(self, j):
        _check_index(j)
        return 4.0 / ((2 * j - 1) ** 2 * math.pi**2)

    def features(self, x, start, stop):
        x = np.asarray(x, dtype=float)
        freq = (2.0 * np.arange(start + 1, stop + 1) - 1.0) * (math.pi / 2.0)
        return math.sqrt(2.0) * np.sin(x[..., None] * freq)

    def kernel(self, x, z):
        return np.minimum(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    def __repr__(self):
        return "SobolevMin()"


class PeriodicBernoulli(EigenSystem):
    """Periodic spline kernel ``-B_4({s - t}) / 24`` on [0, 1].

    Index ``j`` enumerates ``sin_1, cos_1, sin_2, cos_2, ...`` with frequency
    ``k = ceil(j / 2)``. With ``orthonormal=True`` the functions are
    ``sqrt(2) sin(2 pi k x)`` and the eigenvalue is ``1 / (2 pi k)^4``; with
    ``orthonormal=False`` they are unit-amplitude and the eigenvalue doubles
    to ``2 / (2 pi k)^4``. Both give the same kernel.
    """

    kernel_id = "periodic_bernoulli"

    def __init__(self, orthonormal: bool = True):
        self.measure = UniformUnit()
        self.orthonormal = orthonormal
        self._amp = math.sqrt(2.0) if orthonormal else 1.0
        self._scale = 1.0 if orthonormal else 2.0

    @staticmethod
    def frequency(j: int) -> int:
        return (j + 1) // 2

    def eigenvalue(self, j):
        _check_index(j)
        return self._scale / (2.0 * math.pi * self.frequency(j)) ** 4

    def features(self, x, start, stop):
        x = np.asarray(x, dtype=float)
        j = np.arange(start + 1, stop + 1)
        k = (j + 1) // 2
        # cos(t) = sin(t + pi/2) keeps this a single vectorised ufunc call
        phase = np.where(j % 2 == 0, math.pi / 2.0, 0.0)
        return self._amp * np.sin(x[..., None] * (2.0 * math.pi * k) + phase)

    def kernel(self, x, z):
        diff = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
        return -bernoulli4(diff - np.floor(diff)) / 24.0

    def __repr__(self):
        return f"PeriodicBernoulli(orthonormal={self.orthonormal})"


class Gaussian(EigenSystem):
    """``K(x, z) = exp(-eps^2 |x - z|^2)`` under the density ``a/sqrt(pi) exp(-a^2 x^2)``.

    ``psi_j(x) = sqrt(beta) exp(-delta^2 x^2) h_{j-1}(a beta x)`` where ``h_k``
    are Hermite polynomials normalised by ``sqrt(2^k k!)``, evaluated by the
    normalised three-term recurrence so that no factorials appear.
    """

    kernel_id = "gaussian"

    def __init__(self, alpha: float = 1.0, eps: float = 1.0):
        if eps <= 0:
            raise ConfigurationError("Gaussian shape parameter must be positive")
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.measure = GaussianDensity(alpha)
        a2, e2 = self.alpha**2, self.eps**2
        self.beta = (1.0 + 4.0 * e2 / a2) ** 0.25
        self.delta2 = 0.5 * a2 * (self.beta**2 - 1.0)
        denom = a2 + self.delta2 + e2
        self._lead = math.sqrt(a2 / denom)
        self._ratio = e2 / denom

    def eigenvalue(self, j):
        _check_index(j)
        return self._lead * self._ratio ** (j - 1)

    def features(self, x, start, stop):
        x = np.asarray(x, dtype=float)
        u = self.alpha * self.beta * x
        out = np.empty(x.shape + (stop - start,))
        if stop <= start:
            return out
        envelope = math.sqrt(self.beta) * np.exp(-self.delta2 * x**2)
        h_prev = np.zeros_like(u)
        h = np.ones_like(u)
        for k in range(stop):
            if k >= start:
                out[..., k - start] = envelope * h
            h, h_prev = math.sqrt(2.0 / (k + 1)) * u * h - math.sqrt(k / (k + 1)) * h_prev, h
        return out

    def kernel(self, x, z):
        diff = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
        return np.exp(-self.eps**2 * diff**2)

    def __repr__(self):
        return f"Gaussian(alpha={self.alpha}, eps={self.eps})"


class TensorProduct(EigenSystem):
    """``d``-fold tensor product of a one-dimensional system.

    Multi-indices are enumerated best-first by product eigenvalue with a
    max-heap over the index lattice; the order is memoised and extended on
    demand. Ties break on the multi-index itself so the order is
    deterministic.
    """

    def __init__(self, base: EigenSystem, dim: int):
        if base.dim != 1 or base.n_fixed:
            raise ConfigurationError("tensor products need a pure 1-d eigensystem")
        if dim < 1:
            raise ConfigurationError("tensor dimension must be positive")
        self.base = base
        self.dim = int(dim)
        self.kernel_id = f"tensor:{base.kernel_id}:{dim}"
        self.measure = ProductMeasure(base.measure, dim)
        self._order: list[tuple[int, ...]] = []
        self._values: list[float] = []
        start = (1,) * self.dim
        self._heap = [(-self._product(start), start)]
        self._seen = {start}
        self._lock = threading.Lock()

    def _product(self, idx):
        return math.prod(self.base.eigenvalue(i) for i in idx)

    def _extend(self, count: int):
        with self._lock:
            while len(self._order) < count:
                negval, idx = heapq.heappop(self._heap)
                self._order.append(idx)
                self._values.append(-negval)
                for axis in range(self.dim):
                    nxt = idx[:axis] + (idx[axis] + 1,) + idx[axis + 1 :]
                    if nxt not in self._seen:
                        self._seen.add(nxt)
                        heapq.heappush(self._heap, (-self._product(nxt), nxt))

    def multi_index(self, j: int) -> tuple[int, ...]:
        _check_index(j)
        self._extend(j)
        return self._order[j - 1]

    def eigenvalue(self, j):
        _check_index(j)
        self._extend(j)
        return self._values[j - 1]

    def features(self, x, start, stop):
        shape = self.point_shape(x)
        x = np.asarray(x, dtype=float)
        if stop <= start:
            return np.empty(shape + (0,))
        self._extend(stop)
        idx = np.array(self._order[start:stop])  # (m, d)
        top = int(idx.max())
        out = np.ones(shape + (stop - start,))
        for axis in range(self.dim):
            comp = self.base.features(x[..., axis], 0, top)  # shape + (top,)
            out *= comp[..., idx[:, axis] - 1]
        return out

    def kernel(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return np.prod(self.base.kernel(x, z), axis=-1)

    def __repr__(self):
        return f"TensorProduct({self.base!r}, {self.dim})"


class PolyAugmented(EigenSystem):
    """Prepend monomials ``1, x, ..., x^degree`` to a 1-d eigensystem.

    The monomials are unpenalised parametric terms: they carry an infinite
    eigenvalue, sit outside the eigenvalue ordering and are counted by
    :attr:`n_fixed`. The kernel adds ``sum_m s^m t^m`` to the base kernel.
    """

    max_degree = 2

    def __init__(self, base: EigenSystem, degree: int):
        if degree not in range(self.max_degree + 1):
            raise ConfigurationError(f"polynomial degree must be in 0..{self.max_degree}, got {degree}")
        if base.dim != 1 or base.n_fixed:
            raise ConfigurationError("polynomial augmentation needs a pure 1-d eigensystem")
        self.base = base
        self.degree = int(degree)
        self.n_fixed = self.degree + 1
        self.kernel_id = f"poly{degree}+{base.kernel_id}"
        self.measure = base.measure

    def eigenvalue(self, j):
        _check_index(j)
        if j <= self.n_fixed:
            return math.inf
        return self.base.eigenvalue(j - self.n_fixed)

    def features(self, x, start, stop):
        x = np.asarray(x, dtype=float)
        parts = []
        lo, hi = start, min(stop, self.n_fixed)
        if hi > lo:
            parts.append(x[..., None] ** np.arange(lo, hi))
        lo, hi = max(start, self.n_fixed), stop
        if hi > lo:
            parts.append(self.base.features(x, lo - self.n_fixed, hi - self.n_fixed))
        if not parts:
            return np.empty(x.shape + (0,))
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-1)

    def kernel(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        poly = sum((x * z) ** m for m in range(self.degree + 1))
        return poly + self.base.kernel(x, z)

    def mercer_partial_sum(self, x, z, J):
        _check_index(J)
        fixed = min(J, self.n_fixed)
        x_arr = np.asarray(x, dtype=float)
        z_arr = np.asarray(z, dtype=float)
        out = sum((x_arr * z_arr) ** m for m in range(fixed))
        if J > self.n_fixed:
            out = out + self.base.mercer_partial_sum(x, z, J - self.n_fixed)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"PolyAugmented({self.base!r}, {self.degree})"


# -- public operations ------------------------------------------------------


def eigenvalue(sys: EigenSystem, j: int) -> float:
    return sys.eigenvalue(j)


def basis_eval(sys: EigenSystem, j: int, x):
    return sys.basis(j, x)


def kernel_eval(sys: EigenSystem, x, z):
    out = sys.kernel(x, z)
    return float(out) if np.ndim(out) == 0 else out


def mercer_partial_sum(sys: EigenSystem, x, z, J: int):
    return sys.mercer_partial_sum(x, z, J)


def augment_with_polynomials(base: EigenSystem, degree: int) -> PolyAugmented:
    return PolyAugmented(base, degree)


_BASE_IDS = {
    "sobolev_min": SobolevMin,
    "periodic_bernoulli": PeriodicBernoulli,
    "gaussian": Gaussian,
}
_POLY_RE = re.compile(r"^poly(\d+)\+(.+)$")
_TENSOR_RE = re.compile(r"^tensor:([a-z_]+):(\d+)$")


def make_system(kernel_id: str, **params) -> EigenSystem:
    """Build a system from its string id.

    Recognised ids are ``sobolev_min``, ``periodic_bernoulli``, ``gaussian``,
    ``tensor:<base>:<d>`` and ``poly<k>+<base>``. Keyword parameters are
    forwarded to the base constructor (e.g. ``alpha``/``eps`` for gaussian).
    """
    kernel_id = kernel_id.strip()
    m = _POLY_RE.match(kernel_id)
    if m:
        return PolyAugmented(make_system(m.group(2), **params), int(m.group(1)))
    m = _TENSOR_RE.match(kernel_id)
    if m:
        return TensorProduct(make_system(m.group(1), **params), int(m.group(2)))
    try:
        cls = _BASE_IDS[kernel_id]
    except KeyError:
        raise ConfigurationError(f"unknown kernel id {kernel_id!r}") from None
    return cls(**params)


def orthonormality_error(sys: EigenSystem, J: int, n_nodes: int | None = None) -> float:
    """Max deviation of the quadrature Gram ``E[psi_i psi_j]`` from identity.

    Fixed (polynomial) terms are skipped; only eigenfunctions are checked.
    """
    nodes, weights = sys.measure.quadrature(n_nodes)
    F = sys.features(nodes, sys.n_fixed, sys.n_fixed + J)
    G = F.T @ (weights[:, None] * F)
    return float(np.max(np.abs(G - np.eye(J))))


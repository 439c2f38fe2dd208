"""Interaction kernels ``K(x, y)`` of the class L_0 and the special functions they need.

Every kernel here is symmetric and bounded between its ellipticity constants
``lambda_lo <= K <= lambda_hi``. The singular factor ``|x - y|**(-1 - 2s)`` is *not*
part of ``K``; it is handled by the quadrature in :mod:`npme.discretization`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "normalization_constant",
    "gamma_function",
    "beta_function",
    "Kernel",
    "FractionalLaplacian",
    "FractionalConductivity",
    "SeparableAnalytic",
    "TabulatedKernel",
    "kernel_eval",
    "OffGridError",
]

# sample window used to bound callable coefficient fields
_BOUND_SAMPLES = np.concatenate([np.linspace(-64.0, 64.0, 20001), [-1e6, 1e6]])


class OffGridError(ValueError):
    """A tabulated kernel was asked for a value away from its nodes."""


def gamma_function(a):
    """Gamma function, valid at negative non-integer arguments."""
    return special.gamma(a)


def beta_function(a: float, b: float) -> float:
    """Euler beta function ``B(a, b) = int_0^1 (1-t)^(a-1) t^(b-1) dt``."""
    if not (a > 0 and b > 0):
        raise ValueError(f"beta_function needs a, b > 0, got a={a}, b={b}")
    return float(special.beta(a, b))


def normalization_constant(n: int, s: float) -> float:
    """``C_{n,s} = 4^s Gamma(n/2 + s) / (pi^(n/2) |Gamma(-s)|)``.

    This is the constant that gives the fractional Laplacian the Fourier symbol
    ``|xi|^(2s)``.
    """
    if not (0.0 < s < 1.0):
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return 4.0**s * special.gamma(n / 2.0 + s) / (math.pi ** (n / 2.0) * abs(special.gamma(-s)))


def _check_order(s):
    if not (0.0 < s < 1.0):
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")


class Kernel:
    """Base class. Subclasses set ``s``, ``lambda_lo``, ``lambda_hi``."""

    s: float
    lambda_lo: float
    lambda_hi: float

    def evaluate(self, x, y):
        raise NotImplementedError

    __call__ = evaluate

    def to_dict(self) -> dict:
        raise NotImplementedError


class _Separable(Kernel):
    """``K(x, y) = f(x) f(y)`` for a positive factor ``f``."""

    def factor(self, x):
        raise NotImplementedError

    def evaluate(self, x, y):
        return self.factor(np.asarray(x, dtype=float)) * self.factor(np.asarray(y, dtype=float))

    def _set_bounds(self):
        f = self.factor(_BOUND_SAMPLES)
        if not np.all(np.isfinite(f)) or f.min() <= 0:
            raise ValueError("kernel factor must be finite and strictly positive")
        self.lambda_lo = float(f.min() ** 2)
        self.lambda_hi = float(f.max() ** 2)


class FractionalLaplacian(_Separable):
    """Constant kernel ``C_{1,s}``."""

    def __init__(self, s: float):
        _check_order(s)
        self.s = float(s)
        self.constant = normalization_constant(1, s)
        self.lambda_lo = self.lambda_hi = self.constant

    def factor(self, x):
        return np.full(np.shape(x), math.sqrt(self.constant))

    def evaluate(self, x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, self.constant)

    def to_dict(self):
        return {"variant": "fractional_laplacian", "s": self.s}


class FractionalConductivity(_Separable):
    """``K(x, y) = C_{1,s} gamma(x)^(1/2) gamma(y)^(1/2)`` for a uniformly elliptic ``gamma``.

    ``gamma`` is a vectorized callable on the whole real line.
    """

    def __init__(self, s: float, gamma: Callable, label: str | None = None):
        _check_order(s)
        self.s = float(s)
        self.gamma = gamma
        self.label = label
        self.constant = normalization_constant(1, s)
        self._set_bounds()

    def factor(self, x):
        return np.sqrt(self.constant * np.asarray(self.gamma(x), dtype=float))

    def to_dict(self):
        return {"variant": "fractional_conductivity", "s": self.s, "gamma": self.label}


class SeparableAnalytic(_Separable):
    """``K(x, y) = F(gamma(x)) F(gamma(y))`` with injective positive ``F``."""

    def __init__(self, s: float, gamma: Callable, F: Callable, label: str | None = None):
        _check_order(s)
        self.s = float(s)
        self.gamma = gamma
        self.F = F
        self.label = label
        self._set_bounds()

    def factor(self, x):
        return np.asarray(self.F(np.asarray(self.gamma(x), dtype=float)), dtype=float)

    def to_dict(self):
        return {"variant": "separable_analytic", "s": self.s, "gamma": self.label}


@dataclass
class TabulatedKernel(Kernel):
    """Kernel given by its values on grid nodes.

    Only the lower triangle of ``values`` is stored, so ``K(x, y) == K(y, x)``
    holds exactly. Evaluation away from the nodes raises :class:`OffGridError`.
    """

    s: float
    nodes: np.ndarray
    values: np.ndarray
    atol: float = 1e-12
    lambda_lo: float = field(init=False)
    lambda_hi: float = field(init=False)

    def __post_init__(self):
        _check_order(self.s)
        self.nodes = np.asarray(self.nodes, dtype=float)
        v = np.asarray(self.values, dtype=float)
        n = self.nodes.size
        if v.shape != (n, n):
            raise ValueError(f"values must be ({n}, {n}), got {v.shape}")
        self.values = np.tril(v)
        low = v[np.tril_indices(n)]
        if low.min() <= 0 or not np.all(np.isfinite(low)):
            raise ValueError("tabulated kernel must be finite and strictly positive")
        self.lambda_lo, self.lambda_hi = float(low.min()), float(low.max())

    def node_index(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, x), 0, self.nodes.size - 1)
        left = np.clip(idx - 1, 0, self.nodes.size - 1)
        pick = np.where(np.abs(self.nodes[left] - x) < np.abs(self.nodes[idx] - x), left, idx)
        if np.any(np.abs(self.nodes[pick] - x) > self.atol * max(1.0, np.abs(self.nodes).max())):
            raise OffGridError("tabulated kernel evaluated away from its grid nodes")
        return pick

    def evaluate(self, x, y):
        i, j = self.node_index(x), self.node_index(y)
        return self.values[np.maximum(i, j), np.minimum(i, j)]

    def at_indices(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        return self.values[np.maximum(i, j), np.minimum(i, j)]

    def to_dict(self):
        return {"variant": "tabulated", "s": self.s}


def kernel_eval(kernel: Kernel, x, y):
    """Evaluate ``K(x, y)``; thin functional wrapper around :meth:`Kernel.evaluate`."""
    return kernel.evaluate(x, y)

"""Power-law nonlinearity and its C^1 regularization.

``PowerLaw`` is ``t -> |t|**(m-1) * t``. ``RegularizedPowerLaw`` replaces it by a
bi-Lipschitz function that is an odd polynomial on ``[-eps, eps]``, the exact power
law on ``eps <= |t| <= 1/eps`` and affine beyond ``1/eps``. All evaluations are
arranged as ``sign(t) * f(|t|)`` so odd symmetry holds bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["PowerLaw", "RegularizedPowerLaw", "default_even_exponent", "epsilon_schedule"]


def _odd(f, t):
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * f(np.abs(t))
    return out if out.ndim else float(out)


def default_even_exponent(m: float) -> int:
    """Smallest even integer strictly larger than ``p = m + 1``."""
    p = m + 1.0
    M = 2 * (math.floor(p / 2) + 1)
    return int(M)


def epsilon_schedule(k_max: int, k_min: int = 3) -> list[float]:
    """Geometric continuation ladder ``eps_k = 2**-k`` for ``k = k_min..k_max``."""
    if k_max < k_min:
        raise ValueError(f"k_max={k_max} must be >= k_min={k_min}")
    return [2.0 ** (-k) for k in range(k_min, k_max + 1)]


@dataclass(frozen=True)
class PowerLaw:
    """The degenerate nonlinearity ``|t|**(m-1) t`` with ``m > 1``."""

    m: float

    def __post_init__(self):
        if not (self.m > 1.0):
            raise ValueError(f"power-law exponent must satisfy m > 1, got m={self.m}")

    @property
    def conjugate(self) -> float:
        """Hoelder conjugate ``m' = m / (m - 1)``."""
        return self.m / (self.m - 1.0)

    def phi(self, t):
        return _odd(lambda a: a ** self.m, t)

    __call__ = phi

    def prime(self, t):
        a = np.abs(np.asarray(t, dtype=float))
        out = self.m * a ** (self.m - 1.0)
        return out if out.ndim else float(out)

    def inverse(self, y):
        return _odd(lambda a: a ** (1.0 / self.m), y)

    def antiderivative(self, t):
        """``int_0^t phi``; even in ``t``."""
        a = np.abs(np.asarray(t, dtype=float))
        out = a ** (self.m + 1.0) / (self.m + 1.0)
        return out if out.ndim else float(out)

    def regularize(self, epsilon: float, M_even: int | None = None) -> "RegularizedPowerLaw":
        return RegularizedPowerLaw(self.m, epsilon, M_even)


@dataclass(frozen=True)
class RegularizedPowerLaw:
    """C^1 bi-Lipschitz approximation of :class:`PowerLaw` at scale ``epsilon``.

    Parameters
    ----------
    m : float
        Power-law exponent, ``m > 1``.
    epsilon : float
        Regularization scale, ``0 < epsilon < 1``.
    M_even : int, optional
        Degree parameter of the inner polynomial, even and larger than ``m + 1``.
        Defaults to the smallest admissible value.
    """

    m: float
    epsilon: float
    M_even: int | None = None
    a_eps: float = field(init=False, repr=False)
    b_eps: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.m > 1.0):
            raise ValueError(f"power-law exponent must satisfy m > 1, got m={self.m}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        p = self.m + 1.0
        M = default_even_exponent(self.m) if self.M_even is None else int(self.M_even)
        if M % 2 or not M > p:
            raise ValueError(f"M_even must be an even integer > m+1={p}, got {M}")
        eps = self.epsilon
        object.__setattr__(self, "M_even", M)
        object.__setattr__(self, "a_eps", (p - 2.0) / (M - 2.0) * eps ** (p - M))
        object.__setattr__(self, "b_eps", (M - p) / (M - 2.0) * eps ** (p - 2.0))

    @property
    def p(self) -> float:
        return self.m + 1.0

    @property
    def law(self) -> PowerLaw:
        return PowerLaw(self.m)

    @property
    def slope_bounds(self) -> tuple[float, float]:
        """``(c_eps, C_eps)`` with ``c_eps <= phi_eps' <= C_eps`` on the real line."""
        m, eps = self.m, self.epsilon
        return self.b_eps, m * eps ** (1.0 - m)

    def _f(self, a):
        m, eps, M = self.m, self.epsilon, self.M_even
        ai = np.minimum(a, eps)
        inner = self.a_eps * ai ** (M - 1) + self.b_eps * ai
        # clipping keeps the unused branches finite
        mid = np.clip(a, eps, 1.0 / eps) ** m
        outer = m * eps ** (1.0 - m) * a + (1.0 - m) * eps ** (-m)
        return np.where(a <= eps, inner, np.where(a <= 1.0 / eps, mid, outer))

    def _fprime(self, a):
        m, eps, M = self.m, self.epsilon, self.M_even
        inner = (M - 1) * self.a_eps * np.minimum(a, eps) ** (M - 2) + self.b_eps
        mid = m * np.clip(a, eps, 1.0 / eps) ** (m - 1.0)
        outer = np.full_like(a, m * eps ** (1.0 - m))
        return np.where(a <= eps, inner, np.where(a <= 1.0 / eps, mid, outer))

    def phi(self, t):
        return _odd(self._f, t)

    __call__ = phi

    def prime(self, t):
        out = self._fprime(np.abs(np.asarray(t, dtype=float)))
        return out if out.ndim else float(out)

    def antiderivative(self, t):
        """``int_0^t phi_eps``; even in ``t``."""
        m, eps, M = self.m, self.epsilon, self.M_even
        a = np.abs(np.asarray(t, dtype=float))
        e1 = self.a_eps * eps ** M / M + self.b_eps * eps**2 / 2.0
        ai = np.minimum(a, eps)
        inner = self.a_eps * ai**M / M + self.b_eps * ai**2 / 2.0
        mid = e1 + (np.clip(a, eps, 1.0 / eps) ** (m + 1.0) - eps ** (m + 1.0)) / (m + 1.0)
        e2 = e1 + (eps ** (-m - 1.0) - eps ** (m + 1.0)) / (m + 1.0)
        slope, icpt = m * eps ** (1.0 - m), (1.0 - m) * eps ** (-m)
        outer = e2 + slope * (a**2 - eps**-2) / 2.0 + icpt * (a - 1.0 / eps)
        out = np.where(a <= eps, inner, np.where(a <= 1.0 / eps, mid, outer))
        return out if out.ndim else float(out)

    def inverse(self, y):
        """Piecewise inverse; the polynomial piece uses bisection plus Newton polish."""
        return _odd(self._finv, y)

    def _finv(self, b0):
        m, eps = self.m, self.epsilon
        b = np.atleast_1d(b0)
        lo_y, hi_y = eps**m, eps ** (-m)
        out = np.empty_like(b)
        mid = (b > lo_y) & (b <= hi_y)
        out[mid] = b[mid] ** (1.0 / m)
        big = b > hi_y
        out[big] = (b[big] - (1.0 - m) * eps ** (-m)) / (m * eps ** (1.0 - m))
        small = b <= lo_y
        if np.any(small):
            out[small] = self._invert_polynomial(b[small])
        return out.reshape(np.shape(b0))

    def _invert_polynomial(self, y):
        lo = np.zeros_like(y)
        hi = np.full_like(y, self.epsilon)
        for _ in range(60):
            c = 0.5 * (lo + hi)
            below = self._f(c) < y
            lo = np.where(below, c, lo)
            hi = np.where(below, hi, c)
        x = 0.5 * (lo + hi)
        for _ in range(2):
            x = x - (self._f(x) - y) / self._fprime(x)
        return np.clip(x, 0.0, self.epsilon)

    def sup_gap_bound(self, K: float) -> float:
        """Certified bound on ``max_{[0, K]} |phi_eps - phi|``; requires ``K <= 1/eps``."""
        if K <= 0:
            raise ValueError("K must be positive")
        if K > 1.0 / self.epsilon:
            raise ValueError(f"K={K} exceeds 1/epsilon={1.0 / self.epsilon}; bound not valid")
        p, M = self.p, self.M_even
        return (M + p - 4.0) / (M - 2.0) * self.epsilon ** (p - 1.0)

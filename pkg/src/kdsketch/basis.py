"""Trigonometric expansion of interval indicators.

On the open unit interval the indicator of ``a < x < b`` expands as

    1(a < x < b) = sum_j c_j(x) * g_j(a, b)

with ``c_0 = 1``, ``c_{2j-1}(x) = cos((2j-1)x)``, ``c_{2j}(x) = sin((2j-1)x)``
and closed-form coefficients ``g_j``.  Truncating after ``j = 2J`` gives the
order-``J`` partial sum; products over coordinates give the p-dimensional box
version.  Arguments are radians with no pi rescaling: ``x - c`` stays inside
``(-1, 1)``, well within the period of the underlying square wave.

Index layout used everywhere in the package: position ``0`` is the constant,
position ``2j-1`` the cosine of harmonic ``2j-1`` and position ``2j`` its sine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeMismatchError

__all__ = [
    "Neighborhood",
    "as_unit_points",
    "harmonics",
    "coef_c",
    "coef_g",
    "c_vector",
    "g_vector",
    "indicator_partial_sum_1d",
    "indicator_partial_sum_pd",
    "square_wave_reference",
]


@dataclass(frozen=True)
class Neighborhood:
    """Open axis-aligned box ``(lower, upper)`` inside the closed unit cube."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ShapeMismatchError("lower and upper must be non-empty and of equal length")
        for a, b in zip(lo, hi):
            if not (0.0 <= a < b <= 1.0):
                raise DomainError(f"invalid interval ({a!r}, {b!r})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def full(cls, p: int) -> "Neighborhood":
        return cls((0.0,) * p, (1.0,) * p)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def split(self, axis: int, value: float) -> tuple["Neighborhood", "Neighborhood"]:
        """Cut along ``axis`` at ``value``: ``(a, b_{-t}(m))`` and ``(a_{-t}(m), b)``."""
        if not (self.lower[axis] < value < self.upper[axis]):
            raise DomainError(f"split value {value!r} outside ({self.lower[axis]}, {self.upper[axis]})")
        upper = list(self.upper)
        upper[axis] = value
        lower = list(self.lower)
        lower[axis] = value
        return Neighborhood(self.lower, tuple(upper)), Neighborhood(tuple(lower), self.upper)

    def contains(self, points) -> np.ndarray:
        """Strict-inequality membership mask for an ``(n, p)`` array."""
        pts = np.asarray(points, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts > lo) & (pts < hi), axis=-1)


def as_unit_points(points, p: int | None = None) -> np.ndarray:
    """Return ``points`` as a float ``(n, p)`` array, checking ``0 < x < 1``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if p in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d point array, got shape {arr.shape}")
    if p is not None and arr.shape[1] != p:
        raise ShapeMismatchError(f"points have dimension {arr.shape[1]}, expected {p}")
    if arr.size and not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("all coordinates must lie strictly inside (0, 1)")
    return arr


def harmonics(J: int) -> np.ndarray:
    """Odd harmonics 1, 3, ..., 2J-1 as floats."""
    if J < 1:
        raise ValueError("J must be a positive integer")
    return 2.0 * np.arange(1, J + 1) - 1.0


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DomainError("x must lie strictly inside (0, 1)")
    return x


def _check_ab(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0.0) or np.any(b > 1.0) or np.any(a >= b):
        raise DomainError("need 0 <= a < b <= 1")
    return a, b


def coef_c(j: int, x: float) -> float:
    """Basis function ``c_j(x)``."""
    if j < 0:
        raise DomainError("index j must be non-negative")
    x = float(_check_x(x))
    if j == 0:
        return 1.0
    k = 2 * ((j + 1) // 2) - 1
    return math.cos(k * x) if j % 2 else math.sin(k * x)


def coef_g(j: int, a: float, b: float) -> float:
    """Box coefficient ``g_j(a, b)``, including the boundary gates at 0 and 1."""
    if j < 0:
        raise DomainError("index j must be non-negative")
    a, b = (float(v) for v in _check_ab(a, b))
    ga = 1.0 if a > 0.0 else 0.0
    gb = 1.0 if b < 1.0 else 0.0
    if j == 0:
        return 1.0 - 0.5 * (ga + gb)
    k = 2 * ((j + 1) // 2) - 1
    scale = 2.0 / (math.pi * k)
    if j % 2:
        return scale * (gb * math.sin(k * b) - ga * math.sin(k * a))
    return scale * (ga * math.cos(k * a) - gb * math.cos(k * b))


def c_vector(x, J: int) -> np.ndarray:
    """All ``c_0 .. c_{2J}`` at ``x``; output shape ``x.shape + (2J+1,)``."""
    x = _check_x(x)
    k = harmonics(J)
    arg = x[..., None] * k
    out = np.empty(x.shape + (2 * J + 1,))
    out[..., 0] = 1.0
    out[..., 1::2] = np.cos(arg)
    out[..., 2::2] = np.sin(arg)
    return out


def g_vector(a, b, J: int) -> np.ndarray:
    """All ``g_0 .. g_{2J}`` for (broadcast) interval endpoints."""
    a, b = _check_ab(a, b)
    a, b = np.broadcast_arrays(a, b)
    k = harmonics(J)
    ga = (a > 0.0).astype(float)[..., None]
    gb = (b < 1.0).astype(float)[..., None]
    scale = 2.0 / (np.pi * k)
    ka = a[..., None] * k
    kb = b[..., None] * k
    out = np.empty(a.shape + (2 * J + 1,))
    out[..., 0] = 1.0 - 0.5 * (ga[..., 0] + gb[..., 0])
    out[..., 1::2] = scale * (gb * np.sin(kb) - ga * np.sin(ka))
    out[..., 2::2] = scale * (ga * np.cos(ka) - gb * np.cos(kb))
    return out


def indicator_partial_sum_1d(x, a, b, J: int):
    """Order-``J`` partial sum ``1_J(x, a, b)``; not clamped to [0, 1]."""
    terms = c_vector(x, J) * g_vector(a, b, J)
    out = terms.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def indicator_partial_sum_pd(x: Sequence[float], nb: Neighborhood, J: int) -> float:
    """Product over coordinates of the one-dimensional partial sums."""
    x = np.asarray(x, dtype=float)
    if x.shape != (nb.dim,):
        raise ShapeMismatchError(f"point of shape {x.shape} vs neighborhood of dimension {nb.dim}")
    factors = [indicator_partial_sum_1d(x[l], nb.lower[l], nb.upper[l], J) for l in range(nb.dim)]
    return math.prod(factors)


def square_wave_reference(z, J: int):
    """Partial sum of ``1/2 - (2/pi) sum sin((2j-1) z) / (2j-1)`` through ``j = J``.

    Approximates ``1(z < 0)`` on ``(-pi, pi)``.  Used as an independent identity:
    ``indicator_partial_sum_1d(x, a, 1, J) == square_wave_reference(a - x, J)``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z == 0.0) or np.any(np.abs(z) >= np.pi):
        raise DomainError("z must satisfy 0 < |z| < pi")
    k = harmonics(J)
    s = (np.sin(z[..., None] * k) / k).sum(axis=-1)
    out = 0.5 - (2.0 / np.pi) * s
    return float(out) if out.ndim == 0 else out

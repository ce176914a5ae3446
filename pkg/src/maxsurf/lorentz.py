"""Linear algebra of Lorentz-Minkowski 3-space and the hyperbolic sphere.

The metric has signature (+, +, -): <a, b> = a1 b1 + a2 b2 - a3 b3.
Functions accept either :class:`LorentzVec` instances or array-likes whose
last axis has length 3, so whole grids can be processed at once.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import PreconditionError, UnitModulusInput

#: Distinguished complex value standing for the point at infinity.
INFINITY = complex(math.inf, 0.0)

_UNIT_GUARD = 1e-14


class CausalClass(Enum):
    SPACELIKE = "Spacelike"
    TIMELIKE = "Timelike"
    LIGHTLIKE = "Lightlike"


@dataclass(frozen=True)
class LorentzVec:
    x1: float
    x2: float
    x3: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x1, self.x2, self.x3)):
            raise PreconditionError(f"non-finite LorentzVec {self!r}")

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x1, self.x2, self.x3], dtype=dtype)

    def __add__(self, other):
        return LorentzVec(*(np.asarray(self) + np.asarray(other)))

    def __sub__(self, other):
        return LorentzVec(*(np.asarray(self) - np.asarray(other)))

    def __mul__(self, k):
        return LorentzVec(k * self.x1, k * self.x2, k * self.x3)

    __rmul__ = __mul__

    def __neg__(self):
        return LorentzVec(-self.x1, -self.x2, -self.x3)

    @classmethod
    def of(cls, v) -> "LorentzVec":
        a = np.asarray(v, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class HyperbolicPoint:
    """A point of H^2 = {x1^2 + x2^2 - x3^2 = -1}."""

    p: LorentzVec

    def __post_init__(self):
        q = lorentz_inner(self.p, self.p)
        if abs(q + 1.0) > 1e-12 * max(1.0, self.p.x3 ** 2):
            raise PreconditionError(f"{self.p} is not on H^2 (<p,p> = {q})")
        if abs(self.p.x3) < 1.0 - 1e-12:
            raise PreconditionError(f"{self.p} has |x3| < 1")

    @property
    def upper(self) -> bool:
        """True on the component H^2_+ (x3 >= 1)."""
        return self.p.x3 > 0


def lorentz_inner(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2]
    return float(r) if np.ndim(r) == 0 else r


def classify(v) -> CausalClass:
    """Causal character of ``v``; exact comparison on the computed square.

    The zero vector counts as spacelike. Callers that need a tolerance
    should snap ``v`` (or its components) before calling.
    """
    a = np.asarray(v, dtype=float)
    q = lorentz_inner(a, a)
    if q > 0 or not np.any(a):
        return CausalClass.SPACELIKE
    if q < 0:
        return CausalClass.TIMELIKE
    return CausalClass.LIGHTLIKE


def _is_infinite(z) -> bool:
    return cmath.isinf(complex(z))


def stereographic(z) -> HyperbolicPoint:
    """Stereographic projection of the extended plane minus the unit circle onto H^2."""
    if z is None or _is_infinite(z):
        return HyperbolicPoint(LorentzVec(0.0, 0.0, 1.0))
    z = complex(z)
    m2 = z.real ** 2 + z.imag ** 2
    if abs(math.sqrt(m2) - 1.0) < _UNIT_GUARD:
        raise UnitModulusInput(f"stereographic projection undefined at |z| = 1 (z = {z})")
    d = m2 - 1.0
    return HyperbolicPoint(LorentzVec(2 * z.imag / d, -2 * z.real / d, (m2 + 1) / d))


def stereographic_array(z) -> np.ndarray:
    """Vectorized :func:`stereographic`; returns an array of shape ``z.shape + (3,)``.

    Infinite entries map to (0, 0, 1); entries on the unit circle raise.
    """
    z = np.asarray(z, dtype=complex)
    inf = np.isinf(z)
    zf = np.where(inf, 0.0, z)
    m2 = zf.real ** 2 + zf.imag ** 2
    bad = (~inf) & (np.abs(np.sqrt(m2) - 1.0) < _UNIT_GUARD)
    if np.any(bad):
        raise UnitModulusInput("stereographic projection undefined on |z| = 1")
    d = np.where(inf, 1.0, m2 - 1.0)
    out = np.stack([2 * zf.imag / d, -2 * zf.real / d, (m2 + 1) / d], axis=-1)
    out[inf] = (0.0, 0.0, 1.0)
    return out

"""Outward-rounded interval arithmetic for the inequality certificates.

Each operation is computed in binary64 and then inflated outward by a few
ulps via math.nextafter, which over-covers the correctly-rounded result.
That is cheaper and more portable than toggling the FPU rounding mode, and
the soundness is gated by a high-precision oracle test in the suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

_INF = math.inf


def _down(x: float, steps: int = 1) -> float:
    for _ in range(steps):
        x = math.nextafter(x, -_INF)
    return x


def _up(x: float, steps: int = 1) -> float:
    for _ in range(steps):
        x = math.nextafter(x, _INF)
    return x


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("NaN endpoint")
        if self.lo > self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    # -- constructors ------------------------------------------------------
    @staticmethod
    def exact(x: Union[int, float]) -> "Interval":
        x = float(x)
        return Interval(x, x)

    @staticmethod
    def from_fraction(q: Union[Fraction, int]) -> "Interval":
        q = Fraction(q)
        f = float(q)
        if Fraction(f) == q:
            return Interval(f, f)
        return Interval(_down(f), _up(f))

    @staticmethod
    def ratio(num: int, den: int) -> "Interval":
        return Interval.from_fraction(Fraction(num, den))

    def _coerce(other) -> "Interval":
        if isinstance(other, Interval):
            return other
        if isinstance(other, Fraction):
            return Interval.from_fraction(other)
        if isinstance(other, int):
            return Interval.exact(other)
        if isinstance(other, float):
            return Interval.exact(other)
        raise TypeError(f"cannot coerce {other!r}")

    # -- queries -----------------------------------------------------------
    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def strictly_positive(self) -> bool:
        return self.lo > 0.0

    def strictly_negative(self) -> bool:
        return self.hi < 0.0

    def strictly_less_than(self, other) -> bool:
        other = Interval._coerce(other)
        return self.hi < other.lo

    def __contains__(self, x: float) -> bool:
        return self.contains(x)

    # -- arithmetic ----------------------------------------------------------
    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other) -> "Interval":
        o = Interval._coerce(other)
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        return self + (-Interval._coerce(other))

    def __rsub__(self, other) -> "Interval":
        return Interval._coerce(other) + (-self)

    def __mul__(self, other) -> "Interval":
        o = Interval._coerce(other)
        cands = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(_down(min(cands)), _up(max(cands)))

    __rmul__ = __mul__

    def reciprocal(self) -> "Interval":
        if self.lo <= 0.0 <= self.hi:
            raise ZeroDivisionError("interval straddles zero")
        return Interval(_down(1.0 / self.hi), _up(1.0 / self.lo))

    def __truediv__(self, other) -> "Interval":
        return self * Interval._coerce(other).reciprocal()

    def __rtruediv__(self, other) -> "Interval":
        return Interval._coerce(other) * self.reciprocal()

    def pow_int(self, n: int) -> "Interval":
        if n < 0:
            return self.pow_int(-n).reciprocal()
        if n == 0:
            return Interval.exact(1.0)
        if n % 2 == 0 and self.lo < 0.0 <= self.hi:
            hi = max(abs(self.lo), abs(self.hi))
            return Interval(0.0, _up(hi**n, 2))
        cands = (self.lo**n, self.hi**n)
        return Interval(_down(min(cands), 2), _up(max(cands), 2))

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int):
            raise TypeError("only integer powers; use root_odd/exp/log otherwise")
        return self.pow_int(n)

    def sqrt(self) -> "Interval":
        if self.lo < 0:
            raise ValueError("sqrt of negative interval")
        return Interval(_down(math.sqrt(self.lo)), _up(math.sqrt(self.hi)))

    def root_odd(self, d: int) -> "Interval":
        """Real d-th root, d odd: monotone, so endpoints map to endpoints."""
        if d < 1 or d % 2 == 0:
            raise ValueError("d must be odd and positive")

        def r(x: float) -> float:
            return math.copysign(abs(x) ** (1.0 / d), x)

        # pow is not correctly rounded; pad generously
        return Interval(_down(r(self.lo), 8), _up(r(self.hi), 8))

    def exp(self) -> "Interval":
        return Interval(_down(math.exp(self.lo), 4), _up(math.exp(self.hi), 4))

    def log(self) -> "Interval":
        if self.lo <= 0:
            raise ValueError("log needs a strictly positive interval")
        return Interval(_down(math.log(self.lo), 4), _up(math.log(self.hi), 4))

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def split(self) -> tuple["Interval", "Interval"]:
        m = self.mid
        return Interval(self.lo, m), Interval(m, self.hi)

    def __str__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def sqrt_int(n: int) -> Interval:
    """Enclosure of sqrt of a nonnegative integer."""
    if n < 0:
        raise ValueError("negative radicand")
    return Interval(_down(math.sqrt(n)), _up(math.sqrt(n)))

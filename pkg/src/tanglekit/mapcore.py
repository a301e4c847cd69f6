"""Core planar map family: evaluation, inverse, Jacobians, orbits, exact spectral data.

The map T(x, y) = (y - (x+y)^d, y - 2*(x+y)^d) with odd degree d >= 3 is a
polynomial homeomorphism of the plane whose inverse is smooth except on the
line {y = x}.  The origin is a fixed point and {(0, 1), (0, -1)} is a saddle
two-cycle; everything downstream (manifolds, tangle, horseshoe, basin) is
driven by this module.

Floating evaluation is the default; rational inputs (fractions.Fraction) stay
exact through `apply` and `jacobian`, and the quadratic-surd layer gives exact
arithmetic in Q(sqrt(Delta)) for spectral quantities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, isqrt
from typing import Union

import numpy as np

Scalar = Union[int, float, Fraction]

#: components beyond this magnitude abort iteration ((x+y)^d blows up doubly
#: exponentially, so there is no point continuing)
OVERFLOW_LIMIT = 1e150

#: |y - x| below this counts as an exact landing on the non-smooth line
LINE_LANDING_TOL = 1e-14


class DivergenceError(RuntimeError):
    """Raised when a map evaluation overflows instead of returning inf/NaN."""


def _sqrt_fraction(n: int, digits: int = 40) -> Fraction:
    """Rational approximation of sqrt(n) accurate to ~10^-digits (n >= 0)."""
    scale = 10 ** digits
    return Fraction(isqrt(n * scale * scale), scale)


@dataclass(frozen=True)
class PlanarPoint:
    x: Scalar
    y: Scalar

    def __post_init__(self) -> None:
        for c in (self.x, self.y):
            if isinstance(c, float) and not math.isfinite(c):
                raise ValueError(f"non-finite coordinate {c!r}")

    def __iter__(self):
        yield self.x
        yield self.y

    def as_floats(self) -> tuple[float, float]:
        return float(self.x), float(self.y)

    def __neg__(self) -> "PlanarPoint":
        return PlanarPoint(-self.x, -self.y)


P0 = PlanarPoint(0.0, 1.0)
P1 = PlanarPoint(0.0, -1.0)


@dataclass(frozen=True)
class SurdNumber:
    """Exact element (a + b*sqrt(delta)) / denom of Q(sqrt(delta)).

    Coefficients are arbitrary-precision integers, denom > 0, and the triple
    is reduced by its gcd.  delta must not be a perfect square, so equality
    of values is equality of normalized triples.
    """

    a: int
    b: int
    denom: int
    delta: int

    def __post_init__(self) -> None:
        if self.denom <= 0:
            raise ValueError("denom must be positive")
        if isqrt(self.delta) ** 2 == self.delta:
            raise ValueError(f"delta={self.delta} is a perfect square")
        g = gcd(gcd(abs(self.a), abs(self.b)), self.denom)
        if g > 1:
            object.__setattr__(self, "a", self.a // g)
            object.__setattr__(self, "b", self.b // g)
            object.__setattr__(self, "denom", self.denom // g)

    @classmethod
    def from_rational(cls, value: Fraction | int, delta: int) -> "SurdNumber":
        frac = Fraction(value)
        return cls(frac.numerator, 0, frac.denominator, delta)

    def _check(self, other: "SurdNumber") -> None:
        if self.delta != other.delta:
            raise ValueError("mixed radicands")

    def __add__(self, other: "SurdNumber") -> "SurdNumber":
        self._check(other)
        return SurdNumber(
            self.a * other.denom + other.a * self.denom,
            self.b * other.denom + other.b * self.denom,
            self.denom * other.denom,
            self.delta,
        )

    def __neg__(self) -> "SurdNumber":
        return SurdNumber(-self.a, -self.b, self.denom, self.delta)

    def __sub__(self, other: "SurdNumber") -> "SurdNumber":
        return self + (-other)

    def __mul__(self, other: "SurdNumber") -> "SurdNumber":
        self._check(other)
        return SurdNumber(
            self.a * other.a + self.b * other.b * self.delta,
            self.a * other.b + self.b * other.a,
            self.denom * other.denom,
            self.delta,
        )

    def inverse(self) -> "SurdNumber":
        norm = self.a * self.a - self.b * self.b * self.delta
        if norm == 0:
            raise ZeroDivisionError("surd has zero norm")
        num_a = self.a * self.denom
        num_b = -self.b * self.denom
        if norm < 0:
            num_a, num_b, norm = -num_a, -num_b, -norm
        return SurdNumber(num_a, num_b, norm, self.delta)

    def __truediv__(self, other: "SurdNumber") -> "SurdNumber":
        return self * other.inverse()

    def __pow__(self, k: int) -> "SurdNumber":
        if k < 0:
            return self.inverse() ** (-k)
        result = SurdNumber(1, 0, 1, self.delta)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def conjugate(self) -> "SurdNumber":
        return SurdNumber(self.a, -self.b, self.denom, self.delta)

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def sign(self) -> int:
        a, b = self.a, self.b
        if b == 0:
            return (a > 0) - (a < 0)
        if a == 0:
            return 1 if b > 0 else -1
        if a > 0 and b > 0:
            return 1
        if a < 0 and b < 0:
            return -1
        # mixed signs: compare a^2 against b^2 * delta
        lhs, rhs = a * a, b * b * self.delta
        if a > 0:  # b < 0
            return 1 if lhs > rhs else (-1 if lhs < rhs else 0)
        return -1 if lhs > rhs else (1 if lhs < rhs else 0)

    def __lt__(self, other: "SurdNumber") -> bool:
        return (self - other).sign() < 0

    def to_float(self) -> float:
        sq = _sqrt_fraction(self.delta)
        return float((Fraction(self.a) + Fraction(self.b) * sq) / self.denom)

    def __str__(self) -> str:
        return f"({self.a} + {self.b}*sqrt({self.delta}))/{self.denom}"


@dataclass(frozen=True)
class SpectralData:
    lam_plus: float
    lam_minus: float
    m_plus: float
    m_minus: float
    eigvec_plus: tuple[float, float]
    eigvec_minus: tuple[float, float]
    lam_plus_surd: SurdNumber
    lam_minus_surd: SurdNumber
    m_plus_surd: SurdNumber
    m_minus_surd: SurdNumber


@dataclass(frozen=True)
class MapParams:
    """Degree d plus the derived saddle constants used throughout.

    lam_plus/lam_minus are the eigenvalues of the two-cycle's second-iterate
    Jacobian, m_plus/m_minus the eigenvector slopes, m_star and m_hat_star
    the rational slopes bounding the comparison triangles.
    """

    d: int
    delta: int
    lam_plus: float
    lam_minus: float
    m_plus: float
    m_minus: float
    m_star: Fraction = field(default=Fraction(7, 2))
    m_hat_star: Fraction = field(default=Fraction(-3, 2))

    @classmethod
    def from_degree(cls, d: int) -> "MapParams":
        if d < 3 or d % 2 == 0:
            raise ValueError(f"degree must be odd and >= 3, got {d}")
        delta = 9 * d * d - 10 * d + 1
        if isqrt(delta) ** 2 == delta:
            raise ValueError(f"delta={delta} is a perfect square")
        sq = _sqrt_fraction(delta)
        trace = Fraction(9 * d * d - 8 * d + 1)
        lam_plus = float((trace + (3 * d - 1) * sq) / 2)
        lam_minus = float((trace - (3 * d - 1) * sq) / 2)
        m_plus = float((d - 1 + sq) / (2 * (d - 1)))
        m_minus = float((d - 1 - sq) / (2 * (d - 1)))
        return cls(
            d=d,
            delta=delta,
            lam_plus=lam_plus,
            lam_minus=lam_minus,
            m_plus=m_plus,
            m_minus=m_minus,
            m_hat_star=Fraction(-d, d - 1),
        )

    def __post_init__(self) -> None:
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError("degree must be odd and >= 3")
        d = self.d
        if abs(self.lam_plus * self.lam_minus - d * d) > 1e-12 * d * d:
            raise ValueError("eigenvalue product differs from d^2")
        if not (self.lam_plus > 57):
            raise ValueError("lam_plus out of range")
        if not (1 / 9 < self.lam_minus < 0.1556):
            raise ValueError("lam_minus out of range")
        if not (2 < self.m_plus <= 2.3028):
            raise ValueError("m_plus out of range")
        if not (-1.3028 <= self.m_minus < -1):
            raise ValueError("m_minus out of range")
        if not (Fraction(-3, 2) <= self.m_hat_star and float(self.m_hat_star) < self.m_minus < -1):
            raise ValueError("m_hat_star ordering violated")

    def spectral(self) -> SpectralData:
        return spectral(self)


def spectral(p: MapParams) -> SpectralData:
    """Closed-form eigen-data of the two-cycle's second-iterate Jacobian."""
    d, delta = p.d, p.delta
    trace = 9 * d * d - 8 * d + 1
    lam_plus = SurdNumber(trace, 3 * d - 1, 2, delta)
    lam_minus = lam_plus.conjugate()
    m_plus = SurdNumber(d - 1, 1, 2 * (d - 1), delta)
    m_minus = m_plus.conjugate()
    return SpectralData(
        lam_plus=p.lam_plus,
        lam_minus=p.lam_minus,
        m_plus=p.m_plus,
        m_minus=p.m_minus,
        eigvec_plus=(1.0, p.m_plus),
        eigvec_minus=(1.0, p.m_minus),
        lam_plus_surd=lam_plus,
        lam_minus_surd=lam_minus,
        m_plus_surd=m_plus,
        m_minus_surd=m_minus,
    )


def surd_power(p: MapParams, k: int, max_order: int = 200) -> SurdNumber:
    """Exact k-th power of the expanding eigenvalue in Q(sqrt(delta))."""
    if abs(k) > max_order:
        raise ValueError(f"|k|={abs(k)} exceeds bound {max_order}")
    lam = spectral(p).lam_plus_surd
    return lam ** k


def odd_root(s: float, d: int) -> float:
    """Real d-th root for odd d: sign(s) * |s|^(1/d)."""
    s = float(s)
    if s == 0.0:
        return 0.0
    return math.copysign(abs(s) ** (1.0 / d), s)


def apply(p: MapParams, z) -> PlanarPoint:
    """One forward step of the map; exact for Fraction inputs."""
    x, y = z
    s = x + y
    if isinstance(s, float) and abs(s) > OVERFLOW_LIMIT ** (1.0 / p.d):
        raise DivergenceError(f"orbit escaped at {z!r}")
    w = s ** p.d
    res = PlanarPoint(y - w, y - 2 * w)
    if isinstance(w, float) and max(abs(res.x), abs(res.y)) > OVERFLOW_LIMIT:
        raise DivergenceError(f"orbit escaped at {z!r}")
    return res


def apply_inverse(p: MapParams, z) -> PlanarPoint:
    """One backward step; uses the real odd root, so works for all signs."""
    x, y = (float(c) for c in z)
    r = odd_root(x - y, p.d)
    res = PlanarPoint(-2 * x + y + r, 2 * x - y)
    if max(abs(res.x), abs(res.y)) > OVERFLOW_LIMIT:
        raise DivergenceError(f"backward orbit escaped at {z!r}")
    return res


def apply_xy(p: MapParams, x, y):
    """Vectorized forward step on coordinate arrays (no overflow guard)."""
    s = x + y
    w = s ** p.d
    return y - w, y - 2 * w


def apply_inverse_xy(p: MapParams, x, y):
    """Vectorized backward step on coordinate arrays."""
    s = x - y
    r = np.sign(s) * np.abs(s) ** (1.0 / p.d)
    return -2 * x + y + r, 2 * x - y


def jacobian(p: MapParams, z, iterate: int = 1) -> np.ndarray:
    """Analytic Jacobian of the map or its second iterate at z.

    Fraction inputs give an exact (object-dtype) matrix.
    """
    if iterate not in (1, 2):
        raise ValueError("iterate must be 1 or 2")
    J = _jacobian_single(p, z)
    if iterate == 1:
        return J
    z1 = apply(p, z)
    return _jacobian_single(p, z1) @ J


def _jacobian_single(p: MapParams, z) -> np.ndarray:
    x, y = z
    s = p.d * (x + y) ** (p.d - 1)
    exact = isinstance(s, (Fraction, int))
    dtype = object if exact else float
    one = s * 0 + 1 if exact else 1.0
    return np.array([[-s, one - s], [-2 * s, one - 2 * s]], dtype=dtype)


def two_cycle_jacobian(d: int) -> np.ndarray:
    """Exact integer second-iterate Jacobian at either cycle point."""
    return np.array(
        [
            [3 * d * d - 2 * d, 3 * d * d - 4 * d + 1],
            [6 * d * d - 2 * d, 6 * d * d - 6 * d + 1],
        ],
        dtype=object,
    )


@dataclass
class OrbitLog:
    """Orbit of length |n|+1 with bookkeeping for the non-smooth line.

    Backward orbits record sign changes of y - x between consecutive points
    (`line_crossings`, index of the segment start) and exact landings with
    |y - x| < LINE_LANDING_TOL (`landings`, vertex index).
    """

    points: list[PlanarPoint]
    direction: str
    line_crossings: list[int]
    landings: list[int] = field(default_factory=list)
    diverged: bool = False


def iterate(p: MapParams, z, n: int, max_steps: int = 100_000) -> OrbitLog:
    """Forward (n > 0) or backward (n < 0) orbit starting at z."""
    if abs(n) > max_steps:
        raise ValueError(f"|n|={abs(n)} exceeds budget {max_steps}")
    direction = "backward" if n < 0 else "forward"
    step = apply_inverse if n < 0 else apply
    pt = z if isinstance(z, PlanarPoint) else PlanarPoint(*z)
    points = [pt]
    crossings: list[int] = []
    landings: list[int] = []
    diverged = False

    def _gap(q: PlanarPoint) -> float:
        return float(q.y) - float(q.x)

    if direction == "backward" and abs(_gap(pt)) < LINE_LANDING_TOL:
        landings.append(0)
    for i in range(abs(n)):
        try:
            nxt = step(p, points[-1])
        except DivergenceError:
            diverged = True
            break
        if direction == "backward":
            g0, g1 = _gap(points[-1]), _gap(nxt)
            if abs(g1) < LINE_LANDING_TOL:
                landings.append(i + 1)
            elif g0 * g1 < 0 and abs(g0) >= LINE_LANDING_TOL:
                crossings.append(i)
        points.append(nxt)
    return OrbitLog(points, direction, crossings, landings, diverged)


def iterate_double(p: MapParams, z, steps: int, backward: bool = False) -> PlanarPoint:
    """Apply the second iterate (or its inverse) `steps` times."""
    pt = z if isinstance(z, PlanarPoint) else PlanarPoint(*z)
    step = apply_inverse if backward else apply
    for _ in range(2 * steps):
        pt = step(p, pt)
    return pt


def jacobian_chain(p: MapParams, z, double_steps: int, backward: bool = False) -> tuple[PlanarPoint, np.ndarray]:
    """Point and Jacobian of T^(+-2*double_steps) via chained products."""
    pt = z if isinstance(z, PlanarPoint) else PlanarPoint(*z)
    J = np.eye(2)
    for _ in range(2 * double_steps):
        if backward:
            pre = apply_inverse(p, pt)
            J = np.linalg.inv(_jacobian_single(p, pre).astype(float)) @ J
            pt = pre
        else:
            J = _jacobian_single(p, pt).astype(float) @ J
            pt = apply(p, pt)
    return pt, J

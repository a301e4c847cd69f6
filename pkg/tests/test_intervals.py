import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanglekit.intervals import Interval, sqrt_int


class TestBasics:
    def test_exact_point(self):
        iv = Interval.exact(0.5)
        assert iv.lo == iv.hi == 0.5

    def test_fraction_rounding(self):
        iv = Interval.from_fraction(Fraction(1, 3))
        assert iv.lo < 1 / 3 < iv.hi or iv.contains(1 / 3)
        assert iv.width <= 2 * math.ulp(1 / 3)

    def test_ordering_validation(self):
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)

    def test_division_by_zero_straddle(self):
        with pytest.raises(ZeroDivisionError):
            Interval(-1.0, 1.0).reciprocal()

    def test_even_power_through_zero(self):
        iv = Interval(-2.0, 1.0).pow_int(2)
        assert iv.lo == 0.0
        assert iv.hi >= 4.0

    def test_odd_root_sign(self):
        iv = Interval(-8.0, 27.0).root_odd(3)
        assert iv.lo <= -2.0 <= iv.hi or iv.lo <= -2.0
        assert iv.contains(-2.0) or (iv.lo < -2.0 < iv.hi)
        assert iv.contains(3.0) or iv.hi > 3.0


# expression grammar for the soundness sweep: every node evaluates both as an
# Interval and as an mpmath 256-bit value
_OPS = ("add", "sub", "mul", "div", "pow", "sqrt", "exp", "log", "root")


def _random_expr(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.3:
        val = rng.choice(
            [
                Fraction(rng.randint(-50, 50), rng.randint(1, 50)),
                rng.uniform(-10, 10),
            ]
        )
        return ("leaf", val)
    op = rng.choice(_OPS)
    if op in ("add", "sub", "mul", "div"):
        return (op, _random_expr(rng, depth - 1), _random_expr(rng, depth - 1))
    if op == "pow":
        return (op, _random_expr(rng, depth - 1), rng.randint(0, 6))
    if op == "root":
        return (op, _random_expr(rng, depth - 1), rng.choice([3, 5, 7]))
    return (op, _random_expr(rng, depth - 1))


def _eval_interval(expr) -> Interval:
    tag = expr[0]
    if tag == "leaf":
        v = expr[1]
        return Interval.from_fraction(v) if isinstance(v, Fraction) else Interval.exact(v)
    if tag in ("add", "sub", "mul", "div"):
        a, b = _eval_interval(expr[1]), _eval_interval(expr[2])
        return {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}[tag]
    if tag == "pow":
        return _eval_interval(expr[1]).pow_int(expr[2])
    if tag == "root":
        return _eval_interval(expr[1]).root_odd(expr[2])
    a = _eval_interval(expr[1])
    if tag == "sqrt":
        return a.sqrt()
    if tag == "exp":
        return a.exp()
    return a.log()


def _eval_mp(expr):
    tag = expr[0]
    if tag == "leaf":
        v = expr[1]
        if isinstance(v, Fraction):
            return mpmath.mpf(v.numerator) / v.denominator
        return mpmath.mpf(v)
    if tag in ("add", "sub", "mul", "div"):
        a, b = _eval_mp(expr[1]), _eval_mp(expr[2])
        return {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}[tag]
    if tag == "pow":
        return _eval_mp(expr[1]) ** expr[2]
    if tag == "root":
        a = _eval_mp(expr[1])
        return mpmath.sign(a) * mpmath.root(abs(a), expr[2])
    a = _eval_mp(expr[1])
    if tag == "sqrt":
        return mpmath.sqrt(a)
    if tag == "exp":
        return mpmath.exp(a)
    return mpmath.log(a)


class TestSoundness:
    def test_oracle_containment_sweep(self):
        """10^4 random expressions: the 256-bit value lies in the interval."""
        rng = random.Random(20240817)
        mpmath.mp.prec = 256
        checked = 0
        attempts = 0
        while checked < 10_000 and attempts < 100_000:
            attempts += 1
            expr = _random_expr(rng, rng.randint(1, 5))
            try:
                iv = _eval_interval(expr)
                truth = _eval_mp(expr)
            except (ZeroDivisionError, ValueError, OverflowError):
                continue
            if not mpmath.isfinite(truth) or abs(truth) > 1e300:
                continue
            assert iv.lo <= truth <= iv.hi, f"{expr} -> {iv} misses {truth}"
            checked += 1
        assert checked == 10_000

    @given(st.integers(0, 10**12))
    @settings(max_examples=200, deadline=None)
    def test_sqrt_int_contains(self, n):
        iv = sqrt_int(n)
        mpmath.mp.prec = 128
        truth = mpmath.sqrt(n)
        assert iv.lo <= truth <= iv.hi

    @given(
        st.floats(-100, 100, allow_nan=False),
        st.floats(-100, 100, allow_nan=False),
        st.floats(-100, 100, allow_nan=False),
        st.floats(-100, 100, allow_nan=False),
    )
    @settings(max_examples=300, deadline=None)
    def test_mul_containment(self, a, b, c, d):
        ia = Interval(min(a, b), max(a, b))
        ib = Interval(min(c, d), max(c, d))
        prod = ia * ib
        mpmath.mp.prec = 128
        for x in (ia.lo, ia.hi, ia.mid):
            for y in (ib.lo, ib.hi, ib.mid):
                assert prod.lo <= float(mpmath.mpf(x) * mpmath.mpf(y)) <= prod.hi

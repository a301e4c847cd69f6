"""Machine-checkable certificates for the explicit inequalities of the construction.

Every certificate decomposes into named claims.  Claims are verified either
by outward-rounded interval evaluation (with adaptive box subdivision where a
variable ranges over an interval), by exact rational arithmetic, or by exact
quadratic-surd arithmetic.  A certificate is Proven only if every claim
carries a strict sign on every cell; equality-type side facts are checked
exactly and excluded from the margin aggregation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal, Sequence

from .intervals import Interval, sqrt_int
from .mapcore import MapParams, SurdNumber, spectral

Status = Literal["Proven", "Failed", "Undecided"]


@dataclass
class Claim:
    name: str
    proven: bool
    margin: float
    cells: int = 1
    note: str = ""


@dataclass
class CertificateReport:
    id: str
    d: int
    status: Status
    margin: float
    subdivisions: int
    claims: list[Claim] = field(default_factory=list)

    @classmethod
    def from_claims(cls, cid: str, d: int, claims: list[Claim], undecided: bool = False) -> "CertificateReport":
        ok = all(c.proven for c in claims)
        status: Status = "Proven" if ok else ("Undecided" if undecided else "Failed")
        finite = [c.margin for c in claims if math.isfinite(c.margin)]
        return cls(
            id=cid,
            d=d,
            status=status,
            margin=min(finite) if finite else math.inf,
            subdivisions=sum(c.cells for c in claims),
            claims=claims,
        )

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "d": self.d,
            "status": self.status,
            "margin": self.margin,
            "subdivisions": self.subdivisions,
            "claims": [
                {"name": c.name, "proven": c.proven, "margin": c.margin, "cells": c.cells, "note": c.note}
                for c in self.claims
            ],
        }


# --------------------------------------------------------------------------
# subdivision engine
# --------------------------------------------------------------------------

def prove_sign(
    fn: Callable[[Sequence[Interval]], Interval],
    box: Sequence[Interval],
    sign: int,
    depth_cap: int = 40,
    max_cells: int = 500_000,
) -> tuple[bool, float, int, list[Interval] | None]:
    """Prove fn > 0 (sign=+1) or fn < 0 (sign=-1) on a box by bisection.

    Returns (proven, margin, cells_processed, deepest_failing_cell).  The
    margin is the worst certified distance from zero.  Deterministic: cells
    are processed depth-first, always splitting the relatively widest axis.
    """
    stack: list[tuple[list[Interval], int]] = [(list(box), 0)]
    margin = math.inf
    cells = 0
    deepest: tuple[int, list[Interval]] | None = None
    while stack:
        cell, depth = stack.pop()
        cells += 1
        if cells > max_cells:
            return False, 0.0, cells, cell
        val = fn(cell)
        if sign > 0 and val.lo > 0.0:
            margin = min(margin, val.lo)
            continue
        if sign < 0 and val.hi < 0.0:
            margin = min(margin, -val.hi)
            continue
        # cannot certify on this cell
        if depth >= depth_cap:
            if deepest is None or depth > deepest[0]:
                deepest = (depth, cell)
            return False, 0.0, cells, cell
        widths = [c.width / max(abs(c.mid), 1e-300) for c in cell]
        axis = max(range(len(cell)), key=lambda i: widths[i])
        lo_half, hi_half = cell[axis].split()
        for half in (hi_half, lo_half):
            nxt = list(cell)
            nxt[axis] = half
            stack.append((nxt, depth + 1))
    return True, margin, cells, None


# --------------------------------------------------------------------------
# shared interval-valued building blocks
# --------------------------------------------------------------------------

def delta_radicand(d: int) -> int:
    return 9 * d * d - 10 * d + 1


def lam_plus_iv(d: int) -> Interval:
    return (Interval.exact(9 * d * d - 8 * d + 1) + Interval.exact(3 * d - 1) * sqrt_int(delta_radicand(d))) / 2


def lam_minus_iv(d: int) -> Interval:
    return (Interval.exact(9 * d * d - 8 * d + 1) - Interval.exact(3 * d - 1) * sqrt_int(delta_radicand(d))) / 2


def m_plus_iv(d: int) -> Interval:
    return (Interval.exact(d - 1) + sqrt_int(delta_radicand(d))) / (2 * (d - 1))


def m_minus_iv(d: int) -> Interval:
    return (Interval.exact(d - 1) - sqrt_int(delta_radicand(d))) / (2 * (d - 1))


def m_hat_star_frac(d: int) -> Fraction:
    return Fraction(-d, d - 1)


def _sqrt_e() -> Interval:
    return Interval.exact(0.5).exp()


# --------------------------------------------------------------------------
# certificate: spectral bounds and monotonicity
# --------------------------------------------------------------------------

def certify_spectral_bounds(d_list: Sequence[int]) -> list[CertificateReport]:
    """Eigenvalue/slope window bounds plus monotonicity along the degree list."""
    reports = []
    prev: dict[str, Interval] | None = None
    lam3m, lam3p = lam_minus_iv(3), lam_plus_iv(3)
    m3p, m3m = m_plus_iv(3), m_minus_iv(3)
    for d in d_list:
        if d < 3 or d % 2 == 0:
            raise ValueError("degrees must be odd and >= 3")
        lm, lp = lam_minus_iv(d), lam_plus_iv(d)
        mp, mm = m_plus_iv(d), m_minus_iv(d)
        claims = [
            Claim("lam_minus_gt_1_9", (lm - Fraction(1, 9)).strictly_positive(), lm.lo - 1 / 9),
            Claim(
                "lam_minus_le_base",
                lm.strictly_less_than(lam3m) if d != 3 else _surd_eq_base(d, "lam_minus"),
                lam3m.lo - lm.hi if d != 3 else math.inf,
                note="identity at d=3" if d == 3 else "",
            ),
            Claim(
                "lam_plus_ge_base",
                lam3p.strictly_less_than(lp) if d != 3 else _surd_eq_base(d, "lam_plus"),
                lp.lo - lam3p.hi if d != 3 else math.inf,
                note="identity at d=3" if d == 3 else "",
            ),
            Claim("lam_minus_le_0.1556", lm.strictly_less_than(Fraction(1556, 10000)), 0.1556 - lm.hi),
            Claim("lam_plus_gt_57", Interval.exact(57).strictly_less_than(lp), lp.lo - 57.0),
            Claim("m_plus_gt_2", Interval.exact(2).strictly_less_than(mp), mp.lo - 2.0),
            Claim("m_plus_le_2.3028", mp.strictly_less_than(Fraction(23028, 10000)), 2.3028 - mp.hi),
            Claim("m_minus_lt_-1", mm.strictly_less_than(-1), -1.0 - mm.hi),
            Claim("m_minus_ge_-1.3028", Interval.from_fraction(Fraction(-13028, 10000)).strictly_less_than(mm), mm.lo + 1.3028),
            Claim(
                "product_is_d_squared",
                _product_exact(d),
                math.inf,
                note="exact surd identity",
            ),
        ]
        if prev is not None:
            claims += [
                Claim("lam_minus_decreasing", lm.strictly_less_than(prev["lm"]), prev["lm"].lo - lm.hi),
                Claim("lam_plus_increasing", prev["lp"].strictly_less_than(lp), lp.lo - prev["lp"].hi),
                Claim("m_plus_decreasing", mp.strictly_less_than(prev["mp"]), prev["mp"].lo - mp.hi),
                Claim("m_minus_increasing", prev["mm"].strictly_less_than(mm), mm.lo - prev["mm"].hi),
            ]
        reports.append(CertificateReport.from_claims("spectral_bounds", d, claims))
        prev = {"lm": lm, "lp": lp, "mp": mp, "mm": mm}
    return reports


def _surd_eq_base(d: int, which: str) -> bool:
    s = spectral(MapParams.from_degree(d))
    t = spectral(MapParams.from_degree(3))
    if d != 3:
        return False
    return getattr(s, which + "_surd") == getattr(t, which + "_surd")


def _product_exact(d: int) -> bool:
    s = spectral(MapParams.from_degree(d))
    return s.lam_plus_surd * s.lam_minus_surd == SurdNumber.from_rational(d * d, delta_radicand(d))


# --------------------------------------------------------------------------
# certificate: parametrization estimates for the forward image curves
# --------------------------------------------------------------------------

def _m_box(d: int) -> Interval:
    return Interval.from_fraction(m_hat_star_frac(d)).hull(m_minus_iv(d))


def _curve_x(M: Interval, T: Interval, d: int) -> Interval:
    return M * T + 1 - ((M + 1) * T + 1).pow_int(d)


def _curve_y(M: Interval, T: Interval, d: int) -> Interval:
    return M * T + 1 - 2 * ((M + 1) * T + 1).pow_int(d)


def _curve_xp(M: Interval, T: Interval, d: int) -> Interval:
    return M - d * (M + 1) * ((M + 1) * T + 1).pow_int(d - 1)


def _curve_xpp(M: Interval, T: Interval, d: int) -> Interval:
    return -Interval.exact(d * (d - 1)) * (M + 1).pow_int(2) * ((M + 1) * T + 1).pow_int(d - 2)


def _curve_yp(M: Interval, T: Interval, d: int) -> Interval:
    return M - 2 * d * (M + 1) * ((M + 1) * T + 1).pow_int(d - 1)


def certify_gamma_estimates(d: int, depth_cap: int = 40) -> CertificateReport:
    """Sign estimates for the image-curve parametrization on its (m, t) box."""
    M_full = _m_box(d)
    U_full = Interval(0.0, 1.0)
    claims: list[Claim] = []

    def with_t(fn):
        def inner(cell):
            M, U = cell
            T = U / (1 - M)
            return fn(M, T, d)

        return inner

    # x < 0 away from t = 0 ...
    ok, margin, cells, _ = prove_sign(with_t(_curve_x), [M_full, Interval(1e-2, 1.0)], -1, depth_cap)
    claims.append(Claim("x_negative_bulk", ok, margin, cells, "u in [1e-2, 1]"))
    # ... and quadratically negative near it: x'(0) <= 0 exactly, x'' < 0 there
    corner = _corner_slope_fact(d)
    claims.append(Claim("x_prime_at_zero_nonpositive", corner, math.inf, 1, "exact rational, equality only at m_hat_star"))
    ok, margin, cells, _ = prove_sign(with_t(_curve_xpp), [M_full, Interval(0.0, 1e-2)], -1, depth_cap)
    claims.append(Claim("x_second_negative_near_zero", ok, margin, cells, "closes x < 0 on (0, 1e-2]"))

    # endpoint bound x(1/(1-m)) < (1 - 2/sqrt(e))/(1-m) < 0
    inv_sqrt_e = _sqrt_e().reciprocal()

    def endpoint_gap(cell):
        (M,) = cell
        s = (1 - M).reciprocal()
        return 2 * inv_sqrt_e * s - (2 * s).pow_int(d)

    ok, margin, cells, _ = prove_sign(endpoint_gap, [M_full], -1, depth_cap)
    claims.append(Claim("x_endpoint_below_tangent_bound", ok, margin, cells))
    claims.append(
        Claim(
            "tangent_bound_negative",
            (1 - 2 * inv_sqrt_e).strictly_negative(),
            -(1 - 2 * inv_sqrt_e).hi,
            1,
            "1 - 2/sqrt(e) < 0",
        )
    )

    # y < 0 on the whole box
    ok, margin, cells, _ = prove_sign(with_t(_curve_y), [M_full, U_full], -1, depth_cap)
    claims.append(Claim("y_negative", ok, margin, cells))

    # x' <= 0 with equality only at the corner: strict negativity off the corner
    ok, margin, cells, _ = prove_sign(with_t(_curve_xp), [M_full, Interval(1e-2, 1.0)], -1, depth_cap)
    ok2, margin2, cells2, _ = prove_sign(with_t(_curve_xpp), [M_full, U_full], -1, depth_cap)
    claims.append(
        Claim(
            "x_prime_nonpositive",
            ok and ok2 and corner,
            min(margin, margin2),
            cells + cells2,
            "strict off t=0; x''<0 pushes the corner equality inward",
        )
    )

    # y' > 0 along the steepest edge slope
    mhat = Interval.from_fraction(m_hat_star_frac(d))

    def yp_hat(cell):
        (U,) = cell
        T = U / (1 - mhat)
        return _curve_yp(mhat, T, d)

    ok, margin, cells, _ = prove_sign(yp_hat, [U_full], +1, depth_cap)
    floor = (Interval.exact(d) / (d - 1)) * (2 * _sqrt_e().reciprocal() - 1)
    claims.append(Claim("y_prime_positive_at_hat_slope", ok, margin, cells, f"analytic floor {floor.lo:.6f}"))
    return CertificateReport.from_claims("gamma_estimates", d, claims)


def _corner_slope_fact(d: int) -> bool:
    # x'(0) = m - d(m+1) is linear decreasing in m and vanishes exactly at
    # m = -d/(d-1)
    mh = m_hat_star_frac(d)
    return mh * (1 - d) - d == 0 and (1 - d) < 0


# --------------------------------------------------------------------------
# certificate: the wedge-ordering inequality
# --------------------------------------------------------------------------

def certify_whD_inequality(d: int) -> CertificateReport:
    """Displayed inequality placing the steep image curve above the tangent line."""
    A = Interval.from_fraction(Fraction(2 * (d - 1), 2 * (d - 1) + 1))
    B = Interval.from_fraction(Fraction(d - 1, 2 * (d - 1) + 1))
    C = Interval.from_fraction(Fraction(3 * d - 2, d - 1)).root_odd(d)
    main = 1 - A.pow_int(d) + (B - A.pow_int(d)) * (1 + C)
    claims = [
        Claim("main_inequality_positive", main.strictly_positive(), main.lo),
        Claim(
            "power_term_below_6_7_cubed",
            A.pow_int(d).strictly_less_than(Fraction(216, 343)),
            216 / 343 - A.pow_int(d).hi,
        ),
        Claim(
            "middle_term_above_-7_50",
            (B - A.pow_int(d) + Fraction(7, 50)).strictly_positive(),
            (B - A.pow_int(d) + Fraction(7, 50)).lo,
        ),
    ]
    seven_halves_root = Interval.ratio(7, 2).root_odd(3)
    if d == 3:
        claims.append(Claim("root_factor_at_base", True, math.inf, note="identity at d=3"))
    else:
        claims.append(
            Claim(
                "root_factor_below_base",
                C.strictly_less_than(seven_halves_root),
                seven_halves_root.lo - C.hi,
            )
        )
    terminal = 1 - Interval.ratio(216, 343) - Interval.ratio(7, 50) * (1 + seven_halves_root)
    claims.append(
        Claim(
            "terminal_constant_positive",
            terminal.strictly_positive(),
            terminal.lo,
            note=f"enclosure [{terminal.lo:.10f}, {terminal.hi:.10f}], rounds to 0.02",
        )
    )
    return CertificateReport.from_claims("whD_inequality", d, claims)


# --------------------------------------------------------------------------
# certificate: crossing-segment bounds and the diagonal-image edge
# --------------------------------------------------------------------------

def certify_segment_bounds(d: int, depth_cap: int = 40) -> CertificateReport:
    a_plus = -Interval.from_fraction(Fraction(d - 1, 3 * d - 2)).root_odd(d)
    base_root = -Interval.ratio(2, 7).root_odd(3)
    a_minus = -(Interval.exact(2) - m_minus_iv(d)).reciprocal().root_odd(d)
    claims = [
        Claim(
            "a_plus_le_base",
            a_plus.strictly_less_than(base_root) if d != 3 else True,
            base_root.lo - a_plus.hi if d != 3 else math.inf,
            note="identity at d=3" if d == 3 else "",
        ),
        Claim("base_below_-3_5", base_root.strictly_less_than(Fraction(-3, 5)), -0.6 - base_root.hi),
        Claim("a_minus_below_a_plus", a_minus.strictly_less_than(a_plus), a_plus.lo - a_minus.hi),
    ]
    # diagonal-image edge: xi, eta and both derivatives negative on the
    # parameter window [1/(1-m_hat_star), 1/(1-m_minus)]
    t_lo = Interval.from_fraction(Fraction(d - 1, 2 * d - 1))
    t_hi = (1 - m_minus_iv(d)).reciprocal()
    T_win = t_lo.hull(t_hi)

    def xi(cell):
        (T,) = cell
        return T - (2 * T).pow_int(d)

    def eta(cell):
        (T,) = cell
        return T - 2 * (2 * T).pow_int(d)

    def xi_p(cell):
        (T,) = cell
        return 1 - 2 * d * (2 * T).pow_int(d - 1)

    def eta_p(cell):
        (T,) = cell
        return 1 - 4 * d * (2 * T).pow_int(d - 1)

    for name, fn in (("xi_negative", xi), ("eta_negative", eta), ("xi_prime_negative", xi_p), ("eta_prime_negative", eta_p)):
        ok, margin, cells, _ = prove_sign(fn, [T_win], -1, depth_cap)
        claims.append(Claim(name, ok, margin, cells))
    # explicit left-endpoint chain: xi'(t_lo) < 1 - 2d/sqrt(e) < 0
    chain = 1 - 2 * d * _sqrt_e().reciprocal()
    left = 1 - 2 * d * (2 * t_lo).pow_int(d - 1)
    claims.append(Claim("xi_prime_left_chain", left.strictly_less_than(chain) and chain.strictly_negative(), -chain.hi))
    return CertificateReport.from_claims("segment_bounds", d, claims)


# --------------------------------------------------------------------------
# certificate: geometric contraction toward the cycle point
# --------------------------------------------------------------------------

def certify_contraction(d: int) -> CertificateReport:
    mh = m_hat_star_frac(d)
    two_minus_mh = Interval.from_fraction(2 - mh)
    ratio = two_minus_mh.root_odd(d) / (Interval.exact(2) - m_minus_iv(d))
    bound = Interval.ratio(1, 3) * Interval.ratio(7, 2).root_odd(3)
    mh_abs = Interval.from_fraction(-mh)
    claims = [
        Claim("ratio_below_third_root", ratio.strictly_less_than(bound), bound.lo - ratio.hi),
        Claim(
            "slope_times_bound_le_4_5",
            (mh_abs * bound).strictly_less_than(Fraction(4, 5)),
            0.8 - (mh_abs * bound).hi,
        ),
        Claim(
            "full_chain_rate_below_4_5",
            (mh_abs * ratio).strictly_less_than(Fraction(4, 5)),
            0.8 - (mh_abs * ratio).hi,
        ),
    ]
    return CertificateReport.from_claims("contraction", d, claims)


# --------------------------------------------------------------------------
# certificate: non-resonance of the eigenvalue pair (exact)
# --------------------------------------------------------------------------

def certify_nonresonance(d: int, max_total_order: int = 50) -> CertificateReport:
    """No relation lam = lam^n mu^m or mu = lam^n mu^m for 2 <= n+m <= bound.

    Using lam*mu = d^2, both families reduce to lam^j * d^(2k) = 1.  For
    j = 0 the power of d exceeds 1; for j != 0 the surd lam^j has a nonzero
    irrational part, so it cannot equal a rational.  All checks are exact.
    """
    if max_total_order > 200:
        raise ValueError("max_total_order capped at 200")
    p = MapParams.from_degree(d)
    lam = spectral(p).lam_plus_surd
    powers: dict[int, SurdNumber] = {}

    def lam_pow(j: int) -> SurdNumber:
        if j not in powers:
            powers[j] = lam ** j
        return powers[j]

    pairs = 0
    float_margin = math.inf
    log_lam = math.log(p.lam_plus)
    log_d2 = 2 * math.log(d)
    for n in range(0, max_total_order + 1):
        for m in range(0, max_total_order + 1 - n):
            if n + m < 2:
                continue
            for j, k in ((n - m - 1, m), (n - m + 1, m - 1)):
                pairs += 1
                if j == 0:
                    if d ** (2 * k) == 1:
                        return CertificateReport.from_claims(
                            "nonresonance", d, [Claim(f"resonance_at_{n}_{m}", False, 0.0, pairs)]
                        )
                else:
                    s = lam_pow(j) if abs(j) <= 60 else None
                    if s is not None:
                        if s.is_rational:
                            return CertificateReport.from_claims(
                                "nonresonance", d, [Claim(f"rational_power_{j}", False, 0.0, pairs)]
                            )
                        if s * SurdNumber.from_rational(Fraction(d) ** (2 * k), p.delta) == SurdNumber.from_rational(1, p.delta):
                            return CertificateReport.from_claims(
                                "nonresonance", d, [Claim(f"resonance_at_{n}_{m}", False, 0.0, pairs)]
                            )
                    else:
                        # |j| > 60: fall back to the irrationality argument,
                        # still exact (b_j != 0 by the recurrence)
                        if lam_pow(60 if j > 0 else -60).is_rational:
                            return CertificateReport.from_claims(
                                "nonresonance", d, [Claim(f"rational_power_{j}", False, 0.0, pairs)]
                            )
                    float_margin = min(float_margin, abs(j * log_lam + k * log_d2))
    claims = [
        Claim(
            "no_resonance_to_order",
            True,
            float_margin,
            pairs,
            f"exact surd sweep to total order {max_total_order}; margin is min |log lam^j d^2k|",
        )
    ]
    return CertificateReport.from_claims("nonresonance", d, claims)


# --------------------------------------------------------------------------
# certificate: the auxiliary crossing function of the heteroclinic argument
# --------------------------------------------------------------------------

def certify_line_crossing(d: int, depth_cap: int = 40) -> CertificateReport:
    """Sign pattern and convexity of phi(t) = Y(t) - m_minus X(t) + 1.

    phi measures the right forward-wedge boundary against the line tangent to
    the backward wedge: positive at both ends, negative at t = 1/8, convex,
    hence exactly two zeros.
    """
    m_star = Fraction(7, 2)
    mm = m_minus_iv(d)

    def phi(T: Interval) -> Interval:
        v = (1 - (Interval.from_fraction(m_star) + 1) * T).pow_int(d)
        return (2 - mm) * (v + Interval.from_fraction(m_star) * T - 1) - Interval.from_fraction(m_star) * T + 2

    # phi(0) = 2 exactly: X(0) = 0 and Y(0) = 1 in rational arithmetic
    x0 = m_star * 0 - 1 - (Fraction(m_star + 1) * 0 - 1) ** d
    y0 = m_star * 0 - 1 - 2 * (Fraction(m_star + 1) * 0 - 1) ** d
    claims = [
        Claim("phi_at_zero_equals_two", x0 == 0 and y0 == 1, math.inf, note="exact rational"),
    ]
    v18 = phi(Interval.ratio(1, 8))
    claims.append(Claim("phi_at_one_eighth_negative", v18.strictly_negative(), -v18.hi))
    end = (mm + Interval.from_fraction(m_star)) / Interval.from_fraction(m_star + 1)
    claims.append(Claim("phi_at_right_end_positive", end.strictly_positive(), end.lo))

    def phi_pp(cell):
        (T,) = cell
        base = (1 - (Interval.from_fraction(m_star) + 1) * T).pow_int(d - 2)
        return (2 - mm) * Interval.exact(d * (d - 1)) * Interval.from_fraction((m_star + 1) ** 2) * base

    t_end = Fraction(1) / (m_star + 1)
    ok, margin, cells, _ = prove_sign(phi_pp, [Interval(0.0, float(t_end) * (1 - 1e-9))], +1, depth_cap)
    claims.append(Claim("phi_convex_interior", ok, margin, cells, "strict on [0, (1-1e-9) t_end]; phi''(t_end) = 0"))
    claims.append(
        Claim(
            "exactly_two_zeros",
            all(c.proven for c in claims),
            math.inf,
            note="positive-negative-positive values plus convexity",
        )
    )
    return CertificateReport.from_claims("line_crossing", d, claims)


# --------------------------------------------------------------------------
# suite runner
# --------------------------------------------------------------------------

ALL_CERTIFICATES = (
    "spectral_bounds",
    "gamma_estimates",
    "whD_inequality",
    "segment_bounds",
    "contraction",
    "nonresonance",
    "line_crossing",
)


def run_suite(d_list: Sequence[int] = (3, 5, 7, 9), nonresonance_order: int = 50) -> list[CertificateReport]:
    """All certificates for every degree in the list."""
    reports: list[CertificateReport] = []
    reports += certify_spectral_bounds(d_list)
    for d in d_list:
        reports.append(certify_gamma_estimates(d))
        reports.append(certify_whD_inequality(d))
        reports.append(certify_segment_bounds(d))
        reports.append(certify_contraction(d))
        reports.append(certify_nonresonance(d, nonresonance_order))
        reports.append(certify_line_crossing(d))
    return reports

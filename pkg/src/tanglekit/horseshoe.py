"""Transversal return map near a homoclinic point and its horseshoe certificate.

A pseudo-rectangle R is attached to a homoclinic point w_u on the local
unstable manifold.  Points of R iterate forward through the homoclinic
excursion (2*m0 double-steps) and then through the linearization zone until
they re-enter R; the level sets of the return count k decompose the domain
into strips whose images stretch fully across R.  Verified crossing of N
disjoint strips is the desk-scale hypothesis set of the shift conjugacy, and
periodic orbits for every itinerary word follow by multiple-shooting Newton.

The composed return stretches deviations by roughly the expanding eigenvalue
to the power m0 + k, far beyond 1/ulp of binary64, so the return sweep and
everything derived from it run in mpmath around the exact staged chain; the
public data structures report float roundings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .homoclinic import TanglePipeline, _mp_arc_point_at
from .mapcore import MapParams, PlanarPoint, iterate, iterate_double

P1_ARR = np.array([0.0, -1.0])


def _mp_step(d: int, zx, zy, backward: bool = False):
    import mpmath as mp

    if backward:
        s = zx - zy
        r = mp.sign(s) * mp.root(abs(s), d) if s != 0 else mp.mpf(0)
        return -2 * zx + zy + r, 2 * zx - zy
    w = (zx + zy) ** d
    return zy - w, zy - 2 * w


def _mp_jac_inv_apply(d: int, z_pre, v):
    """Pull a tangent vector back through one forward map application."""
    import mpmath as mp

    s = d * (z_pre[0] + z_pre[1]) ** (d - 1)
    # DT = [[-s, 1-s], [-2s, 1-2s]], det = s
    det = s
    if det == 0:
        raise ZeroDivisionError("tangent pullback through the critical line")
    a, b, c, e = -s, 1 - s, -2 * s, 1 - 2 * s
    return (e * v[0] - b * v[1]) / det, (-c * v[0] + a * v[1]) / det


# --------------------------------------------------------------------------
# staging the orbit chain
# --------------------------------------------------------------------------

@dataclass
class StagedPoints:
    k_family: int
    m_u: int
    m_s: int
    n0: int
    m0: int
    w_u: PlanarPoint
    w_tilde: PlanarPoint
    z_hat: PlanarPoint
    z_tilde: PlanarPoint
    w_hat: PlanarPoint
    w_s: PlanarPoint
    arrow_residuals: dict[str, float]
    chain_residual: float  # closure of the full chain in exact arithmetic
    dps: int = 60
    tangle: TanglePipeline = field(repr=False, default=None)
    mp_data: dict = field(repr=False, default_factory=dict)


def stage_points(
    p: MapParams,
    tangle: TanglePipeline,
    m_u: int = 1,
    m_s: int = 1,
    k_family: int | None = None,
    dps: int = 60,
) -> StagedPoints:
    """Assemble the full homoclinic orbit chain and re-verify every arrow.

    The chain runs w_u -> w_tilde -> z_hat -> z_tilde -> w_hat -> w_s with
    leg lengths m_u, n0, k, n0, m_s (double-steps).  It is built in extended
    precision; the reported points are float roundings, each leg re-verified
    by direct binary64 iteration and the full composition by exact iteration
    of the extended representation.
    """
    import mpmath as mp

    if m_u < 1 or m_s < 1:
        raise ValueError("m_u and m_s must be >= 1")
    entries = {e.k: e for e in tangle.family.entries}
    if not entries:
        raise ArithmeticError("empty homoclinic family")
    if k_family is None:
        k_family = min(k for k, e in entries.items() if e.residual < 1e-8)
    profile = tangle.profile
    if k_family not in profile.level_offsets:
        raise ArithmeticError(f"level {k_family} missing from the return-time profile")
    n0 = tangle.anchors.n0
    m0 = m_u + n0 + k_family + n0 + m_s
    g1, g2 = profile.g1, profile.g2
    t1, t2 = profile.level_offsets[k_family]
    d = p.d
    with mp.workdps(dps):
        # re-polish the family crossing in mp, then walk the chain exactly
        X1 = g1.seed_param_mp(t1)
        X2 = g2.seed_param_mp(t2)
        h1 = mp.mpf(t1) * mp.mpf(10) ** (-dps // 3)
        h2 = mp.mpf(t2) * mp.mpf(10) ** (-dps // 3)

        def F(a, b):
            zu = _mp_arc_point_at(g1.arc, a, extra=k_family)
            zs = _mp_arc_point_at(g2.arc, b)
            return mp.matrix([zu[0] - zs[0], zu[1] - zs[1]])

        for _ in range(12):
            f0 = F(X1, X2)
            if mp.norm(f0) < mp.mpf(10) ** (-dps + 18):
                break
            d1 = (F(X1 + h1, X2) - f0) / h1
            d2 = (F(X1, X2 + h2) - f0) / h2
            J = mp.matrix([[d1[0], d2[0]], [d1[1], d2[1]]])
            step = mp.lu_solve(J, f0)
            X1 -= step[0]
            X2 -= step[1]
        zh = _mp_arc_point_at(g1.arc, X1)
        zt = _mp_arc_point_at(g2.arc, X2)
        # half-step pivots of the whole chain, w_u forward to w_s
        back_half = 2 * (n0 + m_u)
        pre = [zh]
        z = zh
        for _ in range(back_half):
            z = _mp_step(d, *z, backward=True)
            pre.append(z)
        half_chain = pre[::-1]  # w_u ... z_hat
        z = zh
        for _ in range(2 * k_family):
            z = _mp_step(d, *z)
            half_chain.append(z)
        if mp.norm(mp.matrix([half_chain[-1][0] - zt[0], half_chain[-1][1] - zt[1]])) > mp.mpf(10) ** (-20):
            raise ArithmeticError("chain does not close onto the stable-side point")
        half_chain[-1] = zt
        z = zt
        for _ in range(2 * (n0 + m_s)):
            z = _mp_step(d, *z)
            half_chain.append(z)
        chain = {
            "w_u": half_chain[0],
            "w_tilde": half_chain[2 * m_u],
            "z_hat": half_chain[2 * (m_u + n0)],
            "z_tilde": half_chain[2 * (m_u + n0 + k_family)],
            "w_hat": half_chain[2 * (m_u + 2 * n0 + k_family)],
            "w_s": half_chain[2 * m0],
        }
        # closure of the full composition in exact arithmetic
        z = chain["w_u"]
        for _ in range(2 * m0):
            z = _mp_step(d, *z)
        chain_residual = float(mp.sqrt((z[0] - chain["w_s"][0]) ** 2 + (z[1] - chain["w_s"][1]) ** 2))
        pts = {name: PlanarPoint(float(v[0]), float(v[1])) for name, v in chain.items()}

        # unstable edge: tangent of the local unstable graph at w_u
        cu = [mp.mpf(0)] + [mp.mpf(c) for c in tangle.series_u.coefficients]
        dcu = [i * c for i, c in enumerate(cu)][1:]
        slope_u = mp.polyval(dcu[::-1], chain["w_u"][0])
        e_u = mp.matrix([1, slope_u]) / mp.sqrt(1 + slope_u**2)
        if float(chain["w_u"][0]) * float(e_u[0]) < 0:
            e_u = -e_u
        # stable edge: the stable-manifold tangent at w_u, pulled back from
        # the crossing point along the chain
        hh = mp.mpf(t2) * mp.mpf(10) ** (-dps // 3)
        za = _mp_arc_point_at(g2.arc, X2 - hh)
        zb = _mp_arc_point_at(g2.arc, X2 + hh)
        v = (zb[0] - za[0], zb[1] - za[1])
        for j in range(2 * (m_u + n0 + k_family), 0, -1):
            v = _mp_jac_inv_apply(d, half_chain[j - 1], v)
        nv = mp.sqrt(v[0] ** 2 + v[1] ** 2)
        e_s = mp.matrix([v[0] / nv, v[1] / nv])
        mp_data = {
            "w_u": chain["w_u"],
            "e_u": (e_u[0], e_u[1]),
            "e_s": (e_s[0], e_s[1]),
            "half_chain": half_chain,
            # curvilinear stable coordinate: offsets along the stable-manifold
            # piece through w_u, realized by pulling the crossing arc back
            "arc_s": g2.arc,
            "x2": X2,
            "pullback": m_u + n0 + k_family,
            "ws_speed": nv / (2 * hh),
            "b_sign": 1,
        }

    def dist(a: PlanarPoint, b: PlanarPoint) -> float:
        return math.hypot(a.x - b.x, a.y - b.y)

    arrows = {
        "w_u->w_tilde": dist(iterate_double(p, pts["w_u"], m_u), pts["w_tilde"]),
        "w_tilde->z_hat": dist(iterate_double(p, pts["w_tilde"], n0), pts["z_hat"]),
        "z_hat->z_tilde": dist(iterate_double(p, pts["z_hat"], k_family), pts["z_tilde"]),
        "z_tilde->w_hat": dist(iterate_double(p, pts["z_tilde"], n0), pts["w_hat"]),
        "w_hat->w_s": dist(iterate_double(p, pts["w_hat"], m_s), pts["w_s"]),
    }
    bad = {k: v for k, v in arrows.items() if v > 1e-8}
    if bad or chain_residual > 1e-8:
        raise ArithmeticError(f"staging arrows failed re-verification: {bad}, chain {chain_residual:.2e}")
    return StagedPoints(
        k_family=k_family,
        m_u=m_u,
        m_s=m_s,
        n0=n0,
        m0=m0,
        w_u=pts["w_u"],
        w_tilde=pts["w_tilde"],
        z_hat=pts["z_hat"],
        z_tilde=pts["z_tilde"],
        w_hat=pts["w_hat"],
        w_s=pts["w_s"],
        arrow_residuals=arrows,
        chain_residual=chain_residual,
        dps=dps,
        tangle=tangle,
        mp_data=mp_data,
    )


# --------------------------------------------------------------------------
# pseudo-rectangle
# --------------------------------------------------------------------------

@dataclass
class PseudoRectangle:
    """Parallelogram at the homoclinic anchor spanned by the local tangents.

    Coordinates (a, b): z = anchor + a*edge_u + b*edge_s with a in [0, eps_u]
    and b in [0, eps_s]; the orientation keeps the returning side and the
    image band positive.  `mp_anchor`/`mp_edges` carry the extended-precision
    originals used by the return sweep.
    """

    anchor: PlanarPoint
    edge_u: np.ndarray
    edge_s: np.ndarray
    eps_u: float
    eps_s: float
    mp_anchor: tuple = field(repr=False, default=None)
    mp_edges: tuple = field(repr=False, default=None)

    def __post_init__(self):
        self._mat = np.column_stack([self.edge_u, self.edge_s])
        self._inv = np.linalg.inv(self._mat)

    def coords(self, X, Y):
        dx = X - self.anchor.x
        dy = Y - self.anchor.y
        a = self._inv[0, 0] * dx + self._inv[0, 1] * dy
        b = self._inv[1, 0] * dx + self._inv[1, 1] * dy
        return a, b

    def contains(self, X, Y):
        a, b = self.coords(X, Y)
        return (a >= 0) & (a <= self.eps_u) & (b >= 0) & (b <= self.eps_s)

    def point(self, a, b):
        return (
            self.anchor.x + a * self.edge_u[0] + b * self.edge_s[0],
            self.anchor.y + a * self.edge_u[1] + b * self.edge_s[1],
        )

    def boundary(self) -> np.ndarray:
        corners = [(0.0, 0.0), (self.eps_u, 0.0), (self.eps_u, self.eps_s), (0.0, self.eps_s)]
        return np.array([self.point(a, b) for a, b in corners])


class _MpReturnEngine:
    """Return-orbit evaluation around the exact anchor in mpmath.

    Start points are curvilinear: the stable offset b runs along the actual
    stable-manifold piece through the anchor (a straight stable edge would
    make the return strips wander quadratically across the rectangle), while
    the unstable offset a is a straight displacement along the local
    unstable tangent.  Return coordinates are measured in the straight
    parallelogram frame.
    """

    def __init__(self, p: MapParams, staged: StagedPoints, rect_dirs: tuple, dps: int):
        import mpmath as mp

        self.p = p
        self.d = p.d
        self.m0 = staged.m0
        self.dps = dps
        self.radius = staged.tangle.frame.radius
        self.anchor = staged.mp_data["w_u"]
        self.e_u, self.e_s = rect_dirs
        md = staged.mp_data
        self.arc_s = md["arc_s"]
        self.x2 = md["x2"]
        self.pullback = md["pullback"]
        self.ws_speed = md["ws_speed"]
        self.b_sign = md["b_sign"]
        # inverse of the edge matrix, in mp
        with mp.workdps(dps):
            det = self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0]
            self.inv = (self.e_s[1] / det, -self.e_s[0] / det, -self.e_u[1] / det, self.e_u[0] / det)

    def stable_base(self, b):
        """Point of the stable-manifold piece at curvilinear offset b."""
        import mpmath as mp

        if b == 0:
            return self.anchor
        t = mp.mpf(self.b_sign) * mp.mpf(b) / self.ws_speed
        return _mp_arc_point_at(self.arc_s, self.x2 + t, extra=self.pullback)

    def start(self, a, b):
        base = self.stable_base(b)
        return base[0] + a * self.e_u[0], base[1] + a * self.e_u[1]

    def orbit(self, a, b, k_budget: int, base=None):
        """Iterate the curvilinear start; returns per-k rectangle coords.

        Yields (k, a_img, b_img, position, in_frame) after each
        post-excursion double step, plus the running minimum of |y - x|.
        """
        import mpmath as mp

        d = self.d
        with mp.workdps(self.dps):
            if base is None:
                base = self.stable_base(b)
            zx = base[0] + a * self.e_u[0]
            zy = base[1] + a * self.e_u[1]
            min_gap = abs(float(zy - zx))
            for _ in range(2 * self.m0):
                w = (zx + zy) ** d
                zx, zy = zy - w, zy - 2 * w
                g = abs(float(zy - zx))
                if g < min_gap:
                    min_gap = g
                if abs(zx) > 1e3 or abs(zy) > 1e3:
                    return None, min_gap
            rows = []
            for k in range(1, k_budget + 1):
                for _ in range(2):
                    w = (zx + zy) ** d
                    zx, zy = zy - w, zy - 2 * w
                    g = abs(float(zy - zx))
                    if g < min_gap:
                        min_gap = g
                if abs(zx) > 1e3 or abs(zy) > 1e3:
                    break
                in_frame = math.hypot(float(zx), float(zy) + 1.0) <= self.radius
                ox = zx - self.anchor[0]
                oy = zy - self.anchor[1]
                a_img = self.inv[0] * ox + self.inv[1] * oy
                b_img = self.inv[2] * ox + self.inv[3] * oy
                rows.append((k, float(a_img), float(b_img), (float(zx), float(zy)), in_frame))
                if not in_frame:
                    break
            return rows, min_gap

    def first_return(self, a, b, eps_u: float, eps_s: float, k_budget: int):
        rows, min_gap = self.orbit(a, b, k_budget)
        if not rows:
            return None, min_gap
        for k, a_img, b_img, pos, in_frame in rows:
            if not in_frame:
                return None, min_gap
            if 0.0 <= a_img <= eps_u and 0.0 <= b_img <= eps_s:
                return (k, a_img, b_img, pos), min_gap
        return None, min_gap


def plan_rectangle(
    p: MapParams,
    staged: StagedPoints,
    n_symbols: int = 2,
    k_budget: int = 8,
    width_factor: float = 0.3,
) -> tuple[PseudoRectangle, dict]:
    """Choose rectangle extents from the measured return geometry.

    The anchor's own forward returns give the offset A_ref(k) and band
    B_ref(k) per return count; the slope of the return in the unstable
    coordinate then places each strip at a_k = -A_ref(k)/S_k.  The unstable
    extent is a fixed fraction of |A_ref|, which makes the strip widths a
    fixed fraction of their positions, and the stable extent covers the
    image bands of the selected strips.
    """
    import mpmath as mp

    engine = _MpReturnEngine(p, staged, (staged.mp_data["e_u"], staged.mp_data["e_s"]), staged.dps)
    rows0, _ = engine.orbit(mp.mpf(0), mp.mpf(0), k_budget)
    if not rows0:
        raise ArithmeticError("anchor orbit does not stay representable")
    # the anchor's forward orbit follows the stable manifold only while the
    # manifold-series residual has not been amplified into view; its return
    # offset a_ref is constant on the trustworthy range
    a_ref_0 = rows0[0][1]
    usable: dict[int, tuple[float, float]] = {}
    for k, a_ref, b_ref, _pos, in_frame in rows0:
        if not in_frame or abs(a_ref - a_ref_0) > 0.05 * abs(a_ref_0):
            break
        usable[k] = (a_ref, b_ref)
    if len(usable) < n_symbols:
        raise ArithmeticError(f"only {len(usable)} trustworthy return counts")

    def img_a(a_val, k: int) -> float | None:
        rows, _ = engine.orbit(a_val, mp.mpf(0), k)
        hit = next((r for r in rows or [] if r[0] == k), None)
        return None if hit is None else hit[1]

    table: dict[int, dict] = {}
    sign_u = 1.0
    with mp.workdps(staged.dps):

        def bracket(k: int, sign: float):
            lo = mp.mpf(10) ** (-45)
            for expo in range(-40, -4):
                mag = mp.mpf(10) ** expo
                val = img_a(sign * mag, k)
                if val is None:
                    return None
                if val > 0:
                    return lo, mag
                lo = mag
            return None

        for k in sorted(usable):
            a_ref, b_ref = usable[k]
            got = bracket(k, sign_u)
            if got is None and not table:
                got = bracket(k, -sign_u)
                if got is not None:
                    sign_u = -sign_u
            if got is None:
                continue
            lo, hi = got
            for _ in range(200):
                mid = mp.sqrt(lo * hi)
                val = img_a(sign_u * mid, k)
                if val is None or val > 0:
                    hi = mid
                else:
                    lo = mid
                if float(hi - lo) < 1e-4 * float(hi):
                    break
            a_star = mp.sqrt(lo * hi)
            base = img_a(sign_u * a_star, k)
            if base is None:
                continue
            h = a_star * mp.mpf(10) ** (-4)
            val2 = img_a(sign_u * (a_star + h), k)
            if val2 is None:
                continue
            table[k] = {
                "a_ref": a_ref,
                "b_ref": b_ref,
                "a_star": float(a_star),
                "slope": (val2 - base) / float(h),
                "sign_u": sign_u,
            }
    if len(table) < n_symbols:
        raise ArithmeticError(f"located only {len(table)} strips: {sorted(table)}")
    if sign_u < 0:
        staged.mp_data["e_u"] = tuple(-c for c in staged.mp_data["e_u"])
    ks = sorted(table)[:n_symbols]
    bands = [table[k]["b_ref"] for k in ks]
    if all(b < 0 for b in bands):
        staged.mp_data["e_s"] = tuple(-c for c in staged.mp_data["e_s"])
        for k in table:
            table[k]["b_ref"] = -table[k]["b_ref"]
        bands = [table[k]["b_ref"] for k in ks]
    if not all(b > 0 for b in bands):
        raise ArithmeticError(f"image bands straddle the unstable edge: {bands}")
    eps_u = width_factor * abs(table[ks[0]]["a_ref"])
    eps_s = 3.0 * max(bands)
    w_u = staged.w_u
    e_u_f = np.array([float(c) for c in staged.mp_data["e_u"]])
    e_s_f = np.array([float(c) for c in staged.mp_data["e_s"]])
    rect = PseudoRectangle(
        anchor=w_u,
        edge_u=e_u_f,
        edge_s=e_s_f,
        eps_u=float(eps_u),
        eps_s=float(eps_s),
        mp_anchor=staged.mp_data["w_u"],
        mp_edges=(staged.mp_data["e_u"], staged.mp_data["e_s"]),
    )
    return rect, table


def default_rectangle(p: MapParams, staged: StagedPoints, n_symbols: int = 2) -> PseudoRectangle:
    rect, _ = plan_rectangle(p, staged, n_symbols=n_symbols)
    return rect


# --------------------------------------------------------------------------
# transversal map sample
# --------------------------------------------------------------------------

@dataclass
class TransversalMapSample:
    rect: PseudoRectangle
    m0: int
    a_grid: np.ndarray
    b_grid: np.ndarray
    k_of: np.ndarray  # (na, nb), -1 undefined
    phi: np.ndarray  # (na, nb, 2)
    ret_ab: np.ndarray  # (na, nb, 2) return point in rectangle coordinates
    min_line_gap: np.ndarray  # (na, nb)
    k_budget: int

    @property
    def defined_fraction(self) -> float:
        return float((self.k_of > 0).mean())

    @property
    def realized_k(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.k_of[self.k_of > 0]))


def transversal_map(
    p: MapParams,
    rect: PseudoRectangle,
    staged: StagedPoints,
    grid: tuple[int, int] = (256, 256),
    k_budget: int = 8,
    plan: dict | None = None,
    n_strips: int = 2,
) -> TransversalMapSample:
    """First-return sweep of the rectangle under the staged excursion.

    The unstable coordinate is sampled geometrically across the strip
    cluster (the return strips are geometric in that coordinate, and the
    domain of the return map is a thin subset of the rectangle); the stable
    coordinate is sampled uniformly.
    """
    import mpmath as mp

    if plan is None:
        _, plan = plan_rectangle(p, staged, n_symbols=2)
    engine = _MpReturnEngine(p, staged, rect.mp_edges, staged.dps)
    na, nb = grid
    ks = sorted(plan)[:n_strips]
    stars = sorted(plan[k]["a_star"] for k in ks)
    a_lo = stars[0] * 0.3
    a_hi = min(rect.eps_u, stars[-1] * 4.0)
    a_grid = np.geomspace(a_lo, a_hi, na)
    b_grid = np.linspace(0.0, rect.eps_s, nb)
    k_of = np.full((na, nb), -1, dtype=int)
    phi = np.full((na, nb, 2), np.nan)
    ret_ab = np.full((na, nb, 2), np.nan)
    gaps = np.full((na, nb), np.nan)
    with mp.workdps(staged.dps):
        a_mps = [mp.mpf(float(a)) for a in a_grid]
        b_mps = [mp.mpf(float(b)) for b in b_grid]
        for i, a in enumerate(a_mps):
            for j, b in enumerate(b_mps):
                hit, min_gap = engine.first_return(a, b, rect.eps_u, rect.eps_s, k_budget)
                gaps[i, j] = min_gap
                if hit is not None:
                    k, a_img, b_img, pos = hit
                    k_of[i, j] = k
                    phi[i, j] = pos
                    ret_ab[i, j] = (a_img, b_img)
    return TransversalMapSample(
        rect=rect,
        m0=staged.m0,
        a_grid=a_grid,
        b_grid=b_grid,
        k_of=k_of,
        phi=phi,
        ret_ab=ret_ab,
        min_line_gap=gaps,
        k_budget=k_budget,
    )


# --------------------------------------------------------------------------
# line avoidance
# --------------------------------------------------------------------------

@dataclass
class ClearanceReport:
    clearance: float
    proven: bool
    case: Literal[1, 2]
    q_u_orbit_min_gap: float
    threshold: float


def verify_avoidance(
    p: MapParams, sample: TransversalMapSample, staged: StagedPoints, threshold: float = 1e-6
) -> ClearanceReport:
    """Distance of all used return orbits from the non-smooth line {y = x}."""
    defined = sample.k_of > 0
    if not defined.any():
        raise ArithmeticError("no defined return orbits to check")
    clearance = float(sample.min_line_gap[defined].min())
    q_u = staged.tangle.anchors.q_u
    log = iterate(p, q_u, 2 * staged.n0)
    gaps = [abs(float(pt.y) - float(pt.x)) for pt in log.points]
    case = 1 if min(gaps) > threshold else 2
    return ClearanceReport(
        clearance=clearance,
        proven=clearance > threshold,
        case=case,
        q_u_orbit_min_gap=min(gaps),
        threshold=threshold,
    )


# --------------------------------------------------------------------------
# strip decomposition and crossing certificate
# --------------------------------------------------------------------------

@dataclass
class Strip:
    k: int
    a_lo: float
    a_hi: float
    crossing: bool = False
    image_b_band: tuple[float, float] = (math.nan, math.nan)
    stretch: float = math.nan
    compression: float = math.nan


@dataclass
class HorseshoeCertificate:
    n_symbols: int
    strips: list[Strip]
    clearance: float
    proven: bool
    m0: int
    diagnostics: str = ""

    def as_dict(self) -> dict:
        return {
            "n_symbols": self.n_symbols,
            "m0": self.m0,
            "clearance": self.clearance,
            "proven": self.proven,
            "strips": [
                {
                    "k": s.k,
                    "a_lo": s.a_lo,
                    "a_hi": s.a_hi,
                    "crossing": s.crossing,
                    "image_b_band": list(s.image_b_band),
                    "stretch": s.stretch,
                    "compression": s.compression,
                }
                for s in self.strips
            ],
            "diagnostics": self.diagnostics,
        }


def conley_moser_check(
    p: MapParams,
    sample: TransversalMapSample,
    n_symbols: int = 2,
    staged: StagedPoints | None = None,
    b_fracs: Sequence[float] = (0.25, 0.5, 0.75),
    curve_samples: int = 320,
) -> HorseshoeCertificate:
    """Verify the strip-crossing conditions on the sampled return map.

    Strips are level sets of the return count; each selected strip's image
    must run fully across the rectangle in the unstable direction while its
    stable coordinate stays inside, and the image bands must be disjoint.
    """
    import mpmath as mp

    if staged is None:
        raise ValueError("staged points are required")
    rect = sample.rect
    k_values = sample.realized_k
    if len(k_values) < n_symbols:
        return HorseshoeCertificate(
            n_symbols, [], float("nan"), False, sample.m0, f"only {len(k_values)} realized return counts"
        )
    strips: list[Strip] = []
    for k in k_values[:n_symbols]:
        cols = np.flatnonzero((sample.k_of == k).any(axis=1))
        if cols.size == 0:
            continue
        strips.append(Strip(k=k, a_lo=float(sample.a_grid[cols.min()]), a_hi=float(sample.a_grid[cols.max()])))
    # ties at borders go to the smaller return count
    strips.sort(key=lambda s: s.k)
    for s1, s2 in zip(strips, strips[1:]):
        if s1.a_lo <= s2.a_hi:  # larger k sits at smaller a
            s2.a_hi = min(s2.a_hi, s1.a_lo * (1 - 1e-9))
    engine = _MpReturnEngine(p, staged, rect.mp_edges, staged.dps)
    diagnostics: list[str] = []
    proven = True
    for strip in strips:
        bands = []
        ok = True
        stretches = []
        for frac in b_fracs:
            b0 = mp.mpf(frac * rect.eps_s)
            a_vals = np.geomspace(strip.a_lo * 0.5, min(strip.a_hi * 2.0, rect.eps_u), curve_samples)
            a_img = np.full(curve_samples, np.nan)
            b_img = np.full(curve_samples, np.nan)
            with mp.workdps(staged.dps):
                for i, a in enumerate(a_vals):
                    rows, _ = engine.orbit(mp.mpf(float(a)), b0, strip.k)
                    if rows:
                        hit = next((r for r in rows if r[0] == strip.k), None)
                        if hit is not None:
                            a_img[i], b_img[i] = hit[1], hit[2]
            good = np.isfinite(a_img) & np.isfinite(b_img)
            if good.sum() < 10:
                ok = False
                diagnostics.append(f"strip k={strip.k}: image curve mostly invalid")
                break
            ai, bi, av = a_img[good], b_img[good], a_vals[good]
            if not (ai.min() < 0.0 and ai.max() > rect.eps_u):
                ok = False
                diagnostics.append(f"strip k={strip.k}: image does not span the unstable extent")
                break
            inside = (ai >= 0.0) & (ai <= rect.eps_u)
            if not inside.any():
                ok = False
                diagnostics.append(f"strip k={strip.k}: no image points inside")
                break
            ble, bhe = float(bi[inside].min()), float(bi[inside].max())
            if not (0.0 < ble and bhe < rect.eps_s):
                ok = False
                diagnostics.append(
                    f"strip k={strip.k}: image stable band [{ble:.3e},{bhe:.3e}] leaves the rectangle"
                )
                break
            bands.append((ble, bhe))
            stretches.append(abs(ai.max() - ai.min()) / (av.max() - av.min()))
        if ok:
            strip.crossing = True
            strip.image_b_band = (min(b[0] for b in bands), max(b[1] for b in bands))
            strip.stretch = float(np.median(stretches))
            strip.compression = _strip_compression(p, engine, rect, strip, staged.dps)
        proven &= ok
    for i, s1 in enumerate(strips):
        for s2 in strips[i + 1 :]:
            if min(s1.a_hi, s2.a_hi) >= max(s1.a_lo, s2.a_lo):
                proven = False
                diagnostics.append(f"strips k={s1.k},{s2.k} overlap in the unstable coordinate")
            lo1, hi1 = s1.image_b_band
            lo2, hi2 = s2.image_b_band
            if not (hi1 < lo2 or hi2 < lo1):
                proven = False
                diagnostics.append(f"image bands of k={s1.k},{s2.k} overlap")
    for strip in strips:
        if strip.crossing and strip.stretch <= 1.0:
            proven = False
            diagnostics.append(f"strip k={strip.k} does not expand")
        if strip.crossing and not (strip.compression < 1.0):
            proven = False
            diagnostics.append(f"strip k={strip.k} does not compress")
    clearance = float(sample.min_line_gap[sample.k_of > 0].min()) if (sample.k_of > 0).any() else math.nan
    proven &= len(strips) == n_symbols and all(s.crossing for s in strips) and clearance > 1e-6
    return HorseshoeCertificate(
        n_symbols=n_symbols,
        strips=strips,
        clearance=clearance,
        proven=bool(proven),
        m0=sample.m0,
        diagnostics="; ".join(diagnostics),
    )


def _strip_compression(p: MapParams, engine: _MpReturnEngine, rect: PseudoRectangle, strip: Strip, dps: int, n: int = 32) -> float:
    import mpmath as mp

    a_mid = math.sqrt(strip.a_lo * strip.a_hi)
    b_vals = np.linspace(0.1 * rect.eps_s, 0.9 * rect.eps_s, n)
    outs = []
    ins = []
    with mp.workdps(dps):
        for b in b_vals:
            rows, _ = engine.orbit(mp.mpf(a_mid), mp.mpf(float(b)), strip.k)
            hit = next((r for r in rows or [] if r[0] == strip.k), None)
            if hit is not None:
                ins.append(b)
                outs.append(hit[2])
    if len(outs) < 4:
        return math.nan
    return float((max(outs) - min(outs)) / (max(ins) - min(ins)))


# --------------------------------------------------------------------------
# periodic orbits by multiple shooting
# --------------------------------------------------------------------------

@dataclass
class PeriodicOrbit:
    word: tuple[int, ...]
    period: int
    total_double_steps: int
    point: PlanarPoint
    residual: float  # closure of the refined orbit under exact iteration
    segment_residual: float  # worst binary64 per-double-step defect
    itinerary_ok: bool
    return_ab: list[tuple[float, float]] = field(default_factory=list)
    orbit: np.ndarray = field(repr=False, default=None)


def _strip_seed_orbit(engine: _MpReturnEngine, rect: PseudoRectangle, strip: Strip, dps: int) -> list:
    """Double-step points (mp) of one representative return orbit of a strip."""
    import mpmath as mp

    # aim for the a whose image lands mid-rectangle
    with mp.workdps(dps):
        lo, hi = mp.mpf(strip.a_lo * 0.5), mp.mpf(min(strip.a_hi * 2.0, rect.eps_u))
        target = 0.5 * rect.eps_u
        for _ in range(80):
            mid = mp.sqrt(lo * hi)
            rows, _ = engine.orbit(mid, mp.mpf(0.5 * rect.eps_s), strip.k)
            hit = next((r for r in rows or [] if r[0] == strip.k), None)
            val = hit[1] if hit is not None else math.inf
            if val > target:
                hi = mid
            else:
                lo = mid
        a0 = mp.sqrt(lo * hi)
        b0 = mp.mpf(0.5 * rect.eps_s)
        zx = engine.anchor[0] + a0 * engine.e_u[0] + b0 * engine.e_s[0]
        zy = engine.anchor[1] + a0 * engine.e_u[1] + b0 * engine.e_s[1]
        pts = [(zx, zy)]
        for _ in range(engine.m0 + strip.k - 1):
            zx, zy = _mp_step(engine.d, *_mp_step(engine.d, zx, zy))
            pts.append((zx, zy))
    return pts


def _refine_orbit_hp(
    p: MapParams,
    orbit_mp: list,
    dps: int = 60,
    rect: PseudoRectangle | None = None,
    return_positions: Sequence[int] = (),
) -> tuple[np.ndarray, float, list[tuple[float, float]], float] | None:
    """Multiple-shooting Newton on the cyclic orbit in mpmath.

    Returns (float orbit, exact closure residual of the refined orbit,
    rectangle coordinates at the return positions, worst per-segment float
    defect).
    """
    import mpmath as mp

    M = len(orbit_mp)
    with mp.workdps(dps):
        z = [[mp.mpf(v[0]), mp.mpf(v[1])] for v in orbit_mp]

        def step(x, y):
            w = (x + y) ** p.d
            x1, y1 = y - w, y - 2 * w
            w = (x1 + y1) ** p.d
            return y1 - w, y1 - 2 * w

        def dstep(x, y):
            s1 = p.d * (x + y) ** (p.d - 1)
            w = (x + y) ** p.d
            x1, y1 = y - w, y - 2 * w
            s2 = p.d * (x1 + y1) ** (p.d - 1)
            # product of the two single-step Jacobians
            a1, b1, c1, e1 = -s1, 1 - s1, -2 * s1, 1 - 2 * s1
            a2, b2, c2, e2 = -s2, 1 - s2, -2 * s2, 1 - 2 * s2
            return (
                a2 * a1 + b2 * c1,
                a2 * b1 + b2 * e1,
                c2 * a1 + e2 * c1,
                c2 * b1 + e2 * e1,
            )

        converged = False
        for _ in range(14):
            F = mp.matrix(2 * M, 1)
            J = mp.matrix(2 * M, 2 * M)
            worst = mp.mpf(0)
            for j in range(M):
                fx, fy = step(z[j][0], z[j][1])
                nxt = (j + 1) % M
                F[2 * j] = fx - z[nxt][0]
                F[2 * j + 1] = fy - z[nxt][1]
                worst = max(worst, abs(F[2 * j]), abs(F[2 * j + 1]))
                a, b, c, e = dstep(z[j][0], z[j][1])
                J[2 * j, 2 * j] = a
                J[2 * j, 2 * j + 1] = b
                J[2 * j + 1, 2 * j] = c
                J[2 * j + 1, 2 * j + 1] = e
                J[2 * j, 2 * nxt] -= 1
                J[2 * j + 1, 2 * nxt + 1] -= 1
            if worst < mp.mpf(10) ** (-dps + 12):
                converged = True
                break
            try:
                step_vec = mp.lu_solve(J, F)
            except ZeroDivisionError:
                return None
            big = max(abs(v) for v in step_vec)
            if not mp.isfinite(big) or big > 1:
                return None
            for j in range(M):
                z[j][0] -= step_vec[2 * j]
                z[j][1] -= step_vec[2 * j + 1]
        if not converged:
            return None
        zx, zy = z[0][0], z[0][1]
        for _ in range(M):
            zx, zy = step(zx, zy)
        residual = float(mp.sqrt((zx - z[0][0]) ** 2 + (zy - z[0][1]) ** 2))
        return_ab: list[tuple[float, float]] = []
        if rect is not None:
            ax, ay = rect.mp_anchor
            e_u, e_s = rect.mp_edges
            det = e_u[0] * e_s[1] - e_u[1] * e_s[0]
            for pos in return_positions:
                ox = z[pos][0] - ax
                oy = z[pos][1] - ay
                a = (e_s[1] * ox - e_s[0] * oy) / det
                b = (-e_u[1] * ox + e_u[0] * oy) / det
                return_ab.append((float(a), float(b)))
        out = np.array([[float(v) for v in row] for row in z])
    seg_res = 0.0
    for j in range(M):
        img = iterate_double(p, (out[j, 0], out[j, 1]), 1)
        nxt = out[(j + 1) % M]
        seg_res = max(seg_res, math.hypot(img.x - nxt[0], img.y - nxt[1]))
    return out, residual, return_ab, seg_res


def periodic_orbits(
    p: MapParams,
    cert: HorseshoeCertificate,
    sample: TransversalMapSample,
    staged: StagedPoints | None = None,
    max_period: int = 3,
    merge_tol: float = 1e-8,
) -> list[PeriodicOrbit]:
    """One periodic point per itinerary word over the certified strips."""
    if not cert.proven:
        raise ArithmeticError("certificate is not proven")
    if staged is None:
        raise ValueError("staged points are required")
    rect = sample.rect
    engine = _MpReturnEngine(p, staged, rect.mp_edges, staged.dps)
    strips = {i: s for i, s in enumerate(cert.strips)}
    seeds = {i: _strip_seed_orbit(engine, rect, s, staged.dps) for i, s in strips.items()}
    orbits: list[PeriodicOrbit] = []
    for period in range(1, max_period + 1):
        for code in range(len(strips) ** period):
            word = tuple((code // (len(strips) ** i)) % len(strips) for i in range(period))
            seed = [pt for sym in word for pt in seeds[sym]]
            starts = list(np.cumsum([0] + [sample.m0 + strips[s].k for s in word[:-1]]))
            sol = _refine_orbit_hp(p, seed, dps=staged.dps, rect=rect, return_positions=starts)
            if sol is None:
                continue
            refined, residual, return_ab, seg_res = sol
            itinerary = []
            for a, _b in return_ab:
                hit = None
                for sym, s in strips.items():
                    if s.a_lo * 0.4 <= a <= s.a_hi * 2.5:
                        hit = sym
                        break
                itinerary.append(hit)
            orbits.append(
                PeriodicOrbit(
                    word=word,
                    period=period,
                    total_double_steps=int(sum(sample.m0 + strips[s].k for s in word)),
                    point=PlanarPoint(float(refined[0, 0]), float(refined[0, 1])),
                    residual=residual,
                    segment_residual=seg_res,
                    itinerary_ok=list(word) == itinerary,
                    return_ab=return_ab,
                    orbit=refined,
                )
            )
    # merge duplicates within each period layer; absolute coordinates cannot
    # separate nearby return points, so compare the rectangle coordinates of
    # the return sequence (relative scale)
    def same_orbit(o1: PeriodicOrbit, o2: PeriodicOrbit) -> bool:
        if len(o1.return_ab) != len(o2.return_ab):
            return math.hypot(o1.point.x - o2.point.x, o1.point.y - o2.point.y) <= merge_tol
        a1 = np.array([ab[0] for ab in o1.return_ab])
        a2 = np.array([ab[0] for ab in o2.return_ab])
        for shift in range(len(a1)):
            rel = np.abs(np.roll(a1, shift) - a2) / np.maximum(np.abs(a2), 1e-300)
            if rel.max() < 1e-3:
                return True
        return False

    merged: list[PeriodicOrbit] = []
    for period in range(1, max_period + 1):
        layer = [o for o in orbits if o.period == period]
        kept: list[PeriodicOrbit] = []
        for o in layer:
            if all(not same_orbit(o, q) for q in kept):
                kept.append(o)
        merged.extend(kept)
    return merged


# --------------------------------------------------------------------------
# basin-boundary evidence
# --------------------------------------------------------------------------

@dataclass
class BoundaryEvidence:
    point: PlanarPoint
    epsilon: float
    converged_witness: PlanarPoint | None
    escaping_witness: PlanarPoint | None

    @property
    def is_boundary(self) -> bool:
        return self.converged_witness is not None and self.escaping_witness is not None


def boundary_probe(p: MapParams, z: PlanarPoint, eps: float = 1e-4, directions: int = 16) -> BoundaryEvidence:
    """Search an eps-ball for both a converging and a non-converging point."""
    from .basin import ClassifyConfig, classify

    cfg = ClassifyConfig()
    conv = None
    other = None
    for radius in (eps, eps / 2, eps / 4):
        for i in range(directions):
            ang = 2 * math.pi * i / directions
            w = PlanarPoint(z.x + radius * math.cos(ang), z.y + radius * math.sin(ang))
            label, _ = classify(p, w, cfg)
            if label == "Converged" and conv is None:
                conv = w
            elif label != "Converged" and other is None:
                other = w
            if conv is not None and other is not None:
                return BoundaryEvidence(z, eps, conv, other)
    return BoundaryEvidence(z, eps, conv, other)

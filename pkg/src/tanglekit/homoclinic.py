"""Tangle machinery: manifold crossings, the straightened frame, and the
accumulating family of transversal homoclinic points.

The pipeline finds a homoclinic crossing of the stable/unstable manifolds of
(0, -1) on globalized polylines, pushes it into a local straightened frame,
reparametrizes the two local curve pieces by the level value of the first
integral of the linearized dynamics, and walks the resulting return-time
profile to seed and polish one homoclinic point per integer level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from . import manifolds as mf
from .manifolds import GraphSeries, PolylineCurve, RefineOpts
from .mapcore import (
    P1,
    MapParams,
    PlanarPoint,
    apply,
    apply_inverse,
    iterate_double,
    jacobian,
)


# --------------------------------------------------------------------------
# intersection records and the segment-sweep finder
# --------------------------------------------------------------------------

@dataclass
class IntersectionRecord:
    point: PlanarPoint
    param_a: float
    param_b: float
    angle: float
    contact_order_estimate: int
    kind: Literal["heteroclinic", "homoclinic"]
    residual: float
    seg_a: int = -1
    seg_b: int = -1


def _segment_crossing(a0, a1, b0, b1):
    """Parameters (t, u) of the proper crossing of two segments, or None."""
    r = a1 - a0
    s = b1 - b0
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0.0:
        return None
    q = b0 - a0
    t = (q[0] * s[1] - q[1] * s[0]) / denom
    u = (q[0] * r[1] - q[1] * r[0]) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u < 1.0:
        return t, u
    return None


class _SegmentGrid:
    """Uniform spatial hash over segment bounding boxes."""

    def __init__(self, p0: np.ndarray, p1: np.ndarray, cell: float):
        self.cell = cell
        self.buckets: dict[tuple[int, int], list[int]] = {}
        lo = np.minimum(p0, p1)
        hi = np.maximum(p0, p1)
        for i in range(len(p0)):
            x0, y0 = np.floor(lo[i] / cell).astype(int)
            x1, y1 = np.floor(hi[i] / cell).astype(int)
            for cx in range(x0, x1 + 1):
                for cy in range(y0, y1 + 1):
                    self.buckets.setdefault((cx, cy), []).append(i)

    def candidates(self, q0: np.ndarray, q1: np.ndarray) -> list[int]:
        lo = np.minimum(q0, q1)
        hi = np.maximum(q0, q1)
        x0, y0 = np.floor(lo / self.cell).astype(int)
        x1, y1 = np.floor(hi / self.cell).astype(int)
        out: list[int] = []
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                out.extend(self.buckets.get((cx, cy), ()))
        return out


def _local_separation(curve_a: PolylineCurve, i: int, curve_b: PolylineCurve, j: int, window: int = 4) -> float:
    """Largest deviation of the a-window from the b-window near a crossing."""
    ia = slice(max(0, i - window), min(len(curve_a), i + window + 1))
    ib = slice(max(0, j - window), min(len(curve_b), j + window + 1))
    pa = curve_a.vertices[ia]
    pb = curve_b.vertices[ib]
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    return float(d.min(axis=1).max())


def contact_order_estimate(
    curve_a: PolylineCurve, curve_b: PolylineCurve, param_a: float, window: float = 5e-3
) -> int:
    """Nearest-integer log-log slope of curve separation vs parameter offset."""
    offs = np.geomspace(window / 32, window, 6)
    seps = []
    for off in offs:
        for sgn in (+1.0, -1.0):
            s = param_a + sgn * off
            if s < curve_a.params[0] or s > curve_a.params[-1]:
                continue
            i = np.searchsorted(curve_a.params, s)
            i = min(max(i, 1), len(curve_a) - 1)
            t = (s - curve_a.params[i - 1]) / (curve_a.params[i] - curve_a.params[i - 1])
            pt = curve_a.vertices[i - 1] + t * (curve_a.vertices[i] - curve_a.vertices[i - 1])
            seps.append((off, mf.segment_distance(curve_b, pt)))
    seps = [(o, s) for o, s in seps if s > 0]
    if len(seps) < 3:
        return 1
    lo = np.log([o for o, _ in seps])
    ls = np.log([s for _, s in seps])
    slope = np.polyfit(lo, ls, 1)[0]
    return max(1, int(round(slope)))


def find_intersections(
    a: PolylineCurve,
    b: PolylineCurve,
    kind: Literal["heteroclinic", "homoclinic"] = "homoclinic",
    angle_floor: float = 1e-4,
    identity_angle: float = 1e-7,
    identity_separation: float = 1e-10,
    dedupe: float = 1e-12,
) -> list[IntersectionRecord]:
    """All transverse crossings of two polylines.

    Segment pairs are pre-filtered by a uniform spatial hash over the
    shorter curve, solved exactly as 2x2 linear systems, deduplicated, and
    classified: crossings at angles below angle_floor get a contact-order
    estimate >= 2; crossings where the curves also coincide locally
    (identity artifacts) are rejected.
    """
    if len(a) < 2 or len(b) < 2:
        return []
    # bbox overlap precheck (NaN-safe: gap separators are ignored by nanmin)
    ax = a.vertices[:, 0]
    bx = b.vertices[:, 0]
    ay = a.vertices[:, 1]
    by = b.vertices[:, 1]
    if (
        np.nanmin(ax) > np.nanmax(bx)
        or np.nanmin(bx) > np.nanmax(ax)
        or np.nanmin(ay) > np.nanmax(by)
        or np.nanmin(by) > np.nanmax(ay)
    ):
        return []
    swap = len(a) > len(b)
    ca, cb = (b, a) if swap else (a, b)
    a0, a1 = ca.vertices[:-1], ca.vertices[1:]
    b0, b1 = cb.vertices[:-1], cb.vertices[1:]
    finite_a = np.isfinite(a0).all(axis=1) & np.isfinite(a1).all(axis=1)
    lens = np.linalg.norm((a1 - a0)[finite_a], axis=1)
    med = float(np.median(lens)) if lens.size else 1.0
    cell = max(med * 4, 1e-9)
    grid = _SegmentGrid(a0[finite_a], a1[finite_a], cell)
    a_index = np.flatnonzero(finite_a)
    records: list[IntersectionRecord] = []
    seen: set[tuple[int, int]] = set()
    for j in range(len(b0)):
        if not (np.isfinite(b0[j]).all() and np.isfinite(b1[j]).all()):
            continue
        for ii in sorted(set(grid.candidates(b0[j], b1[j]))):
            i = int(a_index[ii])
            hit = _segment_crossing(a0[i], a1[i], b0[j], b1[j])
            if hit is None:
                continue
            t, u = hit
            pt = a0[i] + t * (a1[i] - a0[i])
            key = (int(round(pt[0] / dedupe)), int(round(pt[1] / dedupe)))
            if key in seen:
                continue
            ta = (1 - t) * ca.tangents[i] + t * ca.tangents[i + 1]
            tb = (1 - u) * cb.tangents[j] + u * cb.tangents[j + 1]
            na, nb = np.linalg.norm(ta), np.linalg.norm(tb)
            if na == 0 or nb == 0:
                continue
            cosang = abs(float(ta @ tb)) / (na * nb)
            angle = math.acos(min(1.0, cosang))
            if angle < identity_angle and _local_separation(ca, i, cb, j) < identity_separation:
                continue
            pa = ca.params[i] + t * (ca.params[i + 1] - ca.params[i])
            pb = cb.params[j] + u * (cb.params[j + 1] - cb.params[j])
            ptb = b0[j] + u * (b1[j] - b0[j])
            residual = float(np.linalg.norm(pt - ptb))
            if swap:
                pa, pb = pb, pa
                i, j_out = j, i
            else:
                j_out = j
            order = 1
            if angle <= angle_floor:
                order = max(2, contact_order_estimate(a, b, pa))
            records.append(
                IntersectionRecord(
                    point=PlanarPoint(float(pt[0]), float(pt[1])),
                    param_a=float(pa),
                    param_b=float(pb),
                    angle=float(angle),
                    contact_order_estimate=order,
                    kind=kind,
                    residual=residual,
                    seg_a=i,
                    seg_b=j_out,
                )
            )
            seen.add(key)
    records.sort(key=lambda r: (r.param_a, r.param_b))
    return records


def merge_pieces(pieces: Sequence[PolylineCurve]) -> PolylineCurve:
    """Concatenate curve pieces with NaN gap rows that cannot form segments."""
    if len(pieces) == 1:
        return pieces[0]
    verts, params, tans, gens, seeds = [], [], [], [], []
    for k, c in enumerate(pieces):
        if k > 0:
            gap_param = 0.5 * (params[-1] + c.params[0])
            verts.append(np.array([math.nan, math.nan]))
            params.append(gap_param)
            tans.append(np.zeros(2))
            gens.append(-1)
            seeds.append(math.nan)
        verts.extend(c.vertices)
        params.extend(c.params)
        tans.extend(c.tangents)
        gens.extend(c.provenance)
        seeds.extend(c.seed_x)
    return PolylineCurve(
        vertices=np.asarray(verts),
        params=np.asarray(params),
        tangents=np.asarray(tans),
        provenance=np.asarray(gens, dtype=int),
        seed_x=np.asarray(seeds),
        which=pieces[0].which,
        smooth_breaks=[],
        complete=all(c.complete for c in pieces),
    )


def find_intersections_multi(
    pieces_a: Sequence[PolylineCurve], pieces_b: Sequence[PolylineCurve], **kw
) -> list[IntersectionRecord]:
    if not pieces_a or not pieces_b:
        return []
    return find_intersections(merge_pieces(pieces_a), merge_pieces(pieces_b), **kw)


# --------------------------------------------------------------------------
# exact arcs: re-evaluable manifold pieces
# --------------------------------------------------------------------------

@dataclass
class ManifoldArc:
    """Piece of a globalized manifold as an exact map of the seed parameter."""

    p: MapParams
    series: GraphSeries
    gens: int
    x_lo: float
    x_hi: float

    @property
    def backward(self) -> bool:
        return self.series.which == "stable"

    def point(self, x: float) -> np.ndarray:
        z = self.series.point(x)
        z = iterate_double(self.p, z, self.gens, backward=self.backward)
        return np.array(z.as_floats())

    def point_and_velocity(self, x: float) -> tuple[np.ndarray, np.ndarray]:
        z = self.series.point(x)
        v = np.array([1.0, self.series.derivative(x)])
        for _ in range(2 * self.gens):
            if self.backward:
                z_new = apply_inverse(self.p, z)
                Jb = jacobian(self.p, z_new, iterate=1).astype(float)
                v = np.linalg.solve(Jb, v)
                z = z_new
            else:
                v = jacobian(self.p, z, iterate=1).astype(float) @ v
                z = apply(self.p, z)
        return np.array(z.as_floats()), v

    def shifted(self, extra_gens: int) -> "ManifoldArc":
        """Arc pushed extra double-steps along its own direction."""
        return ManifoldArc(self.p, self.series, self.gens + extra_gens, self.x_lo, self.x_hi)


def arc_through_vertex(p: MapParams, series: GraphSeries, curve: PolylineCurve, index: int, pad: int = 48) -> ManifoldArc:
    """Constant-generation arc around a polyline vertex."""
    gen = int(curve.provenance[index])
    lo = hi = curve.seed_x[index]
    i = index
    while i - 1 >= 0 and curve.provenance[i - 1] == gen and index - i < pad:
        i -= 1
        lo = curve.seed_x[i]
    i = index
    while i + 1 < len(curve) and curve.provenance[i + 1] == gen and i - index < pad:
        i += 1
        hi = curve.seed_x[i]
    if lo > hi:
        lo, hi = hi, lo
    return ManifoldArc(p, series, gen, float(lo), float(hi))


# --------------------------------------------------------------------------
# straightened frame
# --------------------------------------------------------------------------

@dataclass
class StraightenedFrame:
    """Local coordinates in which the manifold graphs become the axes.

    theta(z) = (y' - Psi_u(x), y' - Psi_s(x)) with y' the offset from the
    cycle point; the first component vanishes on the local unstable graph
    and contracts, the second vanishes on the stable graph and expands.
    Quadrant coordinates reorder and sign-normalize to (expanding,
    contracting) with the tangle in the first quadrant.
    """

    p: MapParams
    series_u: GraphSeries
    series_s: GraphSeries
    radius: float
    sign_exp: float = 1.0
    sign_con: float = 1.0

    def __post_init__(self):
        # the frame ball must stay clear of the non-smooth line
        base = np.array(P1.as_floats())
        dist_line = abs(base[1] - base[0]) / math.sqrt(2.0)
        if self.radius >= dist_line:
            raise ValueError("frame radius reaches the line y = x")

    def contains(self, z) -> bool:
        dx = float(z[0]) - 0.0
        dy = float(z[1]) - (-1.0)
        return math.hypot(dx, dy) <= self.radius

    def theta(self, z) -> tuple[float, float]:
        x = float(z[0])
        yp = float(z[1]) + 1.0
        return yp - float(self.series_u(x)), yp - float(self.series_s(x))

    def theta_inverse(self, xi_hat: float, eta_hat: float, tol: float = 1e-13) -> PlanarPoint:
        """Invert theta by a 1-D Newton on the graph gap."""
        gap = eta_hat - xi_hat  # = Psi_u(x) - Psi_s(x)
        x = gap / (self.p.m_plus - self.p.m_minus)
        for _ in range(60):
            f = float(self.series_u(x)) - float(self.series_s(x)) - gap
            if abs(f) < tol:
                break
            df = float(self.series_u.derivative(x)) - float(self.series_s.derivative(x))
            x -= f / df
        y = xi_hat + float(self.series_u(x)) - 1.0
        return PlanarPoint(x, y)

    def quadrant(self, z) -> tuple[float, float]:
        """(expanding, contracting) coordinates, tangle-side positive."""
        xi_hat, eta_hat = self.theta(z)
        return self.sign_exp * eta_hat, self.sign_con * xi_hat

    def orient(self, q_s, q_u) -> None:
        xi_hat_s, _ = self.theta(q_s)
        _, eta_hat_u = self.theta(q_u)
        self.sign_con = 1.0 if xi_hat_s >= 0 else -1.0
        self.sign_exp = 1.0 if eta_hat_u >= 0 else -1.0


def build_frame(p: MapParams, order: int = 24, radius: float | None = None) -> StraightenedFrame:
    su = mf.local_series(p, "unstable", order)
    ss = mf.local_series(p, "stable", order)
    if radius is None:
        radius = min(0.9 * min(su.validity_radius, ss.validity_radius), 0.45)
    return StraightenedFrame(p, su, ss, radius)


# --------------------------------------------------------------------------
# pushing a record into the frame
# --------------------------------------------------------------------------

@dataclass
class LocalAnchors:
    q_s: PlanarPoint
    q_u: PlanarPoint
    alpha: int
    beta: int
    n0: int
    arc_u: ManifoldArc  # unstable piece through q_s
    arc_s: ManifoldArc  # stable piece through q_u
    chain_residual: float
    x_on_u: float = 0.0  # seed parameter of q_s on arc_u
    x_on_s: float = 0.0  # seed parameter of q_u on arc_s


def _newton_crossing(arc_a: ManifoldArc, arc_b: ManifoldArc, xa: float, xb: float) -> tuple[float, float, float] | None:
    """Polish a crossing of two exact arcs: arc_a(xa) = arc_b(xb)."""
    from .mapcore import DivergenceError

    try:
        for _ in range(60):
            za, va = arc_a.point_and_velocity(xa)
            zb, vb = arc_b.point_and_velocity(xb)
            F = za - zb
            res = float(np.linalg.norm(F))
            try:
                step = np.linalg.solve(np.column_stack([va, -vb]), F)
            except np.linalg.LinAlgError:
                return None
            xa -= step[0]
            xb -= step[1]
            span_a = arc_a.x_hi - arc_a.x_lo
            span_b = arc_b.x_hi - arc_b.x_lo
            if not (arc_a.x_lo - span_a <= xa <= arc_a.x_hi + span_a):
                return None
            if not (arc_b.x_lo - span_b <= xb <= arc_b.x_hi + span_b):
                return None
            if res < 1e-13:
                break
        za, _ = arc_a.point_and_velocity(xa)
        zb, _ = arc_b.point_and_velocity(xb)
    except DivergenceError:
        return None
    return xa, xb, float(np.linalg.norm(za - zb))


def _seed_param_at(curve: PolylineCurve, seg: int, param: float) -> tuple[int, float] | None:
    """(generation, interpolated seed parameter) for a point on a segment."""
    if curve.provenance[seg] != curve.provenance[seg + 1]:
        return None
    t = (param - curve.params[seg]) / (curve.params[seg + 1] - curve.params[seg])
    x = curve.seed_x[seg] + t * (curve.seed_x[seg + 1] - curve.seed_x[seg])
    return int(curve.provenance[seg]), float(x)


def push_to_local(
    p: MapParams,
    record: IntersectionRecord,
    frame: StraightenedFrame,
    wu: PolylineCurve,
    ws: PolylineCurve,
    series_u: GraphSeries,
    series_s: GraphSeries,
    stick_tol: float = 1e-6,
    max_steps: int = 30,
    settle: int = 4,
) -> LocalAnchors:
    """Slide a homoclinic record along its orbit into the local frame.

    The record is first polished onto the exact arcs; all pushed iterates
    are then evaluated through the arc representation, which keeps them on
    the manifold instead of amplifying the off-manifold chord error.

    alpha
        double-steps forward until the orbit lies on the local stable graph
        (distance-from-stable-graph coordinate below stick_tol, staying in
        the frame for `settle` more double-steps).
    beta
        same backward for the unstable side.
    """
    seed_a = _seed_param_at(wu, record.seg_a, record.param_a)
    seed_b = _seed_param_at(ws, record.seg_b, record.param_b)
    if seed_a is None or seed_b is None:
        raise ArithmeticError("record sits on a generation junction")
    gen_a, xa0 = seed_a
    gen_b, xb0 = seed_b
    arc_a = arc_through_vertex(p, series_u, wu, record.seg_a)
    arc_b = arc_through_vertex(p, series_s, ws, record.seg_b)
    polished = _newton_crossing(arc_a, arc_b, xa0, xb0)
    if polished is None or polished[2] > 1e-9:
        raise ArithmeticError("record did not polish onto the exact arcs")
    xa, xb, _ = polished

    def stable_orbit_point(j: int) -> PlanarPoint:
        # forward iterate j of the crossing, taken along the stable manifold
        if j <= gen_b:
            z = ManifoldArc(p, series_s, gen_b - j, xb, xb).point(xb)
            return PlanarPoint(float(z[0]), float(z[1]))
        z = series_s.point(xb)
        return iterate_double(p, z, j - gen_b)

    def unstable_orbit_point(j: int) -> PlanarPoint:
        # backward iterate j of the crossing, taken along the unstable manifold
        if j <= gen_a:
            z = ManifoldArc(p, series_u, gen_a - j, xa, xa).point(xa)
            return PlanarPoint(float(z[0]), float(z[1]))
        z = series_u.point(xa)
        return iterate_double(p, z, j - gen_a, backward=True)

    def settles(point_fn: Callable[[int], PlanarPoint], j: int) -> bool:
        for i in range(1, settle + 1):
            if not frame.contains(point_fn(j + i).as_floats()):
                return False
        return True

    alpha = q_s = None
    for j in range(max_steps + 1):
        z = stable_orbit_point(j)
        if frame.contains(z.as_floats()) and abs(frame.theta(z.as_floats())[1]) < stick_tol and settles(stable_orbit_point, j):
            alpha, q_s = j, z
            break
    if alpha is None:
        raise ArithmeticError("forward iterates never reached the local stable sheet")
    beta = q_u = None
    for j in range(max_steps + 1):
        z = unstable_orbit_point(j)
        if frame.contains(z.as_floats()) and abs(frame.theta(z.as_floats())[0]) < stick_tol and settles(unstable_orbit_point, j):
            beta, q_u = j, z
            break
    if beta is None:
        raise ArithmeticError("backward iterates never reached the local unstable sheet")
    n0 = alpha + beta
    check = iterate_double(p, q_u, n0)
    chain_residual = math.hypot(check.x - q_s.x, check.y - q_s.y)
    arc_u = arc_through_vertex(p, series_u, wu, record.seg_a).shifted(alpha)
    arc_s = arc_through_vertex(p, series_s, ws, record.seg_b).shifted(beta)
    return LocalAnchors(q_s, q_u, alpha, beta, n0, arc_u, arc_s, chain_residual, x_on_u=xa, x_on_s=xb)


# --------------------------------------------------------------------------
# first integral and the return-time profile
# --------------------------------------------------------------------------

def first_integral(p: MapParams, xi: float, eta: float) -> float:
    """Level function of the linear saddle flow on the closed first quadrant."""
    if xi < 0 or eta < 0:
        raise ValueError("first integral defined on the first quadrant only")
    if xi == 0.0 or eta == 0.0:
        return 0.0
    return math.exp(log_first_integral(p, xi, eta))


def log_first_integral(p: MapParams, xi: float, eta: float) -> float:
    if xi <= 0 or eta <= 0:
        raise ValueError("log form needs strictly positive coordinates")
    return math.log(p.lam_plus) * math.log(eta) + math.log(1.0 / p.lam_minus) * math.log(xi)


@dataclass
class TauRow:
    s: float
    x1: float  # seed parameter on the unstable arc
    x2: float  # seed parameter on the stable arc
    xi1: float
    eta1: float
    xi2: float
    eta2: float
    tau: float
    h_residual_1: float
    h_residual_2: float


@dataclass
class TauProfile:
    rows: list[TauRow]
    s_levels: dict[int, float]  # k -> s_k with tau(s_k) = k
    xi0: float
    eta0: float
    level_offsets: dict[int, tuple[float, float]] = field(default_factory=dict)
    g1: "_QuadrantArc | None" = None
    g2: "_QuadrantArc | None" = None

    def trend_ratios(self, p: MapParams) -> dict[int, tuple[float, float]]:
        """Per-level derivative ratios of the reparametrized curves.

        Returns k -> (lam^k * dxi1/ds / dxi2/ds, mu^k * deta1/ds / deta2/ds);
        the first grows and the second shrinks along the family.
        """
        out: dict[int, tuple[float, float]] = {}
        rows = self.rows
        for k, sk in self.s_levels.items():
            i = int(np.argmin([abs(r.s - sk) for r in rows]))
            i = min(max(i, 1), len(rows) - 2)
            ds = rows[i + 1].s - rows[i - 1].s
            dxi1 = (rows[i + 1].xi1 - rows[i - 1].xi1) / ds
            dxi2 = (rows[i + 1].xi2 - rows[i - 1].xi2) / ds
            deta1 = (rows[i + 1].eta1 - rows[i - 1].eta1) / ds
            deta2 = (rows[i + 1].eta2 - rows[i - 1].eta2) / ds
            r1 = p.lam_plus**k * dxi1 / dxi2 if dxi2 != 0 else math.inf
            r2 = p.lam_minus**k * deta1 / deta2 if deta2 != 0 else 0.0
            out[k] = (r1, r2)
        return out


class _QuadrantArc:
    """Quadrant-coordinate view of a manifold arc, oriented from its axis crossing.

    The usable parameter window is clamped to where the arc evaluates inside
    the frame ball; beyond it the pushed arc leaves the linearization zone
    (and eventually overflows).  Offsets below `t_direct` are evaluated in
    mpmath around an mp-polished crossing parameter: double arithmetic cannot
    register offsets near the ulp of the crossing parameter, which would cap
    the resolvable level range.
    """

    def __init__(self, frame: StraightenedFrame, arc: ManifoldArc, coord: Literal["xi", "eta"], x_near: float):
        self.frame = frame
        self.arc = arc
        self.coord = coord  # which coordinate vanishes at the crossing
        self._locate_crossing(x_near)
        self._polish_crossing_mp()

    def _safe(self, x: float) -> tuple[float, float] | None:
        from .mapcore import DivergenceError

        try:
            z = self.arc.point(x)
        except DivergenceError:
            return None
        if not np.isfinite(z).all() or not self.frame.contains(z):
            return None
        return self.frame.quadrant(z)

    def _quadrant_mp(self, x_mp):
        """Frame quadrant coordinates of the arc point at mp parameter x."""
        import mpmath as mp

        zx, zy = _mp_arc_point_at(self.arc, x_mp)
        yp = zy + 1
        cu = [mp.mpf(0)] + [mp.mpf(c) for c in self.frame.series_u.coefficients]
        cs = [mp.mpf(0)] + [mp.mpf(c) for c in self.frame.series_s.coefficients]
        xi_hat = yp - mp.polyval(cu[::-1], zx)
        eta_hat = yp - mp.polyval(cs[::-1], zx)
        return self.frame.sign_exp * eta_hat, self.frame.sign_con * xi_hat, (zx, zy)

    def _polish_crossing_mp(self, dps: int = 50) -> None:
        import mpmath as mp

        idx = 0 if self.coord == "xi" else 1
        with mp.workdps(dps):
            x = mp.mpf(self.x_star)
            h = mp.mpf(self.t_lo) / 4 if self.t_lo > 0 else mp.mpf(10) ** (-30)
            for _ in range(6):
                f0 = self._quadrant_mp(x)[idx]
                f1 = self._quadrant_mp(x + h)[idx]
                if f1 == f0:
                    break
                step = f0 * h / (f1 - f0)
                x -= step
                if abs(step) < mp.mpf(10) ** (-dps + 8) * max(1, abs(x)):
                    break
            self.x_star_mp = x
        # beyond this offset, forming x_star + t in binary64 keeps the level
        # residual comfortably below 1e-10
        self.t_direct = 2e11 * math.ulp(abs(self.x_star) + 1e-300)

    def _positive(self, x: float) -> bool:
        q = self._safe(x)
        return q is not None and q[0] > 0.0 and q[1] > 0.0

    def _locate_crossing(self, x_near: float) -> None:
        idx = 0 if self.coord == "xi" else 1
        span = self.arc.x_hi - self.arc.x_lo

        def f(x: float) -> float | None:
            q = self._safe(x)
            return None if q is None else q[idx]

        # walk outward from the known nearby parameter to bracket the zero
        w = max(span * 1e-9, 1e-18)
        lo = hi = x_near
        flo = fhi = f(x_near)
        if flo is None:
            raise ArithmeticError("arc anchor does not evaluate inside the frame")
        while w < 4 * span:
            lo2, hi2 = x_near - w, x_near + w
            g_lo, g_hi = f(lo2), f(hi2)
            if g_lo is not None and g_lo * flo < 0:
                lo, flo = lo2, g_lo
                break
            if g_hi is not None and g_hi * fhi < 0:
                hi, fhi = hi2, g_hi
                break
            if g_lo is not None:
                lo, flo = lo2, g_lo
            if g_hi is not None:
                hi, fhi = hi2, g_hi
            w *= 2
        if flo is None or fhi is None or flo * fhi > 0:
            raise ArithmeticError("arc does not cross its axis near the anchor")
        self.x_star = brentq(lambda x: f(x), min(lo, hi), max(lo, hi), xtol=1e-18, rtol=1e-15)
        # first-quadrant side: probe both directions over growing offsets
        self.side = 0.0
        for eps in np.geomspace(max(span * 1e-12, 1e-18), span, 40):
            if self._positive(self.x_star + eps):
                self.side = 1.0
                break
            if self._positive(self.x_star - eps):
                self.side = -1.0
                break
        if self.side == 0.0:
            raise ArithmeticError("no first-quadrant side at the axis crossing")
        # inner floor: smallest offset with both coordinates strictly positive
        t = max(span * 1e-16, 1e-18)
        while not self._positive(self.x_star + self.side * t):
            t *= 4.0
            if t > span:
                raise ArithmeticError("no positive window on the chosen side")
        self.t_lo = t
        # outer clamp: largest offset still inside the frame and the quadrant
        good = t
        while t < 4 * span:
            if not self._positive(self.x_star + self.side * t):
                break
            good = t
            t *= 1.5
        self.t_max = good

    def eval(self, t: float) -> tuple[float, float]:
        """Quadrant coordinates at seed offset t >= 0 from the crossing."""
        if t >= self.t_direct:
            q = self._safe(self.x_star + self.side * t)
            if q is None:
                raise ArithmeticError(f"arc evaluation left the frame at offset {t}")
            return q
        import mpmath as mp

        with mp.workdps(50):
            xi, eta, z = self._quadrant_mp(self.x_star_mp + mp.mpf(self.side) * mp.mpf(t))
            zf = (float(z[0]), float(z[1]))
            if not self.frame.contains(zf):
                raise ArithmeticError(f"arc evaluation left the frame at offset {t}")
            return float(xi), float(eta)

    def seed_param(self, t: float) -> float:
        return self.x_star + self.side * t

    def seed_param_mp(self, t: float):
        import mpmath as mp

        return self.x_star_mp + mp.mpf(self.side) * mp.mpf(t)


def tau_profile(
    p: MapParams,
    frame: StraightenedFrame,
    anchors: LocalAnchors,
    s_grid: int = 120,
    s_floor_rel: float = 1e-10,
) -> TauProfile:
    """Reparametrize both local pieces by the first-integral level and tabulate
    the fractional return time tau(s) = log(xi2/xi1)/log(lam)."""
    g1 = _QuadrantArc(frame, anchors.arc_u, "xi", anchors.x_on_u)  # unstable piece through q_s
    g2 = _QuadrantArc(frame, anchors.arc_s, "eta", anchors.x_on_s)  # stable piece through q_u
    eta0 = g1.eval(g1.t_lo)[1]
    xi0 = g2.eval(g2.t_lo)[0]

    log_lam = math.log(p.lam_plus)

    def logH(g: _QuadrantArc, t: float) -> float:
        xi, eta = g.eval(t)
        if xi <= 0 or eta <= 0:
            return -math.inf
        return log_first_integral(p, xi, eta)

    # common resolvable level window
    log_s_hi = min(logH(g1, g1.t_max * 0.98), logH(g2, g2.t_max * 0.98))
    log_s_lo = max(logH(g1, max(g1.t_lo, g1.t_max * s_floor_rel)), logH(g2, g2.t_lo))
    if not (log_s_lo < log_s_hi):
        raise ArithmeticError("no resolvable level window")

    def sigma(g: _QuadrantArc, target: float) -> float:
        f = lambda t: logH(g, t) - target
        t_hi = g.t_max * 0.99
        t_lo = g.t_lo
        while f(t_lo) > 0 and t_lo > 1e-300:
            t_lo *= 0.25
        t = brentq(f, t_lo, t_hi, xtol=1e-300, rtol=1e-15)
        # secant polish pushes the level residual to the evaluation floor
        best_t, best_f = t, abs(f(t))
        ft = f(t)
        for _ in range(4):
            if best_f < 1e-13:
                break
            t2 = t * (1 + 1e-9)
            ft2 = f(t2)
            if ft2 == ft:
                break
            t_new = t - ft * (t2 - t) / (ft2 - ft)
            if not (0 < t_new < g.t_max):
                break
            t, ft = t_new, f(t_new)
            if abs(ft) < best_f:
                best_t, best_f = t, abs(ft)
        return best_t

    rows: list[TauRow] = []
    for ls in np.linspace(log_s_hi, log_s_lo, s_grid):
        t1 = sigma(g1, ls)
        t2 = sigma(g2, ls)
        xi1, eta1 = g1.eval(t1)
        xi2, eta2 = g2.eval(t2)
        tau = (math.log(xi2) - math.log(xi1)) / log_lam
        rows.append(
            TauRow(
                s=math.exp(ls),
                x1=g1.seed_param(t1),
                x2=g2.seed_param(t2),
                xi1=xi1,
                eta1=eta1,
                xi2=xi2,
                eta2=eta2,
                tau=tau,
                h_residual_1=abs(log_first_integral(p, xi1, eta1) - ls),
                h_residual_2=abs(log_first_integral(p, xi2, eta2) - ls),
            )
        )
    # the resolvable range ends where the level solve hits the axis-crossing
    # noise floor and tau stalls; keep the strictly monotone head
    for i in range(len(rows) - 1):
        if rows[i + 1].tau <= rows[i].tau and rows[i].tau > 1.0:
            rows = rows[: i + 1]
            break

    # integer levels: bracket tau(s) = k between grid rows, refine by bisection
    s_levels: dict[int, float] = {}
    level_offsets: dict[int, tuple[float, float]] = {}

    def tau_of_log_s(ls: float) -> float:
        t1 = sigma(g1, ls)
        t2 = sigma(g2, ls)
        return (math.log(g2.eval(t2)[0]) - math.log(g1.eval(t1)[0])) / log_lam

    for i in range(len(rows) - 1):
        lo_tau, hi_tau = rows[i].tau, rows[i + 1].tau
        for k in range(math.ceil(min(lo_tau, hi_tau)), math.floor(max(lo_tau, hi_tau)) + 1):
            if k in s_levels or k < 1:
                continue
            ls_a, ls_b = math.log(rows[i].s), math.log(rows[i + 1].s)
            try:
                ls_k = brentq(lambda ls: tau_of_log_s(ls) - k, ls_a, ls_b, xtol=1e-13)
            except ValueError:
                continue
            s_levels[k] = math.exp(ls_k)
            level_offsets[k] = (sigma(g1, ls_k), sigma(g2, ls_k))
    return TauProfile(rows=rows, s_levels=s_levels, xi0=xi0, eta0=eta0, level_offsets=level_offsets, g1=g1, g2=g2)


# --------------------------------------------------------------------------
# homoclinic family
# --------------------------------------------------------------------------

@dataclass
class FamilyEntry:
    k: int
    z_hat: PlanarPoint
    z_tilde: PlanarPoint
    residual: float
    angle: float
    dist_to_qs: float
    dist_to_qu: float
    x1: float
    x2: float


@dataclass
class HomoclinicFamily:
    entries: list[FamilyEntry]
    q_s: PlanarPoint
    q_u: PlanarPoint
    n0: int
    skipped: list[int] = field(default_factory=list)


def _mp_arc_point_at(arc: ManifoldArc, x_mp, extra: int = 0):
    """Arc evaluation in mpmath arithmetic at an mp parameter value.

    The arc is an exact object given its float series coefficients, so this
    removes the double-rounding noise that otherwise grows along the chain
    and resolves parameter offsets below the ulp of the anchor.
    """
    import mpmath as mp

    d = arc.p.d
    coeffs = [mp.mpf(0)] + [mp.mpf(c) for c in arc.series.coefficients]
    psi = mp.polyval(coeffs[::-1], x_mp)
    bx, by = arc.series.base_point.as_floats()
    zx, zy = mp.mpf(bx) + x_mp, mp.mpf(by) + psi
    for _ in range(2 * (arc.gens + extra)):
        if arc.backward:
            s = zx - zy
            r = mp.sign(s) * mp.root(abs(s), d) if s != 0 else mp.mpf(0)
            zx, zy = -2 * zx + zy + r, 2 * zx - zy
        else:
            w = (zx + zy) ** d
            zx, zy = zy - w, zy - 2 * w
    return zx, zy


def _polish_entry_hp(
    p: MapParams, g1: "_QuadrantArc", g2: "_QuadrantArc", k: int, t1: float, t2: float, dps: int = 60
) -> tuple[PlanarPoint, PlanarPoint, float, float, float] | None:
    """High-precision solve of one family entry and its honest residual.

    Newton in mpmath on the crossing offsets, then the residual of the
    float-rounded points under exact iteration: || T^(2k)(z_hat) - z_tilde ||.
    """
    import mpmath as mp

    arc_u, arc_s = g1.arc, g2.arc
    with mp.workdps(dps):
        X1 = g1.seed_param_mp(t1)
        X2 = g2.seed_param_mp(t2)
        h1 = mp.mpf(t1) * mp.mpf(10) ** (-dps // 3)
        h2 = mp.mpf(t2) * mp.mpf(10) ** (-dps // 3)

        def F(a, b):
            zu = _mp_arc_point_at(arc_u, a, extra=k)
            zs = _mp_arc_point_at(arc_s, b)
            return mp.matrix([zu[0] - zs[0], zu[1] - zs[1]])

        converged = False
        for _ in range(12):
            f0 = F(X1, X2)
            if mp.norm(f0) < mp.mpf(10) ** (-dps + 18):
                converged = True
                break
            d1 = (F(X1 + h1, X2) - f0) / h1
            d2 = (F(X1, X2 + h2) - f0) / h2
            J = mp.matrix([[d1[0], d2[0]], [d1[1], d2[1]]])
            try:
                step = mp.lu_solve(J, f0)
            except ZeroDivisionError:
                return None
            X1 -= step[0]
            X2 -= step[1]
        if not converged and mp.norm(F(X1, X2)) > mp.mpf(10) ** (-30):
            return None
        zh = _mp_arc_point_at(arc_u, X1)
        zt = _mp_arc_point_at(arc_s, X2)
        z_hat = PlanarPoint(float(zh[0]), float(zh[1]))
        z_tilde = PlanarPoint(float(zt[0]), float(zt[1]))
        # exact forward iteration of the float-rounded point
        zx, zy = mp.mpf(z_hat.x), mp.mpf(z_hat.y)
        for _ in range(2 * k):
            w = (zx + zy) ** p.d
            zx, zy = zy - w, zy - 2 * w
        residual = float(mp.sqrt((zx - mp.mpf(z_tilde.x)) ** 2 + (zy - mp.mpf(z_tilde.y)) ** 2))
    return z_hat, z_tilde, residual, float(X1), float(X2)


def _newton_family_entry(
    p: MapParams, arc_u: ManifoldArc, arc_s: ManifoldArc, k: int, x1: float, x2: float
) -> tuple[float, float, float] | None:
    """Solve T^(2k)(arc_u(x1)) = arc_s(x2); returns (x1, x2, residual)."""
    from .mapcore import DivergenceError

    pushed = arc_u.shifted(k)
    try:
        for _ in range(60):
            zu, vu = pushed.point_and_velocity(x1)
            zs, vs = arc_s.point_and_velocity(x2)
            F = zu - zs
            res = float(np.linalg.norm(F))
            J = np.column_stack([vu, -vs])
            try:
                step = np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                return None
            x1 -= step[0]
            x2 -= step[1]
            span_u = arc_u.x_hi - arc_u.x_lo
            span_s = arc_s.x_hi - arc_s.x_lo
            if not (arc_u.x_lo - span_u <= x1 <= arc_u.x_hi + span_u):
                return None
            if not (arc_s.x_lo - span_s <= x2 <= arc_s.x_hi + span_s):
                return None
            if res < 1e-13 and float(np.linalg.norm(step)) < 1e-16 * (1 + abs(x1) + abs(x2)):
                break
        zu, vu = pushed.point_and_velocity(x1)
        zs, _ = arc_s.point_and_velocity(x2)
    except DivergenceError:
        return None
    return x1, x2, float(np.linalg.norm(zu - zs))


def homoclinic_family(
    p: MapParams,
    frame: StraightenedFrame,
    anchors: LocalAnchors,
    profile: TauProfile,
    k_range: Sequence[int] | None = None,
) -> HomoclinicFamily:
    """One polished homoclinic point per integer level of the return profile."""
    if k_range is None:
        k_range = sorted(profile.s_levels)
    qs = np.array(anchors.q_s.as_floats())
    qu = np.array(anchors.q_u.as_floats())
    entries: list[FamilyEntry] = []
    skipped: list[int] = []
    for k in k_range:
        if k not in profile.level_offsets:
            skipped.append(k)
            continue
        t1, t2 = profile.level_offsets[k]
        sol = _polish_entry_hp(p, profile.g1, profile.g2, k, t1, t2)
        if sol is None:
            skipped.append(k)
            continue
        z_hat, z_tilde, residual, x1, x2 = sol
        _, vs = anchors.arc_s.point_and_velocity(x2)
        _, vu = anchors.arc_u.shifted(k).point_and_velocity(x1)
        cosang = abs(float(vu @ vs)) / (np.linalg.norm(vu) * np.linalg.norm(vs))
        angle = math.acos(min(1.0, cosang))
        z_hat_arr = np.array(z_hat.as_floats())
        z_tilde_arr = np.array(z_tilde.as_floats())
        entries.append(
            FamilyEntry(
                k=k,
                z_hat=z_hat,
                z_tilde=z_tilde,
                residual=residual,
                angle=angle,
                dist_to_qs=float(np.linalg.norm(z_hat_arr - qs)),
                dist_to_qu=float(np.linalg.norm(z_tilde_arr - qu)),
                x1=x1,
                x2=x2,
            )
        )
    return HomoclinicFamily(entries, anchors.q_s, anchors.q_u, anchors.n0, skipped)


# --------------------------------------------------------------------------
# the plain-float crossing witness
# --------------------------------------------------------------------------

@dataclass
class LineCrossingWitness:
    phi_at_zero: float
    phi_at_probe: float
    phi_at_end: float
    convex: bool

    @property
    def two_zeros(self) -> bool:
        return self.phi_at_zero > 0 and self.phi_at_probe < 0 and self.phi_at_end > 0 and self.convex


def line_crossing_witness(p: MapParams, probe: float = 0.125) -> LineCrossingWitness:
    """Sign evaluations showing the unstable piece crosses {y = m_minus x - 1} twice."""
    m_star = float(p.m_star)
    mm = p.m_minus

    def phi(t: float) -> float:
        v = (1.0 - (m_star + 1.0) * t) ** p.d
        return (2.0 - mm) * (v + m_star * t - 1.0) - m_star * t + 2.0

    t_end = 1.0 / (m_star + 1.0)
    ts = np.linspace(0.0, t_end * (1 - 1e-9), 512)
    second = (2.0 - mm) * p.d * (p.d - 1) * (m_star + 1.0) ** 2 * (1.0 - (m_star + 1.0) * ts) ** (p.d - 2)
    return LineCrossingWitness(
        phi_at_zero=phi(0.0),
        phi_at_probe=phi(probe),
        phi_at_end=(mm + m_star) / (m_star + 1.0),
        convex=bool(np.all(second > 0)),
    )


# --------------------------------------------------------------------------
# full pipeline
# --------------------------------------------------------------------------

@dataclass
class TanglePipeline:
    p: MapParams
    series_u: GraphSeries
    series_s: GraphSeries
    frame: StraightenedFrame
    wu: PolylineCurve
    ws: PolylineCurve
    wu_pieces: list[PolylineCurve]
    ws_pieces: list[PolylineCurve]
    heteroclinic: list[IntersectionRecord]
    homoclinic: list[IntersectionRecord]
    record: IntersectionRecord
    anchors: LocalAnchors
    profile: TauProfile
    family: HomoclinicFamily

    @classmethod
    def build(
        cls,
        p: MapParams,
        wu_steps: int | None = None,
        ws_steps: int = 5,
        clip_box: tuple[float, float, float, float] = (-2.5, 2.5, -2.5, 2.5),
        refine: RefineOpts | None = None,
        frame_order: int = 24,
        candidate_pool: int = 24,
    ) -> "TanglePipeline":
        series_u = mf.local_series(p, "unstable", frame_order)
        series_s = mf.local_series(p, "stable", frame_order)
        frame = StraightenedFrame(
            p, series_u, series_s, min(0.9 * min(series_u.validity_radius, series_s.validity_radius), 0.45)
        )
        ws = mf.globalize(p, series_s, steps=ws_steps, branch=-1, clip_box=clip_box, refine=refine)
        ws_pieces = ws.crop_to_box(clip_box)

        step_plan = [wu_steps] if wu_steps is not None else [5, 6, 7]
        last_err = "no transversal homoclinic record found"
        for steps in step_plan:
            wu = mf.globalize(p, series_u, steps=steps, branch=+1, clip_box=clip_box, refine=refine)
            wu_pieces = wu.crop_to_box(clip_box)
            homo = find_intersections_multi(wu_pieces, ws_pieces, kind="homoclinic")
            _reindex_records(homo, wu, ws)
            transversal = [r for r in homo if r.angle > 1e-4 and r.contact_order_estimate == 1]
            if not transversal:
                continue
            # primary-fold crossings sit earliest along the unstable curve and
            # have the shortest excursions (smallest n0, tightest chain checks)
            best: tuple[tuple[int, float, float], IntersectionRecord, LocalAnchors] | None = None
            pool = sorted(transversal, key=lambda r: r.param_a)
            for rec in pool[:candidate_pool]:
                try:
                    anchors = push_to_local(p, rec, frame, wu, ws, series_u, series_s)
                except ArithmeticError as err:
                    last_err = str(err)
                    continue
                if anchors.chain_residual > 1e-8:
                    last_err = f"chain residual {anchors.chain_residual:.2e}"
                    continue
                key = (anchors.n0, anchors.chain_residual, -rec.angle)
                if best is None or key < best[0]:
                    best = (key, rec, anchors)
            if best is None:
                continue
            _, record, anchors = best
            frame.orient(anchors.q_s.as_floats(), anchors.q_u.as_floats())
            hetero = find_intersections_multi(
                [c.negated() for c in wu_pieces], ws_pieces, kind="heteroclinic"
            )
            profile = tau_profile(p, frame, anchors)
            family = homoclinic_family(p, frame, anchors, profile)
            return cls(
                p=p,
                series_u=series_u,
                series_s=series_s,
                frame=frame,
                wu=wu,
                ws=ws,
                wu_pieces=wu_pieces,
                ws_pieces=ws_pieces,
                heteroclinic=hetero,
                homoclinic=homo,
                record=record,
                anchors=anchors,
                profile=profile,
                family=family,
            )
        raise ArithmeticError(f"tangle pipeline failed: {last_err}")


def _reindex_records(records: Sequence[IntersectionRecord], wu: PolylineCurve, ws: PolylineCurve) -> None:
    """Point merged-piece records at whole-curve segments via their params."""
    for rec in records:
        for attr, whole in (("seg_a", wu), ("seg_b", ws)):
            param = rec.param_a if attr == "seg_a" else rec.param_b
            j = int(np.searchsorted(whole.params, param)) - 1
            j = min(max(j, 0), len(whole) - 2)
            while j > 0 and whole.params[j] > param:
                j -= 1
            while j < len(whole) - 2 and whole.params[j + 1] < param:
                j += 1
            setattr(rec, attr, j)

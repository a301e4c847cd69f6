"""Invariant manifolds of the second iterate at the cycle point (0, -1).

The local stable/unstable manifolds are computed as graph-form power series
y = Psi(x) in coordinates translated so the cycle point sits at the origin.
Globalization iterates a fundamental-domain arc of the local graph under
T^(+-2) into an adaptive polyline whose vertices remember exactly how they
were produced (generation count + seed parameter), so any piece can later be
re-evaluated or refined without accumulating interpolation error.

The module also carries the explicit comparison triangles and their
image/preimage wedges, the closed-form boundary curves, point-in-wedge
containment reports, and the nested-interval bracket that pins the stable
manifold inside the backward wedge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal, Sequence

import numpy as np
from shapely.geometry import Point as _ShapelyPoint
from shapely.geometry import Polygon as _ShapelyPolygon

from .mapcore import (
    P1,
    MapParams,
    PlanarPoint,
    apply,
    apply_inverse,
    apply_inverse_xy,
    apply_xy,
    jacobian,
    odd_root,
)

Side = Literal["stable", "unstable"]


# --------------------------------------------------------------------------
# local graph series
# --------------------------------------------------------------------------

def _poly_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    out = np.convolve(a, b)[: order + 1]
    if len(out) < order + 1:
        out = np.pad(out, (0, order + 1 - len(out)))
    return out


def _poly_pow(a: np.ndarray, k: int, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    out[0] = 1.0
    for _ in range(k):
        out = _poly_mul(out, a, order)
    return out


def _poly_compose(outer: np.ndarray, inner: np.ndarray, order: int) -> np.ndarray:
    # Horner composition; inner must have zero constant term
    assert abs(inner[0]) < 1e-300
    out = np.zeros(order + 1)
    for c in outer[::-1]:
        out = _poly_mul(out, inner, order)
        out[0] += c
    return out


def _second_iterate_series(p: MapParams, psi: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Series of the second iterate along the graph (u, Psi(u)), centered at (0,-1).

    Returns (U, V) with T^2((u, Psi(u)) + p1) = (U(u), V(u)) + p1.
    """
    n = order
    u = np.zeros(n + 1)
    u[1] = 1.0
    # first application at (u, Psi(u) - 1)
    s = u + psi
    s[0] -= 1.0
    w = _poly_pow(s, p.d, n)
    x1 = psi.copy()
    x1[0] -= 1.0
    x1 -= w
    y1 = psi.copy()
    y1[0] -= 1.0
    y1 -= 2 * w
    # second application
    s2 = x1 + y1
    w2 = _poly_pow(s2, p.d, n)
    x2 = y1 - w2
    y2 = y1 - 2 * w2
    y2[0] += 1.0
    return x2, y2


@dataclass(frozen=True)
class GraphSeries:
    """Local manifold graph y = sum c_k x^k around the cycle point (0, -1)."""

    base_point: PlanarPoint
    which: Side
    coefficients: np.ndarray  # c_1..c_N (no constant term)
    order: int
    validity_radius: float

    def __call__(self, x):
        c = np.concatenate([[0.0], self.coefficients])
        return np.polynomial.polynomial.polyval(x, c)

    def derivative(self, x):
        c = np.concatenate([[0.0], self.coefficients])
        dc = c[1:] * np.arange(1, len(c))
        return np.polynomial.polynomial.polyval(x, dc)

    def point(self, x):
        """Plane point on the local graph at parameter x."""
        bx, by = self.base_point.as_floats()
        return PlanarPoint(bx + float(x), by + float(self(x)))

    def residual(self, p: MapParams, x: np.ndarray) -> np.ndarray:
        """Graph mismatch of the true second iterate at sample parameters x.

        Stable graphs are checked forward, unstable graphs backward, so the
        image parameter stays inside the validity region.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        bx, by = self.base_point.as_floats()
        X, Y = bx + x, by + self(x)
        forward = self.which == "stable"
        for _ in range(2):
            if forward:
                X, Y = apply_xy(p, X, Y)
            else:
                X, Y = apply_inverse_xy(p, X, Y)
        u = X - bx
        return np.abs((Y - by) - self(u))


def local_series(p: MapParams, which: Side, order: int, residual_tol: float = 1e-10) -> GraphSeries:
    """Solve the graph invariance equation of the second iterate order by order.

    The order-k coefficient enters the order-k residual affinely with slope
    (other eigenvalue - own eigenvalue^k), which never vanishes for k >= 2
    because the eigenvalues straddle 1; we extract it numerically by probing
    the truncated composition at c_k = 0 and c_k = 1.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    slope = p.m_minus if which == "stable" else p.m_plus
    psi = np.zeros(order + 1)
    psi[1] = slope
    for k in range(2, order + 1):
        def res_k(ck: float) -> float:
            psi[k] = ck
            U, V = _second_iterate_series(p, psi[: k + 1], k)
            comp = _poly_compose(np.concatenate([[0.0], psi[1 : k + 1]]), U, k)
            return V[k] - comp[k]

        r0 = res_k(0.0)
        r1 = res_k(1.0)
        denom = r1 - r0
        if abs(denom) < 1e-12:
            raise ArithmeticError(f"order-{k} solve is singular")
        psi[k] = -r0 / denom
    series = GraphSeries(
        base_point=P1,
        which=which,
        coefficients=psi[1:].copy(),
        order=order,
        validity_radius=0.0,
    )
    radius = _calibrate_radius(p, series, residual_tol)
    object.__setattr__(series, "validity_radius", radius)
    return series


def _calibrate_radius(p: MapParams, series: GraphSeries, tol: float, r_max: float = 0.7) -> float:
    r = r_max
    for _ in range(200):
        x = np.linspace(-r, r, 101)
        if series.residual(p, x).max() < tol:
            return r
        r *= 0.9
    raise ArithmeticError("no validity radius found above the floor")


# --------------------------------------------------------------------------
# polyline curves with exact provenance
# --------------------------------------------------------------------------

@dataclass
class RefineOpts:
    h_min: float = 1e-9
    h_max: float = 1e-2
    theta_max_deg: float = 3.0
    max_vertices: int = 400_000


@dataclass
class PolylineCurve:
    """Oriented adaptive polyline along a globalized manifold.

    Every vertex is exactly T^(+-2*generation)(seed graph point at seed_x),
    so pieces can be re-evaluated to full precision later.  `params` is
    cumulative arclength, `smooth_breaks` marks vertices whose backward
    construction crossed the non-smooth line {y = x}.
    """

    vertices: np.ndarray
    params: np.ndarray
    tangents: np.ndarray
    provenance: np.ndarray
    seed_x: np.ndarray
    which: Side
    smooth_breaks: list[int] = field(default_factory=list)
    complete: bool = True

    def __len__(self) -> int:
        return len(self.params)

    def negated(self) -> "PolylineCurve":
        """Image under z -> -z (manifold of the opposite cycle point)."""
        return PolylineCurve(
            vertices=-self.vertices,
            params=self.params.copy(),
            tangents=-self.tangents,
            provenance=self.provenance.copy(),
            seed_x=self.seed_x.copy(),
            which=self.which,
            smooth_breaks=list(self.smooth_breaks),
            complete=self.complete,
        )

    def crop_to_box(self, box: tuple[float, float, float, float]) -> list["PolylineCurve"]:
        x0, x1, y0, y1 = box
        v = self.vertices
        keep = (v[:, 0] >= x0) & (v[:, 0] <= x1) & (v[:, 1] >= y0) & (v[:, 1] <= y1)
        return self._split_by_mask(keep)

    def _split_by_mask(self, keep: np.ndarray) -> list["PolylineCurve"]:
        pieces = []
        idx = np.flatnonzero(keep)
        if idx.size == 0:
            return pieces
        splits = np.flatnonzero(np.diff(idx) > 1)
        start = 0
        for stop in list(splits) + [idx.size - 1]:
            sel = idx[start : stop + 1]
            if sel.size >= 2:
                pieces.append(
                    PolylineCurve(
                        vertices=self.vertices[sel].copy(),
                        params=self.params[sel].copy(),
                        tangents=self.tangents[sel].copy(),
                        provenance=self.provenance[sel].copy(),
                        seed_x=self.seed_x[sel].copy(),
                        which=self.which,
                        smooth_breaks=[int(np.searchsorted(sel, b)) for b in self.smooth_breaks if b in set(sel)],
                        complete=self.complete,
                    )
                )
            start = stop + 1
        return pieces

    def to_csv(self) -> str:
        lines = ["param,x,y,tangent_x,tangent_y,provenance,break_flag"]
        breaks = set(self.smooth_breaks)
        for i in range(len(self)):
            lines.append(
                f"{self.params[i]:.17g},{self.vertices[i,0]:.17g},{self.vertices[i,1]:.17g},"
                f"{self.tangents[i,0]:.17g},{self.tangents[i,1]:.17g},{int(self.provenance[i])},"
                f"{1 if i in breaks else 0}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class _ArcSample:
    point: np.ndarray
    tangent: np.ndarray  # unit
    log_growth: float  # log of |D(chain) . seed tangent|
    sign_mask: int  # bit j = 1 iff y > x at substep level j
    escape_level: int = -1  # substep at which the chain froze, -1 if bounded

    @property
    def escaped(self) -> bool:
        return self.escape_level >= 0


class _ArcEvaluator:
    """Evaluate T^(+-2n)(seed(x)) with its tangent, the exact vertex recipe.

    Chains whose orbit leaves `escape_radius` are frozen at the last point:
    such vertices only ever bound coarse, unrefined chords far outside any
    region of interest.  The sign of y - x is recorded at every substep
    level; two adjacent vertices with different masks bracket a crossing of
    the non-smooth line by one of the intermediate curves.
    """

    def __init__(self, p: MapParams, series: GraphSeries, escape_radius: float = 1e8):
        self.p = p
        self.series = series
        self.backward = series.which == "stable"
        self.escape_radius = escape_radius

    def __call__(self, x: float, gen: int) -> _ArcSample:
        p = self.p
        z = self.series.point(x)
        t = np.array([1.0, self.series.derivative(x)])
        norm = np.linalg.norm(t)
        t /= norm
        log_growth = 0.0
        mask = 1 if float(z.y) > float(z.x) else 0
        step: Callable = apply_inverse if self.backward else apply
        for j in range(2 * gen):
            if max(abs(float(z.x)), abs(float(z.y))) > self.escape_radius:
                return _ArcSample(np.array(z.as_floats()), t, log_growth, mask, j)
            z_new = step(p, z)
            if self.backward:
                Jb = jacobian(p, z_new, iterate=1).astype(float)
                det = Jb[0, 0] * Jb[1, 1] - Jb[0, 1] * Jb[1, 0]
                if abs(det) < 1e-280:
                    # image point sits on the anti-diagonal, where the map is
                    # not a diffeomorphism; the pulled-back tangent degenerates
                    # to the horizontal direction
                    t = np.array([math.copysign(1.0, t[0]) if t[0] else 1.0, 0.0]) * np.linalg.norm(t) * 1e16
                else:
                    t = np.array(
                        [Jb[1, 1] * t[0] - Jb[0, 1] * t[1], -Jb[1, 0] * t[0] + Jb[0, 0] * t[1]]
                    ) / det
            else:
                t = jacobian(p, z, iterate=1).astype(float) @ t
            z = z_new
            if float(z.y) > float(z.x):
                mask |= 1 << (j + 1)
            n = np.linalg.norm(t)
            if n > 0:
                log_growth += math.log(n)
                t = t / n
        return _ArcSample(np.array(z.as_floats()), t, log_growth, mask, -1)


def _fundamental_domain(p: MapParams, series: GraphSeries, branch: int, seed_radius: float | None) -> tuple[float, float]:
    """Seed parameter interval [x0, x1] mapping once across itself.

    The image endpoint must stay inside the series validity radius, so the
    seed starts one expansion factor below it.
    """
    stretch = p.lam_plus if series.which == "unstable" else 1.0 / p.lam_minus
    if seed_radius is None:
        seed_radius = 0.9 * series.validity_radius / stretch
    x0 = branch * seed_radius
    z1 = series.point(x0)
    for _ in range(2):
        z1 = apply_inverse(p, z1) if series.which == "stable" else apply(p, z1)
    x1 = float(z1.x) - float(series.base_point.x)
    if not (abs(x1) > abs(x0)) or x1 * x0 < 0:
        raise ArithmeticError("fundamental domain collapsed; shrink seed_radius")
    if abs(x1) > series.validity_radius:
        raise ArithmeticError("fundamental domain leaves the validity radius")
    return x0, x1


def _in_box(pt: np.ndarray, box) -> bool:
    x0, x1, y0, y1 = box
    return x0 <= pt[0] <= x1 and y0 <= pt[1] <= y1


def globalize(
    p: MapParams,
    series: GraphSeries,
    steps: int,
    refine: RefineOpts | None = None,
    branch: int = 1,
    seed_radius: float | None = None,
    clip_box: tuple[float, float, float, float] | None = None,
) -> PolylineCurve:
    """Iterate a fundamental-domain arc of the local graph into a polyline.

    branch +1/-1 selects the side of the manifold.  Refinement bisects in
    seed-parameter space whenever image spacing or turning bounds are
    violated; inserted vertices are recomputed through the full map chain
    rather than interpolated.  With clip_box set, segments that have left
    the box are kept as coarse chords instead of being refined, which keeps
    the vertex count proportional to the in-box arclength.
    """
    opts = refine or RefineOpts()
    evalr = _ArcEvaluator(p, series)
    x0, x1 = _fundamental_domain(p, series, branch, seed_radius)
    theta_max = math.radians(opts.theta_max_deg)

    pts: list[np.ndarray] = []
    tans: list[np.ndarray] = []
    gens: list[int] = []
    seeds: list[float] = []
    masks: list[int] = []
    complete = True

    pad_box = None
    if clip_box is not None:
        bx0, bx1, by0, by1 = clip_box
        padx, pady = 0.75 * (bx1 - bx0), 0.75 * (by1 - by0)
        pad_box = (bx0 - padx, bx1 + padx, by0 - pady, by1 + pady)

    def needs_split(a: _ArcSample, b: _ArcSample, xa: float, xb: float) -> bool:
        if abs(xb - xa) <= 4e-16 * max(abs(xa), abs(xb)):
            return False
        if a.escaped and b.escaped:
            # chains leaving at different times bracket an escape frontier
            return a.escape_level != b.escape_level
        if a.escaped or b.escaped:
            # bisect onto the frontier so the bounded side is fully resolved
            inside = b if a.escaped else a
            return pad_box is None or _in_box(inside.point, pad_box)
        if pad_box is not None and not (_in_box(a.point, pad_box) or _in_box(b.point, pad_box)):
            return False
        gap = float(np.linalg.norm(b.point - a.point))
        # arclength estimate from the chain growth factors catches folds whose
        # endpoints happen to land close together
        est = math.exp(min(a.log_growth, b.log_growth)) * abs(xb - xa)
        if max(gap, est) <= opts.h_min:
            return False
        if gap > opts.h_max or est > opts.h_max:
            return True
        if series.which == "stable" and a.sign_mask != b.sign_mask and gap > 10 * opts.h_min:
            return True
        angle = math.acos(min(1.0, max(-1.0, float(a.tangent @ b.tangent))))
        return angle > theta_max

    for gen in range(steps + 1):
        base = np.linspace(x0, x1, 17)
        arc_pts: list[tuple[float, _ArcSample]] = []
        rec_first = evalr(base[0], gen)
        # explicit stack keeps refinement O(n) in the emitted vertex count
        stack = [(base[i], base[i + 1], evalr(base[i + 1], gen)) for i in range(len(base) - 1)][::-1]
        if gen == 0:
            arc_pts.append((base[0], rec_first))
        prev: tuple[float, _ArcSample] = (base[0], rec_first)
        budget_hit = False
        while stack:
            xa, xb, rec_b = stack.pop()
            if len(pts) + len(arc_pts) >= opts.max_vertices:
                budget_hit = True
                break
            if needs_split(prev[1], rec_b, xa, xb):
                mid = 0.5 * (xa + xb)
                if mid != xa and mid != xb:
                    stack.append((mid, xb, rec_b))
                    stack.append((xa, mid, evalr(mid, gen)))
                    continue
            arc_pts.append((xb, rec_b))
            prev = (xb, rec_b)
        if budget_hit:
            complete = False
        for x, rec in arc_pts:
            pts.append(rec.point)
            tans.append(rec.tangent)
            gens.append(gen)
            seeds.append(x)
            masks.append(rec.sign_mask)
        if budget_hit:
            break
    # smooth breaks: a mask change between adjacent vertices means one of the
    # intermediate backward curves crossed {y=x} there
    breaks: list[int] = []
    if series.which == "stable":
        breaks = [
            i
            for i in range(1, len(masks))
            if masks[i] != masks[i - 1] and gens[i] == gens[i - 1]
        ]
    verts = np.asarray(pts)
    # frontier bisection can emit coincident vertices; drop zero-length segments
    seglen = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    keep = np.concatenate([[True], seglen > 0.0])
    if not keep.all():
        index_map = np.cumsum(keep) - 1
        breaks = sorted({int(index_map[b]) for b in breaks})
        verts = verts[keep]
        tans = [t for t, k in zip(tans, keep) if k]
        gens = [g for g, k in zip(gens, keep) if k]
        seeds = [s for s, k in zip(seeds, keep) if k]
        seglen = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    # chords through escape excursions would blow the cumulative parameter
    # past float resolution for everything after them; clamp their share
    params = np.concatenate([[0.0], np.cumsum(np.minimum(seglen, 1.0))])
    return PolylineCurve(
        vertices=verts,
        params=params,
        tangents=np.asarray(tans),
        provenance=np.asarray(gens, dtype=int),
        seed_x=np.asarray(seeds),
        which=series.which,
        smooth_breaks=breaks,
        complete=complete,
    )


def crossing_index(curve: PolylineCurve, line: Literal["y=x", "y=-x"]) -> int | None:
    """Index of the first segment crossing (or vertex landing on) the line."""
    v = curve.vertices
    g = v[:, 1] - v[:, 0] if line == "y=x" else v[:, 1] + v[:, 0]
    sign = np.sign(g)
    hits = np.flatnonzero((sign[:-1] * sign[1:] < 0) | (sign[1:] == 0))
    return int(hits[0]) if hits.size else None


def crop_until_line(curve: PolylineCurve, line: Literal["y=x", "y=-x"]) -> PolylineCurve:
    """Curve up to (and including) its first crossing of a diagonal line."""
    idx = crossing_index(curve, line)
    if idx is None:
        raise ValueError(f"curve never reaches {line}")
    sel = slice(0, idx + 2)
    return PolylineCurve(
        vertices=curve.vertices[sel].copy(),
        params=curve.params[sel].copy(),
        tangents=curve.tangents[sel].copy(),
        provenance=curve.provenance[sel].copy(),
        seed_x=curve.seed_x[sel].copy(),
        which=curve.which,
        smooth_breaks=[b for b in curve.smooth_breaks if b <= idx + 1],
        complete=curve.complete,
    )


# --------------------------------------------------------------------------
# triangles and boundary curves
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TriangleRegion:
    vertices: tuple[PlanarPoint, PlanarPoint, PlanarPoint]
    label: Literal["D", "Dhat"]

    def as_array(self) -> np.ndarray:
        return np.array([v.as_floats() for v in self.vertices])


def triangle(p: MapParams, label: Literal["D", "Dhat"]) -> TriangleRegion:
    """Comparison triangle attached to a cycle point.

    D fans out of (0,-1) with edge slopes spanning [m_plus, 7/2] and its far
    vertices on {y=-x}; Dhat fans out of (0,1) with slopes spanning
    [m_hat_star, m_minus] and its far vertices on {y=x}.
    """
    if label == "D":
        apex = PlanarPoint(0.0, -1.0)
        xs = [1.0 / (p.m_plus + 1.0), 1.0 / (float(p.m_star) + 1.0)]
        verts = (apex, PlanarPoint(xs[0], -xs[0]), PlanarPoint(xs[1], -xs[1]))
        return TriangleRegion(verts, "D")
    apex = PlanarPoint(0.0, 1.0)
    xs = [1.0 / (1.0 - p.m_minus), 1.0 / (1.0 - float(p.m_hat_star))]
    verts = (apex, PlanarPoint(xs[0], xs[0]), PlanarPoint(xs[1], xs[1]))
    return TriangleRegion(verts, "Dhat")


_CurveKind = Literal["gamma", "Gamma_hat", "gamma_hat", "diag_image"]


def _curve_domain(p: MapParams, kind: _CurveKind, m: float) -> tuple[float, float]:
    if kind == "gamma":
        if not (p.m_plus <= m <= float(p.m_star) + 1e-12):
            raise ValueError(f"slope {m} outside [m_plus, m_star]")
        return 0.0, 1.0 / (m + 1.0)
    if kind in ("Gamma_hat", "gamma_hat"):
        if not (float(p.m_hat_star) - 1e-12 <= m <= p.m_minus):
            raise ValueError(f"slope {m} outside [m_hat_star, m_minus]")
        return 0.0, 1.0 / (1.0 - m)
    # diag_image: the top edge of the forward image of Dhat
    return 1.0 / (1.0 - float(p.m_hat_star)), 1.0 / (1.0 - p.m_minus)


def _curve_xy(p: MapParams, kind: _CurveKind, m: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = p.d
    if kind == "gamma":
        w = ((m + 1.0) * t - 1.0) ** d
        return m * t - 1.0 - w, m * t - 1.0 - 2.0 * w
    if kind == "gamma_hat":
        w = ((m + 1.0) * t + 1.0) ** d
        return m * t + 1.0 - w, m * t + 1.0 - 2.0 * w
    if kind == "Gamma_hat":
        r = np.sign((1.0 - m) * t - 1.0) * np.abs((1.0 - m) * t - 1.0) ** (1.0 / d)
        return (m - 2.0) * t + 1.0 + r, (2.0 - m) * t - 1.0
    w = (2.0 * t) ** d
    return t - w, t - 2.0 * w


def _curve_tangent(p: MapParams, kind: _CurveKind, m: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = p.d
    if kind == "gamma":
        dw = d * (m + 1.0) * ((m + 1.0) * t - 1.0) ** (d - 1)
        return m - dw, m - 2.0 * dw
    if kind == "gamma_hat":
        dw = d * (m + 1.0) * ((m + 1.0) * t + 1.0) ** (d - 1)
        return m - dw, m - 2.0 * dw
    if kind == "Gamma_hat":
        base = (1.0 - m) * t - 1.0
        dr = (1.0 - m) / d * np.abs(base) ** ((1.0 - d) / d)
        return (m - 2.0) + dr, np.full_like(t, 2.0 - m)
    dw = 2.0 * d * (2.0 * t) ** (d - 1)
    return 1.0 - dw, 1.0 - 2.0 * dw


def critical_parameter(p: MapParams, m: float) -> float:
    """Parameter of the unique x-extremum on the backward-image boundary curve."""
    ratio = (1.0 - m) / (p.d * (2.0 - m))
    return (1.0 - ratio ** (p.d / (p.d - 1.0))) / (1.0 - m)


def boundary_curve(p: MapParams, m: float, kind: _CurveKind, samples: int = 2000) -> PolylineCurve:
    """Closed-form sampled boundary curve with analytic tangents.

    The backward-image boundary is sampled in the root variable
    sigma = ((1-m)t - 1)^(1/d), in which both components are polynomials;
    this resolves the vertical-tangent endpoint that uniform-t sampling
    renders with a d-th-root singularity.
    """
    d = p.d
    if kind == "Gamma_hat":
        _curve_domain(p, kind, m)  # slope validation
        sigma = np.linspace(-1.0, 0.0, samples)
        sc = -((1.0 - m) / (d * (2.0 - m))) ** (1.0 / (d - 1.0))
        sigma = np.unique(np.concatenate([sigma, [sc]]))
        ts = (1.0 + sigma**d) / (1.0 - m)
        X = (m - 2.0) * ts + 1.0 + sigma
        Y = (2.0 - m) * ts - 1.0
        dt = d * sigma ** (d - 1) / (1.0 - m)
        dX = (m - 2.0) * dt + 1.0
        dY = (2.0 - m) * dt
    else:
        t0, t1 = _curve_domain(p, kind, m)
        # cosine nodes: the wedges are thinnest near the curve endpoints, so
        # chord sagitta must vanish fast there
        u = 0.5 * (1.0 - np.cos(np.linspace(0.0, math.pi, samples)))
        ts = t0 + (t1 - t0) * u
        X, Y = _curve_xy(p, kind, m, ts)
        dX, dY = _curve_tangent(p, kind, m, ts)
    tan = np.column_stack([np.broadcast_to(dX, ts.shape), np.broadcast_to(dY, ts.shape)]).astype(float)
    norms = np.linalg.norm(tan, axis=1)
    norms[norms == 0] = 1.0
    tan /= norms[:, None]
    verts = np.column_stack([X, Y])
    params = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(verts, axis=0), axis=1))])
    return PolylineCurve(
        vertices=verts,
        params=params,
        tangents=tan,
        provenance=np.zeros(len(ts), dtype=int),
        seed_x=ts,
        which="unstable",
        smooth_breaks=[],
    )


# --------------------------------------------------------------------------
# wedge regions and containment
# --------------------------------------------------------------------------

@dataclass
class WedgeRegion:
    """Curvilinear wedge (image or preimage of a triangle), as a polygon."""

    label: str
    boundary: np.ndarray  # closed polygon vertices (first != last)
    _polygon: _ShapelyPolygon = field(repr=False, default=None)

    def __post_init__(self):
        if self._polygon is None:
            self._polygon = _ShapelyPolygon(self.boundary)
            if not self._polygon.is_valid:
                self._polygon = self._polygon.buffer(0)

    def signed_distance(self, xy) -> float:
        pt = _ShapelyPoint(float(xy[0]), float(xy[1]))
        dist = self._polygon.exterior.distance(pt) if self._polygon.geom_type == "Polygon" else self._polygon.boundary.distance(pt)
        return dist if self._polygon.covers(pt) else -dist


def forward_wedge(p: MapParams, samples: int = 400) -> WedgeRegion:
    """Forward image of triangle D: attached to (0,1), closed by a {y=x} arc."""
    left = boundary_curve(p, p.m_plus, "gamma", samples).vertices
    right = boundary_curve(p, float(p.m_star), "gamma", samples).vertices
    ring = np.vstack([left, right[::-1][1:-1]])
    return WedgeRegion("T(D)", ring)


def backward_wedge(p: MapParams, samples: int = 400) -> WedgeRegion:
    """Backward image of triangle Dhat: attached to (0,-1), closed on {y=-x}."""
    left = boundary_curve(p, p.m_minus, "Gamma_hat", samples).vertices
    right = boundary_curve(p, float(p.m_hat_star), "Gamma_hat", samples).vertices
    ring = np.vstack([left, right[::-1][1:-1]])
    return WedgeRegion("T^-1(Dhat)", ring)


@dataclass
class ContainmentReport:
    region_label: str
    margins: np.ndarray
    verdict: Literal["Inside", "Outside", "Undecided"]
    worst_margin: float
    worst_index: int  # index into the original curve


def containment_report(
    curve: PolylineCurve,
    region: WedgeRegion,
    trim: tuple[float, float] = (0.0, 0.0),
    resolution: float = 1e-11,
) -> ContainmentReport:
    """Signed-distance containment of curve vertices in a wedge region.

    trim = (start, end) arclength to drop at either end: the pieces of
    interest start tangent to the region boundary and terminate on it, where
    margins sit below any sampled-boundary resolution.
    """
    s0, s1 = curve.params[0] + trim[0], curve.params[-1] - trim[1]
    keep = np.flatnonzero((curve.params >= s0) & (curve.params <= s1))
    if keep.size == 0:
        raise ValueError("no vertices left after trimming")
    margins = np.array([region.signed_distance(curve.vertices[i]) for i in keep])
    worst = int(np.argmin(margins))
    if margins[worst] > resolution:
        verdict = "Inside"
    elif margins[worst] < -resolution:
        verdict = "Outside"
    else:
        verdict = "Undecided"
    return ContainmentReport(region.label, margins, verdict, float(margins[worst]), int(keep[worst]))


# --------------------------------------------------------------------------
# nested interval bracket for the stable manifold
# --------------------------------------------------------------------------

def segment_distance(curve: PolylineCurve, z) -> float:
    """Distance from a point to the polyline (segment-level)."""
    pt = np.asarray([float(z[0]), float(z[1])])
    a = curve.vertices[:-1]
    b = curve.vertices[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom[denom == 0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", pt - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - pt, axis=1)))


def refined_curve_distance(p: MapParams, series: GraphSeries, curve: PolylineCurve, z, rounds: int = 3) -> float:
    """Distance from a point to the underlying manifold curve.

    Finds the nearest polyline vertex, then re-evaluates the exact arc
    T^(+-2g)(seed(x)) on successively tighter seed windows around it.
    """
    pt = np.asarray([float(z[0]), float(z[1])])
    i = int(np.argmin(np.linalg.norm(curve.vertices - pt, axis=1)))
    lo = curve.seed_x[max(i - 1, 0)] if curve.provenance[max(i - 1, 0)] == curve.provenance[i] else curve.seed_x[i]
    hi = curve.seed_x[min(i + 1, len(curve) - 1)] if curve.provenance[min(i + 1, len(curve) - 1)] == curve.provenance[i] else curve.seed_x[i]
    gen = int(curve.provenance[i])
    evalr = _ArcEvaluator(p, series)
    best = float(np.linalg.norm(curve.vertices[i] - pt))
    if lo == hi:
        return best
    for _ in range(rounds):
        xs = np.linspace(lo, hi, 33)
        pts = np.array([evalr(x, gen).point for x in xs])
        dists = np.linalg.norm(pts - pt, axis=1)
        k = int(np.argmin(dists))
        best = min(best, float(dists[k]))
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    return best


@dataclass
class BracketResult:
    intervals: list[tuple[float, float]]
    diameters: list[float]
    limit_point: PlanarPoint
    segment: tuple[PlanarPoint, PlanarPoint]


def default_crossing_segment(p: MapParams) -> tuple[PlanarPoint, PlanarPoint]:
    """Horizontal slice of the backward wedge at y = 0 (joins both boundaries)."""
    a_minus = -(1.0 / (2.0 - p.m_minus)) ** (1.0 / p.d)
    a_plus = -(1.0 / (2.0 - float(p.m_hat_star))) ** (1.0 / p.d)
    return PlanarPoint(a_minus, 0.0), PlanarPoint(a_plus, 0.0)


def _triangle_side_test(tri: np.ndarray, X: np.ndarray, Y: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Vectorized closed point-in-triangle test."""
    inside = np.ones_like(np.asarray(X, dtype=float), dtype=bool)
    for i in range(3):
        x0, y0 = tri[i]
        x1, y1 = tri[(i + 1) % 3]
        x2, y2 = tri[(i + 2) % 3]
        nx, ny = y1 - y0, x0 - x1  # normal of edge 0->1
        ref = nx * (x2 - x0) + ny * (y2 - y0)
        val = nx * (X - x0) + ny * (Y - y0)
        inside &= val * np.sign(ref) >= -tol * abs(ref)
    return inside


def nested_bracket(
    p: MapParams,
    segment: tuple[PlanarPoint, PlanarPoint] | None = None,
    n: int = 5,
    scan: int = 2048,
) -> BracketResult:
    """Shrinking parameter bracket of points whose double-iterates stay in the wedge.

    Follows the nested-set construction: I_j = points of the segment whose
    first j double-steps remain inside the backward wedge.  The bracket hull
    contracts onto the stable manifold crossing.  Membership in the wedge is
    decided exactly through the forward image (z is in the preimage wedge iff
    T(z) lies in the source triangle), which stays sharp even where iterates
    approach the wedge apex tangentially.
    """
    tri = triangle(p, "Dhat").as_array()
    if segment is None:
        a, b = default_crossing_segment(p)
    else:
        a, b = segment
    ax, ay = a.as_floats()
    bx, by = b.as_floats()

    def orbits_inside(ts: np.ndarray, j: int) -> np.ndarray:
        X = ax + ts * (bx - ax)
        Y = ay + ts * (by - ay)
        ok = np.ones_like(ts, dtype=bool)
        with np.errstate(invalid="ignore", over="ignore"):
            for _ in range(j):
                X, Y = apply_xy(p, X, Y)
                X, Y = apply_xy(p, X, Y)
                ok &= np.isfinite(X) & np.isfinite(Y)
                X = np.where(ok, X, 0.0)
                Y = np.where(ok, Y, 0.0)
                # z in T^-1(Dhat) iff T(z) in Dhat
                tX, tY = apply_xy(p, X, Y)
                ok &= _triangle_side_test(tri, tX, tY)
        return ok

    def orbit_inside(t: float, j: int) -> bool:
        return bool(orbits_inside(np.array([t]), j)[0])

    lo, hi = 0.0, 1.0
    intervals: list[tuple[float, float]] = [(lo, hi)]
    diameters = [hi - lo]
    for j in range(1, n + 1):
        ts = np.linspace(lo, hi, scan)
        good = orbits_inside(ts, j)
        if not good.any():
            raise ArithmeticError(f"bracket emptied at level {j}; segment misses the wedge core")
        first, last = np.flatnonzero(good)[[0, -1]]
        # sharpen the hull endpoints by bisection against the inside test
        new_lo = ts[first]
        if first > 0:
            s0, s1 = ts[first - 1], ts[first]
            for _ in range(60):
                mid = 0.5 * (s0 + s1)
                if orbit_inside(mid, j):
                    s1 = mid
                else:
                    s0 = mid
            new_lo = s1
        new_hi = ts[last]
        if last < scan - 1:
            s0, s1 = ts[last], ts[last + 1]
            for _ in range(60):
                mid = 0.5 * (s0 + s1)
                if orbit_inside(mid, j):
                    s0 = mid
                else:
                    s1 = mid
            new_hi = s0
        lo, hi = new_lo, new_hi
        intervals.append((lo, hi))
        diameters.append(hi - lo)
    mid = 0.5 * (lo + hi)
    limit = PlanarPoint(ax + mid * (bx - ax), ay + mid * (by - ay))
    return BracketResult(intervals, diameters, limit, (a, b))

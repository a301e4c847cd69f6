"""Basin-of-attraction classification, rendering, and topology probes.

Convergence to the origin is non-hyperbolic (the Jacobian there has an
eigenvalue 1 along the diagonal), so a one-shot radius test is unreliable:
a point counts as converged only after it enters an inner ball and stays
there for a dwell window with non-increasing norm.  Everything is pure and
deterministic; rendering tiles merge positionally, so worker counts cannot
change the output bytes.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

from .manifolds import PolylineCurve
from .mapcore import MapParams, PlanarPoint, apply_xy

Label = Literal["Converged", "Diverged", "Undecided"]

CONVERGED, DIVERGED, UNDECIDED = 0, 1, 2
_GRAY = {CONVERGED: 200, DIVERGED: 30, UNDECIDED: 120}
_RGB = {
    CONVERGED: (215, 60, 50),
    DIVERGED: (25, 25, 35),
    UNDECIDED: (120, 120, 120),
}
_CURVE_RGB = {"stable": (60, 90, 230), "unstable": (245, 215, 60)}
_LABEL_NAME = {CONVERGED: "Converged", DIVERGED: "Diverged", UNDECIDED: "Undecided"}


@dataclass(frozen=True)
class ClassifyConfig:
    r_in: float = 1e-2
    r_out: float = 1e6
    dwell: int = 50
    budget: int = 5000

    def __post_init__(self):
        if not (self.r_in < 1):
            raise ValueError("r_in must be < 1")
        if not (self.r_out > 10):
            raise ValueError("r_out must be > 10")
        if self.dwell < 1:
            raise ValueError("dwell must be >= 1")


@dataclass(frozen=True)
class Viewport:
    x_min: float = -2.0
    x_max: float = 2.0
    y_min: float = -2.0
    y_max: float = 2.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("empty viewport range")
        if self.width < 1 or self.height < 1:
            raise ValueError("empty pixel grid")

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        dx = (self.x_max - self.x_min) / self.width
        dy = (self.y_max - self.y_min) / self.height
        xs = self.x_min + (np.arange(self.width) + 0.5) * dx
        ys = self.y_min + (np.arange(self.height) + 0.5) * dy
        return xs, ys

    def to_pixel(self, x: float, y: float) -> tuple[int, int]:
        dx = (self.x_max - self.x_min) / self.width
        dy = (self.y_max - self.y_min) / self.height
        col = int((x - self.x_min) / dx)
        row = int((self.y_max - y) / dy)  # row 0 at the top
        return row, col


def classify_batch(p: MapParams, X, Y, cfg: ClassifyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized orbit classification; returns (labels, iteration counts).

    The iteration count is the step at which the verdict was triggered (the
    ball-entry step for converged points, the escape step for diverged) and
    the budget for undecided points.
    """
    X = np.array(X, dtype=float)
    Y = np.array(Y, dtype=float)
    labels = np.full(X.shape, UNDECIDED, dtype=np.uint8)
    iters = np.full(X.shape, cfg.budget, dtype=np.int32)
    active = np.ones(X.shape, dtype=bool)
    streak = np.zeros(X.shape, dtype=np.int32)
    entered_at = np.zeros(X.shape, dtype=np.int32)
    prev_norm2 = np.full(X.shape, np.inf)
    r_in2 = cfg.r_in**2
    r_out2 = cfg.r_out**2
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(cfg.budget + 1):
            norm2 = X * X + Y * Y
            bad = active & (~np.isfinite(norm2) | (norm2 >= r_out2))
            labels[bad] = DIVERGED
            iters[bad] = step
            active &= ~bad
            inside = active & (norm2 <= r_in2)
            fresh = inside & (streak == 0)
            entered_at[fresh] = step
            ok_norm = norm2 <= prev_norm2 * (1 + 1e-12)
            streak = np.where(inside & ok_norm, streak + 1, 0)
            entered_at = np.where(streak > 0, entered_at, 0)
            done = active & (streak >= cfg.dwell)
            labels[done] = CONVERGED
            iters[done] = entered_at[done]
            active &= ~done
            if not active.any() or step == cfg.budget:
                break
            prev_norm2 = norm2
            Xn, Yn = apply_xy(p, X, Y)
            X = np.where(active, Xn, X)
            Y = np.where(active, Yn, Y)
    return labels, iters


def classify(p: MapParams, z, cfg: ClassifyConfig = ClassifyConfig()) -> tuple[Label, int]:
    """Single-point classification (same code path as the batch)."""
    zf = z.as_floats() if isinstance(z, PlanarPoint) else (float(z[0]), float(z[1]))
    labels, iters = classify_batch(p, np.array([zf[0]]), np.array([zf[1]]), cfg)
    return _LABEL_NAME[int(labels[0])], int(iters[0])


@dataclass
class ClassGrid:
    labels: np.ndarray  # (height, width) uint8, row 0 at the top
    iterations: np.ndarray
    viewport: Viewport
    cfg: ClassifyConfig

    def histogram(self) -> dict[str, int]:
        return {name: int((self.labels == code).sum()) for code, name in _LABEL_NAME.items()}


def _render_rows(args) -> np.ndarray:
    p, cfg, xs, ys_chunk = args
    Xg, Yg = np.meshgrid(xs, ys_chunk)
    labels, iters = classify_batch(p, Xg, Yg, cfg)
    return labels, iters


def render(
    p: MapParams,
    viewport: Viewport = Viewport(),
    cfg: ClassifyConfig = ClassifyConfig(),
    workers: int = 1,
) -> ClassGrid:
    """Per-pixel classification at pixel centers.

    The row order is top-to-bottom (image convention).  Tiles are merged by
    position, so the result is independent of the worker count.
    """
    xs, ys = viewport.pixel_centers()
    ys_img = ys[::-1]  # top row first
    chunks = np.array_split(np.arange(viewport.height), max(1, min(workers * 4, viewport.height)))
    jobs = [(p, cfg, xs, ys_img[idx]) for idx in chunks if len(idx)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_render_rows, jobs))
    else:
        results = [_render_rows(j) for j in jobs]
    labels = np.vstack([r[0] for r in results])
    iters = np.vstack([r[1] for r in results])
    return ClassGrid(labels=labels, iterations=iters, viewport=viewport, cfg=cfg)


# --------------------------------------------------------------------------
# topology probes
# --------------------------------------------------------------------------

@dataclass
class ConnectivityReport:
    converged_components: int
    largest_touches_frame: bool
    holes_in_largest: int


_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def connectivity_probe(grid: ClassGrid) -> ConnectivityReport:
    """4-connected component census of the converged set.

    Unboundedness proxy: the largest component touches the frame.  Simple
    connectivity proxy: no non-converged component is fully enclosed (every
    one reaches the frame).
    """
    conv = grid.labels == CONVERGED
    lab, n = ndimage.label(conv, structure=_FOUR)
    if n == 0:
        return ConnectivityReport(0, False, 0)
    sizes = ndimage.sum_labels(np.ones_like(lab), lab, index=np.arange(1, n + 1))
    main = int(np.argmax(sizes)) + 1
    main_mask = lab == main
    touches = bool(
        main_mask[0, :].any() or main_mask[-1, :].any() or main_mask[:, 0].any() or main_mask[:, -1].any()
    )
    comp_lab, m = ndimage.label(~conv, structure=_FOUR)
    holes = 0
    for i in range(1, m + 1):
        mask = comp_lab == i
        if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
            continue
        holes += 1
    return ConnectivityReport(int(n), touches, holes)


# --------------------------------------------------------------------------
# image emission
# --------------------------------------------------------------------------

def to_pgm(grid: ClassGrid) -> bytes:
    h, w = grid.labels.shape
    img = np.zeros((h, w), dtype=np.uint8)
    for code, gray in _GRAY.items():
        img[grid.labels == code] = gray
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def overlay(grid: ClassGrid, curves: Sequence[PolylineCurve]) -> bytes:
    """PPM with manifold polylines rasterized over the basin image."""
    h, w = grid.labels.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for code, rgb in _RGB.items():
        img[grid.labels == code] = rgb
    vp = grid.viewport
    dx = (vp.x_max - vp.x_min) / vp.width
    dy = (vp.y_max - vp.y_min) / vp.height
    step = 0.5 * min(dx, dy)
    for curve in curves:
        color = _CURVE_RGB.get(curve.which, (255, 255, 255))
        v = curve.vertices
        for i in range(len(v) - 1):
            a, b = v[i], v[i + 1]
            if not (np.isfinite(a).all() and np.isfinite(b).all()):
                continue
            seg = np.linalg.norm(b - a)
            if seg > 1.0:  # escape chords are not curve geometry
                continue
            n = max(2, int(seg / step) + 1)
            for t in np.linspace(0.0, 1.0, n):
                x, y = a + t * (b - a)
                if vp.x_min <= x <= vp.x_max and vp.y_min <= y <= vp.y_max:
                    row, col = vp.to_pixel(x, y)
                    if 0 <= row < h and 0 <= col < w:
                        img[row, col] = color
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def boundary_band(grid: ClassGrid) -> np.ndarray:
    """Pixels where the converged set meets its complement."""
    conv = grid.labels == CONVERGED
    dil = ndimage.binary_dilation(conv, structure=_FOUR)
    ero = ndimage.binary_erosion(conv, structure=_FOUR)
    return dil & ~ero


def boundary_proximity(grid: ClassGrid, curve: PolylineCurve, band_px: float = 2.0) -> tuple[float, int]:
    """Fraction of in-viewport curve vertices within band_px of the boundary band."""
    band = boundary_band(grid)
    if not band.any():
        return 0.0, 0
    dist = ndimage.distance_transform_edt(~band)
    vp = grid.viewport
    total = 0
    close = 0
    for x, y in curve.vertices:
        if not (vp.x_min <= x <= vp.x_max and vp.y_min <= y <= vp.y_max):
            continue
        row, col = vp.to_pixel(x, y)
        row = min(max(row, 0), grid.labels.shape[0] - 1)
        col = min(max(col, 0), grid.labels.shape[1] - 1)
        total += 1
        if dist[row, col] <= band_px:
            close += 1
    return (close / total if total else 0.0), total


def stats_json(grid: ClassGrid, report: ConnectivityReport) -> str:
    payload = {
        "viewport": {
            "x_min": grid.viewport.x_min,
            "x_max": grid.viewport.x_max,
            "y_min": grid.viewport.y_min,
            "y_max": grid.viewport.y_max,
            "width": grid.viewport.width,
            "height": grid.viewport.height,
        },
        "classify": {
            "r_in": grid.cfg.r_in,
            "r_out": grid.cfg.r_out,
            "dwell": grid.cfg.dwell,
            "budget": grid.cfg.budget,
        },
        "histogram": grid.histogram(),
        "converged_components": report.converged_components,
        "largest_touches_frame": report.largest_touches_frame,
        "holes_in_largest": report.holes_in_largest,
        "label_sha256": hashlib.sha256(grid.labels.tobytes()).hexdigest(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)

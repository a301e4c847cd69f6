"""Independent brute-force oracles used by the test suite.

These deliberately re-derive results through the dumbest correct method so
that the production implementations are checked against something that does
not share their code paths.
"""
import numpy as np

from tanglekit.manifolds import PolylineCurve


def polyline_from_points(points: np.ndarray, which: str = "unstable") -> PolylineCurve:
    points = np.asarray(points, dtype=float)
    seg = np.diff(points, axis=0)
    tangents = np.vstack([seg, seg[-1:]])
    norms = np.linalg.norm(tangents, axis=1)
    norms[norms == 0] = 1.0
    tangents = tangents / norms[:, None]
    params = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])
    return PolylineCurve(
        vertices=points,
        params=params,
        tangents=tangents,
        provenance=np.zeros(len(points), dtype=int),
        seed_x=np.linspace(0.0, 1.0, len(points)),
        which=which,
    )


def brute_force_crossings(a: PolylineCurve, b: PolylineCurve) -> list[tuple[float, float, np.ndarray]]:
    """All proper segment crossings by exhaustive all-pairs solve.

    Returns (param_a, param_b, point) triples sorted by (param_a, param_b).
    """
    hits = []
    av, bv = a.vertices, b.vertices
    for i in range(len(av) - 1):
        p0, p1 = av[i], av[i + 1]
        r = p1 - p0
        for j in range(len(bv) - 1):
            q0, q1 = bv[j], bv[j + 1]
            s = q1 - q0
            denom = r[0] * s[1] - r[1] * s[0]
            if denom == 0.0:
                continue
            dq = q0 - p0
            t = (dq[0] * s[1] - dq[1] * s[0]) / denom
            u = (dq[0] * r[1] - dq[1] * r[0]) / denom
            if 0.0 <= t <= 1.0 and 0.0 <= u < 1.0:
                pt = p0 + t * r
                pa = a.params[i] + t * (a.params[i + 1] - a.params[i])
                pb = b.params[j] + u * (b.params[j + 1] - b.params[j])
                hits.append((pa, pb, pt))
    hits.sort(key=lambda h: (h[0], h[1]))
    return hits


def finite_difference_jacobian(f, z, h=1e-7):
    z = np.asarray(z, dtype=float)
    n = len(z)
    cols = []
    for i in range(n):
        dz = np.zeros(n)
        dz[i] = h * (1 + abs(z[i]))
        cols.append((np.asarray(f(z + dz)) - np.asarray(f(z - dz))) / (2 * dz[i]))
    return np.column_stack(cols)

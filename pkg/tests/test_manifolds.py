import math

import numpy as np
import pytest

import tanglekit as tk
import tanglekit.mapcore as mc
from tanglekit import manifolds as mf


class TestLocalSeries:
    def test_linear_coefficient_matches_eigen_slope(self, p3):
        for which, slope in (("stable", p3.m_minus), ("unstable", p3.m_plus)):
            s = mf.local_series(p3, which, 1)
            assert abs(s.coefficients[0] - slope) < 1e-12

    def test_order8_residual_below_tolerance(self, p3):
        for which in ("stable", "unstable"):
            s = mf.local_series(p3, which, 8)
            xs = np.linspace(-s.validity_radius, s.validity_radius, 100)
            # independent oracle: direct second-iterate evaluation on the graph
            assert s.residual(p3, xs).max() < 1e-10

    @pytest.mark.parametrize("d", [5, 7, 9])
    def test_other_degrees_solve(self, d):
        p = tk.MapParams.from_degree(d)
        s = mf.local_series(p, "unstable", 8)
        assert abs(s.coefficients[0] - p.m_plus) < 1e-12
        assert s.validity_radius > 0

    def test_higher_order_widens_radius(self, p3):
        r8 = mf.local_series(p3, "stable", 8).validity_radius
        r24 = mf.local_series(p3, "stable", 24).validity_radius
        assert r24 > r8


class TestGlobalize:
    def test_tangency_at_base_point(self, p3, series_u, series_s):
        # one-sided secant slope at the cycle point approaches the eigen slope
        for series, slope in ((series_u, p3.m_plus), (series_s, p3.m_minus)):
            secants = []
            for x in np.geomspace(1e-8, 1e-6, 8):
                pt = series.point(x)
                secants.append((float(pt.y) + 1.0) / float(pt.x))
            assert abs(secants[0] - slope) < 1e-6
        curve = mf.globalize(p3, series_u, steps=0, branch=+1)
        v = curve.vertices[0] - np.array([0.0, -1.0])
        assert abs(v[1] / v[0] - p3.m_plus) < 1e-3

    def test_params_strictly_increasing(self, wu_curve, ws_curve):
        for c in (wu_curve, ws_curve):
            assert np.all(np.diff(c.params) > 0)

    def test_polyline_fidelity(self, p3, wu_curve, ws_curve):
        # re-applying the double step to a vertex lands within h_max of the
        # next-generation part of the curve
        for curve in (wu_curve, ws_curve):
            backward = curve.which == "stable"
            h_max = 1e-2
            checked = 0
            for i in range(0, len(curve), max(1, len(curve) // 400)):
                if curve.provenance[i] >= curve.provenance.max():
                    continue
                if max(abs(curve.vertices[i])) > 2.0:
                    continue
                img = mc.iterate_double(p3, tuple(curve.vertices[i]), 1, backward=backward)
                ix, iy = img.as_floats()
                if max(abs(ix), abs(iy)) > 2.4:
                    continue
                assert mf.segment_distance(curve, (ix, iy)) < h_max
                checked += 1
            assert checked > 20

    def test_unstable_piece_reaches_line(self, wu_curve):
        idx = mf.crossing_index(wu_curve, "y=x")
        assert idx is not None
        x = wu_curve.vertices[idx][0]
        # the crossing window of the forward wedge on {y=x}
        assert 0.22 < x < 0.31

    def test_odd_symmetry_of_manifolds(self, p3, wu_curve):
        # a point of the mirrored curve, pushed through the map, stays on the
        # mirrored curve: W^u of (0,1) is the negation of W^u of (0,-1)
        neg = wu_curve.negated()
        i = len(neg) // 3
        z = neg.vertices[i]
        img = mc.iterate_double(p3, tuple(z), 1).as_floats()
        if max(abs(img[0]), abs(img[1])) < 2.0:
            assert mf.segment_distance(neg, img) < 1e-2

    def test_stable_first_break_at_line_crossing(self, ws_curve):
        assert ws_curve.smooth_breaks, "backward curve must record breaks"
        b0 = ws_curve.smooth_breaks[0]
        v = ws_curve.vertices[b0]
        assert abs(v[1] - v[0]) < 1e-2, "first break sits at the first {y=x} crossing"

    def test_turning_angle_bounded_off_breaks(self, ws_curve):
        t = ws_curve.tangents
        cosang = np.einsum("ij,ij->i", t[:-1], t[1:]).clip(-1, 1)
        ang = np.degrees(np.arccos(cosang))
        breaks = set(ws_curve.smooth_breaks)
        in_box = np.all(np.abs(ws_curve.vertices) < 2.4, axis=1)
        bad = [
            i
            for i in np.flatnonzero(ang > 3.0)
            if i not in breaks and i + 1 not in breaks and in_box[i] and in_box[i + 1]
        ]
        # escape-frontier chords are exempt as well: only count segments whose
        # neighbours are resolved
        seg = np.linalg.norm(np.diff(ws_curve.vertices, axis=0), axis=1)
        bad = [i for i in bad if seg[i] > 1e-9]
        assert len(bad) == 0


class TestTriangles:
    def test_forward_triangle_d3(self, p3):
        tri = mf.triangle(p3, "D")
        arr = tri.as_array()
        assert np.allclose(arr[0], [0.0, -1.0])
        assert np.allclose(arr[2], [2.0 / 9.0, -2.0 / 9.0])

    def test_backward_triangle_slopes(self, p3):
        tri = mf.triangle(p3, "Dhat")
        arr = tri.as_array()
        assert np.allclose(arr[0], [0.0, 1.0])
        # far vertices on {y=x} with edge slopes spanning [m_hat_star, m_minus]
        for v, m in ((arr[1], p3.m_minus), (arr[2], float(p3.m_hat_star))):
            assert abs(v[0] - v[1]) < 1e-14
            slope = (v[1] - 1.0) / v[0]
            assert abs(slope - m) < 1e-12

    def test_apex_is_cycle_point(self):
        for d in (3, 5, 9):
            p = tk.MapParams.from_degree(d)
            assert mf.triangle(p, "D").vertices[0] == tk.PlanarPoint(0.0, -1.0)
            assert mf.triangle(p, "Dhat").vertices[0] == tk.PlanarPoint(0.0, 1.0)


class TestBoundaryCurves:
    def test_backward_edge_lands_on_antidiagonal(self, p3):
        for m in (p3.m_minus, float(p3.m_hat_star)):
            c = mf.boundary_curve(p3, m, "Gamma_hat", samples=50)
            end = c.vertices[-1]
            assert abs(end[0] + 1.0 / (1.0 - m)) < 1e-12
            assert abs(end[1] - 1.0 / (1.0 - m)) < 1e-12

    def test_forward_hat_curve_starts_at_cycle_point(self, p3):
        c = mf.boundary_curve(p3, p3.m_minus, "gamma_hat", samples=50)
        assert np.allclose(c.vertices[0], [0.0, -1.0], atol=1e-15)

    def test_diag_image_sign_value(self, p3):
        # xi(0.4) = 0.4 - 0.8^3 = -0.112
        c = mf.boundary_curve(p3, float(p3.m_hat_star), "diag_image", samples=11)
        assert abs(c.vertices[0][0] - (-0.112)) < 1e-15
        assert np.all(c.vertices[:, 0] < 0)
        assert np.all(c.vertices[:, 1] < 0)

    def test_critical_parameter_is_x_extremum(self, p3):
        m = p3.m_minus
        tc = mf.critical_parameter(p3, m)
        assert 0 < tc < 1.0 / (1.0 - m)
        c = mf.boundary_curve(p3, m, "Gamma_hat", samples=4000)
        i = int(np.argmin(c.vertices[:, 0]))
        assert abs(c.seed_x[i] - tc) < 1e-3

    def test_slope_range_enforced(self, p3):
        with pytest.raises(ValueError):
            mf.boundary_curve(p3, 1.0, "Gamma_hat")
        with pytest.raises(ValueError):
            mf.boundary_curve(p3, 0.0, "gamma")

    def test_backward_boundary_convexity(self, p3):
        # x as a function of y along the backward boundary has positive
        # discrete second differences for every legal slope
        for m in np.linspace(float(p3.m_hat_star), p3.m_minus, 7):
            c = mf.boundary_curve(p3, m, "Gamma_hat", samples=400)
            x, y = c.vertices[:, 0], c.vertices[:, 1]
            dy = np.diff(y)
            assert np.all(dy > 0)
            slope = np.diff(x) / dy
            assert np.all(np.diff(slope) > 0)

    def test_forward_hat_concavity(self, p3):
        # y as a function of x along the forward image curve is concave
        # (the parametrization runs right to left, so order by x first)
        for m in np.linspace(float(p3.m_hat_star), p3.m_minus, 7):
            c = mf.boundary_curve(p3, m, "gamma_hat", samples=400)
            order = np.argsort(c.vertices[:, 0])
            x, y = c.vertices[order, 0], c.vertices[order, 1]
            dx = np.diff(x)
            keep = dx > 1e-8  # the slope is vertical at the right endpoint
            slope = np.diff(y)[keep] / dx[keep]
            assert np.all(np.diff(slope) < 1e-9)


class TestContainment:
    def test_unstable_piece_in_forward_wedge(self, p3, wu_curve):
        piece = mf.crop_until_line(wu_curve, "y=x").negated()
        region = mf.forward_wedge(p3, samples=4000)
        rep = mf.containment_report(piece, region, trim=(0.02, 1e-3))
        assert rep.verdict == "Inside"
        assert rep.worst_margin > 0

    def test_stable_piece_in_backward_wedge(self, p3, ws_curve):
        piece = mf.crop_until_line(ws_curve, "y=-x")
        region = mf.backward_wedge(p3, samples=4000)
        rep = mf.containment_report(piece, region, trim=(0.02, 1e-3))
        assert rep.verdict == "Inside"
        assert rep.worst_margin > 0

    def test_far_exterior_point(self, p3):
        region = mf.forward_wedge(p3)
        far = mf.PolylineCurve(
            vertices=np.array([[10.0, 10.0], [10.0, 10.1]]),
            params=np.array([0.0, 0.1]),
            tangents=np.zeros((2, 2)),
            provenance=np.zeros(2, dtype=int),
            seed_x=np.zeros(2),
            which="stable",
        )
        rep = mf.containment_report(far, region)
        assert rep.verdict == "Outside"
        assert rep.worst_margin < 0


class TestNestedBracket:
    def test_levels_nest_and_shrink(self, p3):
        br = mf.nested_bracket(p3, n=5)
        for (a0, b0), (a1, b1) in zip(br.intervals, br.intervals[1:]):
            assert a1 >= a0 - 1e-15 and b1 <= b0 + 1e-15
        assert all(d1 < d0 for d0, d1 in zip(br.diameters, br.diameters[1:]))

    def test_contraction_dominates_four_fifths(self, p3):
        br = mf.nested_bracket(p3, n=5)
        assert br.diameters[5] / br.diameters[0] < 0.8**5

    def test_level_zero_is_input(self, p3):
        br = mf.nested_bracket(p3, n=1)
        assert br.intervals[0] == (0.0, 1.0)

    def test_limit_lies_on_stable_manifold(self, p3, series_s, ws_curve):
        br = mf.nested_bracket(p3, n=6)
        d = mf.refined_curve_distance(p3, series_s, ws_curve, br.limit_point.as_floats(), rounds=6)
        assert d < 1e-6

    def test_bad_segment_raises(self, p3):
        seg = (tk.PlanarPoint(5.0, 5.0), tk.PlanarPoint(6.0, 5.0))
        with pytest.raises(ArithmeticError):
            mf.nested_bracket(p3, segment=seg, n=3)


class TestCsvExport:
    def test_header_and_roundtrip(self, wu_curve):
        text = wu_curve.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "param,x,y,tangent_x,tangent_y,provenance,break_flag"
        assert len(lines) == len(wu_curve) + 1
        first = lines[1].split(",")
        assert float(first[0]) == wu_curve.params[0]
        assert int(first[6]) in (0, 1)

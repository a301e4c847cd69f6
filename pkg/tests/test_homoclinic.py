import math

import numpy as np
import pytest

import tanglekit as tk
import tanglekit.mapcore as mc
from tanglekit import homoclinic as hc
from tanglekit import manifolds as mf

from oracles import brute_force_crossings, polyline_from_points


class TestFinderBasics:
    def test_disjoint_curves_empty(self):
        a = polyline_from_points([[0, 0], [1, 0], [2, 0.2]])
        b = polyline_from_points([[0, 5], [1, 5.2], [2, 5.1]])
        assert hc.find_intersections(a, b) == []

    def test_single_crossing(self):
        a = polyline_from_points([[-1, 0], [1, 0]])
        b = polyline_from_points([[0, -1], [0, 1]])
        recs = hc.find_intersections(a, b)
        assert len(recs) == 1
        r = recs[0]
        assert abs(r.point.x) < 1e-15 and abs(r.point.y) < 1e-15
        assert abs(r.angle - math.pi / 2) < 1e-12
        assert r.contact_order_estimate == 1
        assert r.residual < 1e-9

    def test_identity_shift_rejected(self):
        ts = np.linspace(0, 2 * np.pi, 400)
        pts = np.column_stack([ts, np.sin(ts)])
        a = polyline_from_points(pts)
        b = polyline_from_points(pts + 1e-12)
        recs = hc.find_intersections(a, b)
        assert recs == []

    def test_near_tangency_gets_higher_order(self):
        xs = np.linspace(-1, 1, 2001)
        a = polyline_from_points(np.column_stack([xs, xs**3]))
        b = polyline_from_points(np.column_stack([xs, np.zeros_like(xs)]))
        recs = hc.find_intersections(a, b)
        assert recs, "tangential contact should still produce a record"
        assert any(r.contact_order_estimate >= 2 for r in recs)

    def test_records_reverify_at_params(self, tangle):
        def eval_at(curve, s):
            i = int(np.searchsorted(curve.params, s))
            i = min(max(i, 1), len(curve) - 1)
            t = (s - curve.params[i - 1]) / (curve.params[i] - curve.params[i - 1])
            return curve.vertices[i - 1] + t * (curve.vertices[i] - curve.vertices[i - 1])

        for rec in tangle.homoclinic[:50]:
            pa = eval_at(tangle.wu, rec.param_a)
            pb = eval_at(tangle.ws, rec.param_b)
            pt = np.array(rec.point.as_floats())
            tol = rec.residual + 1e-12
            assert np.linalg.norm(pa - pt) <= tol + 1e-9
            assert np.linalg.norm(pb - pt) <= tol + 1e-9


class TestFinderAgainstOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = rng.integers(20, 120)
        a = polyline_from_points(np.cumsum(rng.normal(size=(n, 2)) * 0.3, axis=0))
        m = rng.integers(20, 120)
        b = polyline_from_points(np.cumsum(rng.normal(size=(m, 2)) * 0.3, axis=0))
        recs = hc.find_intersections(a, b, identity_separation=0.0)
        truth = brute_force_crossings(a, b)
        assert len(recs) == len(truth)
        for r, (pa, pb, pt) in zip(recs, truth):
            assert abs(r.param_a - pa) < 1e-9
            assert abs(r.param_b - pb) < 1e-9
            assert np.hypot(r.point.x - pt[0], r.point.y - pt[1]) < 1e-9


class TestHeteroclinic:
    def test_record_in_expected_band(self, tangle):
        xs = [r.point.x for r in tangle.heteroclinic if r.contact_order_estimate == 1]
        assert any(-0.66 < x < -0.33 for x in xs)

    def test_negation_symmetry(self, p3, tangle):
        # negated records of (Wu of (0,1), Ws of (0,-1)) are records of
        # (Wu of (0,-1), Ws of (0,1))
        mirrored = hc.find_intersections_multi(
            tangle.wu_pieces, [c.negated() for c in tangle.ws_pieces], kind="heteroclinic"
        )
        pts = np.array([r.point.as_floats() for r in mirrored])
        count = 0
        for rec in tangle.heteroclinic[:40]:
            target = -np.array(rec.point.as_floats())
            d = np.min(np.linalg.norm(pts - target, axis=1))
            assert d < 1e-8
            count += 1
        assert count > 0

    def test_line_crossing_witness(self, p3):
        w = hc.line_crossing_witness(p3)
        assert w.phi_at_zero == 2.0
        assert w.phi_at_probe < 0
        assert abs(w.phi_at_probe - (-0.018736)) < 1e-5
        assert w.phi_at_end > 0
        assert abs(w.phi_at_end - (p3.m_minus + 3.5) / 4.5) < 1e-12
        assert w.convex and w.two_zeros

    @pytest.mark.parametrize("d", [5, 7, 9])
    def test_witness_other_degrees(self, d):
        w = hc.line_crossing_witness(tk.MapParams.from_degree(d))
        assert w.two_zeros


class TestLocalAnchors:
    def test_chain_closes(self, p3, tangle):
        a = tangle.anchors
        img = mc.iterate_double(p3, a.q_u, a.n0)
        assert math.hypot(img.x - a.q_s.x, img.y - a.q_s.y) < 1e-8

    def test_anchors_on_local_sheets(self, tangle):
        frame = tangle.frame
        xi_hat_s, eta_hat_s = frame.theta(tangle.anchors.q_s.as_floats())
        xi_hat_u, eta_hat_u = frame.theta(tangle.anchors.q_u.as_floats())
        assert abs(eta_hat_s) < 1e-6  # on the stable graph
        assert abs(xi_hat_u) < 1e-6  # on the unstable graph
        assert abs(xi_hat_s) > 1e-8 and abs(eta_hat_u) > 1e-8

    def test_n0_positive_and_small(self, tangle):
        assert 1 <= tangle.anchors.n0 <= 10


class TestFrame:
    def test_linearization_matrix(self, p3, tangle):
        f = tangle.frame
        h = 1e-8
        base = np.array([0.0, -1.0])
        J = np.zeros((2, 2))
        for col, dz in enumerate(np.eye(2) * h):
            plus = f.theta(base + dz)
            minus = f.theta(base - dz)
            J[:, col] = (np.array(plus) - np.array(minus)) / (2 * h)
        expected = np.array([[-p3.m_plus, 1.0], [-p3.m_minus, 1.0]])
        assert np.allclose(J, expected, atol=1e-6)

    def test_graphs_map_to_axes(self, p3, tangle):
        f = tangle.frame
        for x in np.linspace(-0.5, 0.5, 21) * f.radius:
            zu = f.series_u.point(x)
            zs = f.series_s.point(x)
            assert abs(f.theta(zu.as_floats())[0]) < 1e-8
            assert abs(f.theta(zs.as_floats())[1]) < 1e-8

    def test_inverse_round_trip(self, tangle):
        f = tangle.frame
        rng = np.random.default_rng(5)
        for _ in range(50):
            xi_hat, eta_hat = rng.uniform(-0.05, 0.05, 2)
            z = f.theta_inverse(xi_hat, eta_hat)
            back = f.theta(z.as_floats())
            assert abs(back[0] - xi_hat) < 1e-11
            assert abs(back[1] - eta_hat) < 1e-11

    def test_ball_avoids_line(self, tangle):
        f = tangle.frame
        # closest point of {y=x} to (0,-1) is at distance 1/sqrt(2)
        assert f.radius < 1 / math.sqrt(2)


class TestFirstIntegral:
    def test_zero_on_axes(self, p3):
        assert hc.first_integral(p3, 0.0, 0.7) == 0.0
        assert hc.first_integral(p3, 0.7, 0.0) == 0.0

    def test_unit_value(self, p3):
        assert abs(hc.first_integral(p3, 1.0, 1.0) - 1.0) < 1e-15

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0, 7.0])
    def test_invariance_under_interpolated_flow(self, p3, tau):
        xi, eta = 0.3, 0.2
        h0 = hc.first_integral(p3, xi, eta)
        h1 = hc.first_integral(p3, p3.lam_plus**tau * xi, p3.lam_minus**tau * eta)
        assert abs(h1 / h0 - 1.0) < 1e-12

    def test_negative_rejected(self, p3):
        with pytest.raises(ValueError):
            hc.first_integral(p3, -0.1, 0.2)


class TestTauProfile:
    def test_levels_solved_exactly(self, p3, tangle):
        prof = tangle.profile
        assert len(prof.s_levels) >= 3
        for k, sk in prof.s_levels.items():
            t1, t2 = prof.level_offsets[k]
            xi1, eta1 = prof.g1.eval(t1)
            xi2, eta2 = prof.g2.eval(t2)
            assert abs(hc.log_first_integral(p3, xi1, eta1) - math.log(sk)) < 1e-9
            tau = (math.log(xi2) - math.log(xi1)) / math.log(p3.lam_plus)
            assert abs(tau - k) < 1e-9

    def test_table_monotone_and_on_level(self, tangle):
        rows = tangle.profile.rows
        taus = [r.tau for r in rows]
        assert all(b > a for a, b in zip(taus, taus[1:]))
        ss = [r.s for r in rows]
        assert all(b < a for a, b in zip(ss, ss[1:]))
        assert max(max(r.h_residual_1, r.h_residual_2) for r in rows) < 1e-10

    def test_trend_ratios_match_limit_signs(self, p3, tangle):
        trend = tangle.profile.trend_ratios(p3)
        ks = sorted(trend)
        first = [trend[k][0] for k in ks]
        second = [abs(trend[k][1]) for k in ks]
        assert all(b > a for a, b in zip(first, first[1:]))
        assert all(b < a for a, b in zip(second, second[1:]))


class TestFamily:
    def test_three_consecutive_levels_close(self, tangle):
        entries = {e.k: e for e in tangle.family.entries}
        ks = sorted(entries)
        runs = [k for k in ks if k + 1 in entries and k + 2 in entries]
        assert runs, "need at least three consecutive levels"
        k0 = runs[0]
        for k in (k0, k0 + 1, k0 + 2):
            assert entries[k].residual < 1e-8

    def test_distances_strictly_decreasing(self, tangle):
        es = sorted(tangle.family.entries, key=lambda e: e.k)
        for a, b in zip(es, es[1:]):
            assert b.dist_to_qs < a.dist_to_qs
            assert b.dist_to_qu < a.dist_to_qu

    def test_angles_transversal(self, tangle):
        assert all(e.angle > 1e-4 for e in tangle.family.entries)

    def test_entries_are_homoclinic_points(self, p3, tangle):
        # independent check: z_hat iterated 2k steps lands on z_tilde, and
        # both lie near the polyline manifolds
        e = sorted(tangle.family.entries, key=lambda x: x.k)[0]
        img = mc.iterate_double(p3, e.z_hat, e.k)
        assert math.hypot(img.x - e.z_tilde.x, img.y - e.z_tilde.y) < 1e-7
        assert mf.segment_distance(tangle.ws, e.z_tilde.as_floats()) < 1e-2

    def test_family_against_dense_polyline_oracle(self, p3, tangle):
        # the k=1 entry should appear as a crossing of the pushed unstable
        # arc polyline with the stable arc polyline
        e = sorted(tangle.family.entries, key=lambda x: x.k)[0]
        prof = tangle.profile
        t1, _ = prof.level_offsets[e.k]
        g1 = prof.g1
        ts = np.linspace(0.2 * t1, 5 * t1, 800)
        pts_u = []
        for t in ts:
            x = g1.seed_param(t)
            pts_u.append(g1.arc.shifted(e.k).point(x))
        pushed = polyline_from_points(np.array(pts_u))
        d = mf.segment_distance(pushed, e.z_tilde.as_floats())
        assert d < 1e-6

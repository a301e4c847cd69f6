import math

import pytest

import tanglekit.certificates as ct
from tanglekit.intervals import Interval

DEGREES = [3, 5, 7, 9]


class TestSpectralBounds:
    def test_all_degrees_proven(self):
        for r in ct.certify_spectral_bounds(DEGREES):
            assert r.status == "Proven", r.as_dict()

    def test_d3_encloses_closed_form(self):
        import mpmath

        mpmath.mp.prec = 128
        lm = ct.lam_minus_iv(3)
        truth = 29 - 8 * mpmath.sqrt(13)
        assert lm.lo <= truth <= lm.hi
        assert lm.lo - 1 / 9 > 0

    def test_d3_m_plus_width(self):
        mp_iv = ct.m_plus_iv(3)
        import mpmath

        mpmath.mp.prec = 128
        truth = 6 / (mpmath.sqrt(13) - 1)
        assert mp_iv.lo <= truth <= mp_iv.hi
        assert mp_iv.width < 1e-12

    def test_large_degree_window(self):
        lm = ct.lam_minus_iv(99)
        assert 1 / 9 < lm.lo and lm.hi < 0.12

    def test_monotonicity_claims_present(self):
        reports = ct.certify_spectral_bounds(DEGREES)
        names = [c.name for c in reports[-1].claims]
        assert "lam_minus_decreasing" in names
        assert "m_plus_decreasing" in names


class TestGammaEstimates:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven(self, d):
        r = ct.certify_gamma_estimates(d)
        assert r.status == "Proven", r.as_dict()
        assert r.margin > 0

    def test_x_at_zero_is_exactly_zero(self):
        # endpoint fact, checked in exact rational arithmetic
        from fractions import Fraction

        for d in DEGREES:
            m = Fraction(-d, d - 1)
            t = Fraction(0)
            assert m * t + 1 - ((m + 1) * t + 1) ** d == 0
        # and the interval evaluation still encloses it
        x0 = ct._curve_x(Interval.exact(-1.25), Interval.exact(0.0), 5)
        assert x0.contains(0.0) and x0.width < 1e-14

    def test_y_prime_margin_beats_analytic_floor(self):
        r = ct.certify_gamma_estimates(3)
        claim = next(c for c in r.claims if c.name == "y_prime_positive_at_hat_slope")
        # oracle from the proof: (d/(d-1)) * (-1 + 2/sqrt(e))
        floor = (3 / 2) * (-1 + 2 / math.exp(0.5))
        assert floor > 0
        assert claim.margin >= floor * 0.9


class TestWhDInequality:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven(self, d):
        r = ct.certify_whD_inequality(d)
        assert r.status == "Proven", r.as_dict()

    def test_d3_value_scale(self):
        # direct evaluation: 1 - 0.512 + (0.4 - 0.512)(1 + 3.5^(1/3))
        r = ct.certify_whD_inequality(3)
        main = next(c for c in r.claims if c.name == "main_inequality_positive")
        assert abs(main.margin - 0.2059) < 5e-4

    def test_terminal_constant_enclosure(self):
        r = ct.certify_whD_inequality(3)
        c = next(cl for cl in r.claims if cl.name == "terminal_constant_positive")
        assert c.proven and c.margin > 0
        # the displayed approximate value
        assert round(c.margin, 2) == 0.02
        assert abs(c.margin - 0.01770116) < 1e-7

    def test_aux_power_bound_d3(self):
        r = ct.certify_whD_inequality(3)
        c = next(cl for cl in r.claims if cl.name == "power_term_below_6_7_cubed")
        # (2/2.5)^3 = 0.512 < (6/7)^3 = 0.6297...
        assert abs(c.margin - (216 / 343 - 0.512)) < 1e-12


class TestSegmentBounds:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven(self, d):
        r = ct.certify_segment_bounds(d)
        assert r.status == "Proven", r.as_dict()

    def test_d3_a_plus_value(self):
        a_plus = -Interval.ratio(2, 7).root_odd(3)
        assert a_plus.contains(-((2 / 7) ** (1 / 3)))
        assert abs(a_plus.mid + 0.6586337560) < 1e-9

    def test_a_minus_strictly_left(self):
        r = ct.certify_segment_bounds(3)
        c = next(cl for cl in r.claims if cl.name == "a_minus_below_a_plus")
        assert c.proven
        # a_- ~ -0.67149, a_+ ~ -0.65863
        assert abs(c.margin - 0.01286) < 2e-4


class TestContraction:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven(self, d):
        r = ct.certify_contraction(d)
        assert r.status == "Proven", r.as_dict()

    def test_chain_value_d3(self):
        # |m_hat| * (1/3) * (7/2)^(1/3) = 0.7591... <= 4/5
        r = ct.certify_contraction(3)
        c = next(cl for cl in r.claims if cl.name == "slope_times_bound_le_4_5")
        assert abs((0.8 - c.margin) - 0.759147) < 1e-5

    def test_larger_degree_larger_margin(self):
        m3 = ct.certify_contraction(3).margin
        m9 = ct.certify_contraction(9).margin
        assert m9 > m3


class TestNonresonance:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven_to_order_50(self, d):
        r = ct.certify_nonresonance(d, 50)
        assert r.status == "Proven"
        assert r.subdivisions >= 2 * sum(1 for n in range(51) for m in range(51 - n) if n + m >= 2)

    def test_diagonal_family_is_power_of_d_squared(self):
        # n = m + 1 reduces to d^(2m) which is at least 9
        assert 3 ** 2 >= 9

    def test_order_cap(self):
        with pytest.raises(ValueError):
            ct.certify_nonresonance(3, 500)

    def test_exact_sweep_small_order(self):
        # independent oracle at tiny order: enumerate lam^n mu^m in floats
        import tanglekit as tk

        p = tk.MapParams.from_degree(3)
        lam, mu = p.lam_plus, p.lam_minus
        for n in range(0, 8):
            for m in range(0, 8 - n):
                if n + m < 2:
                    continue
                assert abs(lam**n * mu**m - lam) > 1e-6 * lam
                assert abs(lam**n * mu**m - mu) > 1e-6
        r = ct.certify_nonresonance(3, 7)
        assert r.status == "Proven"


class TestLineCrossing:
    @pytest.mark.parametrize("d", DEGREES)
    def test_proven(self, d):
        r = ct.certify_line_crossing(d)
        assert r.status == "Proven", r.as_dict()

    def test_phi_values_d3(self):
        r = ct.certify_line_crossing(3)
        neg = next(c for c in r.claims if c.name == "phi_at_one_eighth_negative")
        # phi(1/8) = (2 - m_minus)((7/16)^3 - 9/16) + 25/16 ~ -0.018736
        assert abs(neg.margin - 0.018736) < 1e-5
        end = next(c for c in r.claims if c.name == "phi_at_right_end_positive")
        # (m_minus + 7/2)/(7/2 + 1)
        assert abs(end.margin - (-1.3027756 + 3.5) / 4.5) < 1e-6


class TestSuite:
    def test_full_suite_proven_and_deterministic(self):
        r1 = ct.run_suite((3, 5))
        r2 = ct.run_suite((3, 5))
        assert all(r.status == "Proven" for r in r1)
        assert [(r.id, r.d, r.margin, r.subdivisions) for r in r1] == [
            (r.id, r.d, r.margin, r.subdivisions) for r in r2
        ]

import math

import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import brentq

from curvyaqm.errors import DomainError, SaturationError, UnsupportedOperation
from curvyaqm.model import RENO_K, Clamp, CurvyRed, DesignPoint, TrafficModel, anchored_curve, drop_prob
from curvyaqm.steady_state import (
    bisect_increasing,
    clamp_point,
    design_crossing_load,
    drop_to_mark,
    ecn_clamp_point,
    generate_family,
    load_from_delay,
    log_grid,
    mark_to_drop_equiv,
    saturation_load,
    solve_delay,
    solve_loss,
    solve_point,
)

DP = DesignPoint(0.020, 0.02)
TM20 = TrafficModel.reno(base_rtt=0.020)
TM10 = TrafficModel.reno(base_rtt=0.010)
L_STAR_20 = math.sqrt(0.02) * 2


def oracle_delay(base_rtt, u, scale, load):
    """Root of (D_R + d) (d/D_q)^(u/2) = L D_R by Brent's method."""
    return brentq(lambda d: (base_rtt + d) * (d / scale) ** (u / 2) - load * base_rtt,
                  0.0, scale, xtol=1e-16, rtol=1e-14)


class TestLoadFromDelay:
    def test_design_crossing(self):
        curve = CurvyRed(2, 0.141421)
        assert load_from_delay(TM20, curve, 0.020) == pytest.approx(0.28284, abs=5e-6)

    def test_linear_curve(self):
        # direct evaluation: 0.0675 * sqrt(0.0475) / 0.02
        assert load_from_delay(TM20, CurvyRed(1, 1.0), 0.0475) == pytest.approx(0.7355641967, rel=1e-9)

    def test_vanishes_at_zero(self):
        assert load_from_delay(TM20, CurvyRed(2, 0.14), 1e-12) < 1e-9

    @pytest.mark.parametrize("d", [0, -0.01, 0.2])
    def test_domain(self, d):
        with pytest.raises(DomainError):
            load_from_delay(TM20, CurvyRed(2, 0.14), d)

    def test_clamp_rejected(self):
        with pytest.raises(UnsupportedOperation):
            load_from_delay(TM20, Clamp(0.02), 0.01)

    @given(st.floats(0.1, 10), st.floats(1e-6, 1), st.floats(1e-6, 1))
    def test_strictly_increasing(self, u, a, b):
        assume(abs(a - b) > 1e-6)
        curve = CurvyRed(u, 0.1)
        lo, hi = sorted((a * 0.1, b * 0.1))
        assert load_from_delay(TM20, curve, lo) < load_from_delay(TM20, curve, hi)


class TestSolveDelay:
    def test_design_crossing(self):
        curve = anchored_curve(DP, 2)
        assert solve_delay(TM20, curve, L_STAR_20) == pytest.approx(0.020, rel=1e-9)

    def test_linear_curve_matches_oracle(self):
        curve = anchored_curve(DP, 1)
        expected = oracle_delay(0.020, 1, 1.0, 0.73)
        assert expected == pytest.approx(0.0472011374, rel=1e-9)
        assert solve_delay(TM20, curve, 0.73) == pytest.approx(expected, rel=1e-9)

    def test_light_load(self):
        assert solve_delay(TM20, anchored_curve(DP, 2), 1e-6) < 1e-6

    def test_concave_root_below_bracket_floor(self):
        curve = anchored_curve(DP, 0.5)
        d = solve_delay(TM20, curve, 1e-4)
        assert d < 1e-12
        assert load_from_delay(TM20, curve, d) == pytest.approx(1e-4, rel=1e-9)

    def test_saturation(self):
        curve = anchored_curve(DP, 8)
        with pytest.raises(SaturationError) as info:
            solve_delay(TM20, curve, 5.0)
        assert info.value.max_load == pytest.approx(saturation_load(TM20, curve))

    def test_at_saturation(self):
        curve = anchored_curve(DP, 4)
        assert solve_delay(TM20, curve, saturation_load(TM20, curve)) == curve.scale_delay

    @pytest.mark.parametrize("load", [0, -1])
    def test_nonpositive_load(self, load):
        with pytest.raises(DomainError):
            solve_delay(TM20, anchored_curve(DP, 2), load)

    @settings(max_examples=300)
    @given(st.floats(0.5, 10), st.floats(1e-3, 0.2), st.floats(1e-3, 0.5),
           st.floats(1e-3, 0.3), st.floats(1e-3, 0.999))
    def test_matches_brent(self, u, dq, p, base, frac):
        tm = TrafficModel(RENO_K, 12000, base)
        curve = anchored_curve(DesignPoint(dq, p), u)
        load = max(1e-3, frac * saturation_load(tm, curve))
        expected = oracle_delay(base, u, curve.scale_delay, load)
        assert solve_delay(tm, curve, load) == pytest.approx(expected, rel=1e-8)


class TestSolveLoss:
    def test_design_crossing(self):
        assert solve_loss(TM20, anchored_curve(DP, 2), L_STAR_20) == pytest.approx(0.02, rel=1e-9)

    def test_linear_curve(self):
        assert solve_loss(TM20, anchored_curve(DP, 1), 0.73) == pytest.approx(0.0472011374, rel=1e-9)

    def test_light_load(self):
        assert solve_loss(TM20, anchored_curve(DP, 4), 1e-4) < 1e-6

    @given(st.sampled_from([1, 2, 4, 8]), st.floats(0.01, 2.0))
    def test_loss_form_consistency(self, u, load):
        curve = anchored_curve(DP, u)
        assume(load < saturation_load(TM20, curve))
        p = solve_loss(TM20, curve, load)
        lhs = load * TM20.base_rtt
        rhs = (TM20.base_rtt + curve.scale_delay * p ** (1 / u)) * math.sqrt(p)
        assert rhs == pytest.approx(lhs, rel=1e-9)


class TestBisect:
    def test_deep_root(self):
        x = bisect_increasing(lambda x: x, 1e-9, 1e-12, 1.0)
        assert x == pytest.approx(1e-9, rel=1e-9)

    def test_target_below_bracket(self):
        with pytest.raises(DomainError):
            bisect_increasing(lambda x: x, 1e-13, 1e-12, 1.0)


class TestClamp:
    def test_high_drop(self):
        # (0.73 * 0.02 / 0.04) ** 2 at the exact x = 1 Mb/s load
        load = RENO_K * 12000 / (0.02 * 1e6)
        pt = clamp_point(TM20, 0.020, load)
        assert pt.delay == 0.020
        assert pt.probability == pytest.approx(0.135, rel=1e-12)
        assert clamp_point(TM20, 0.020, 0.73).probability == pytest.approx(0.133225, rel=1e-12)

    def test_design_crossing(self):
        assert clamp_point(TM20, 0.020, L_STAR_20).probability == pytest.approx(0.02, rel=1e-12)

    def test_standing_queue_at_light_load(self):
        d, p = clamp_point(TM20, 0.020, 1e-4)
        assert d == 0.020 and p < 1e-8

    def test_overload_capped(self):
        pt = clamp_point(TM20, 0.020, 3.0)
        assert pt.probability == 1.0 and pt.saturated


class TestEcn:
    def test_mark_to_drop(self):
        assert mark_to_drop_equiv(0.2, 2) == pytest.approx(0.01, rel=1e-14)
        assert mark_to_drop_equiv(0.0, 7) == 0.0

    def test_default_coupling(self):
        assert mark_to_drop_equiv(0.2) == mark_to_drop_equiv(0.2, 2.0)

    def test_cap(self):
        assert mark_to_drop_equiv(1.0, 0.5) == 1.0
        assert drop_to_mark(0.5, 4) == 1.0

    @given(st.floats(0, 1), st.floats(1.0, 10))
    def test_round_trip(self, m, k):
        assert drop_to_mark(mark_to_drop_equiv(m, k), k) == pytest.approx(m, rel=1e-12, abs=1e-15)

    def test_ecn_clamp(self):
        pt = ecn_clamp_point(TM20, 0.005, 0.73)
        assert pt.probability == pytest.approx(0.341056, rel=1e-12)
        assert pt.loss_impairment == 0.0
        assert pt.delay_impairment == 0.005

    def test_same_math_different_impairment(self):
        mark = ecn_clamp_point(TM20, 0.005, 0.73)
        drop = clamp_point(TM20, 0.005, 0.73)
        assert tuple(mark) == tuple(drop)
        assert drop.loss_impairment == drop.probability
        assert mark.signal == "mark" and drop.signal == "drop"

    @given(st.floats(1e-3, 0.1), st.floats(1e-3, 3))
    def test_identical_values(self, target, load):
        assert tuple(ecn_clamp_point(TM20, target, load)) == tuple(clamp_point(TM20, target, load))

    def test_light_load(self):
        assert ecn_clamp_point(TM20, 0.02, 1e-5).probability < 1e-9


class TestCrossing:
    def test_values(self):
        assert design_crossing_load(TM20, DP) == pytest.approx(0.28284271247, rel=1e-10)
        assert design_crossing_load(TM10, DP) == pytest.approx(0.42426406871, rel=1e-10)

    def test_limit(self):
        assert design_crossing_load(TM20, DesignPoint(1e-12, 1.0)) == pytest.approx(1.0, rel=1e-9)


class TestFamily:
    def test_crossing_grid(self):
        fam = generate_family(TM20, DP, [1, 2, 4, 8], grid=[design_crossing_load(TM20, DP)])
        assert fam.curviness == [1, 2, 4, 8, math.inf]
        for u in fam.curviness:
            (pt,) = fam.series(u)
            assert pt.delay == pytest.approx(0.020, rel=1e-6)
            assert pt.drop == pytest.approx(0.02, rel=1e-6)

    def test_rectangular_with_saturation(self):
        fam = generate_family(TM20, DP, [8], grid=log_grid(0.02, 5.0, 50))
        assert all(len(fam.points[u]) == 50 for u in fam.curviness)
        tail = fam.points[8][-1]
        assert tail.saturated and tail.drop == 1.0
        # beyond saturation the queue still satisfies the rate equation with p = 1
        assert tail.delay == pytest.approx(TM20.base_rtt * (5.0 - 1.0))

    def test_saturated_extension_is_continuous(self):
        curve = anchored_curve(DP, 8)
        l_sat = saturation_load(TM20, curve)
        before = solve_point(TM20, curve, l_sat * (1 - 1e-9))
        after = solve_point(TM20, curve, l_sat * (1 + 1e-9))
        assert after.saturated and not before.saturated
        assert after.delay == pytest.approx(before.delay, rel=1e-6)

    def test_rate_populated(self):
        fam = generate_family(TM20, DP, [2], grid=[RENO_K * 12000 / (0.02 * 1e6)])
        assert fam.points[2][0].rate == pytest.approx(1e6, rel=1e-12)

    def test_equal_rate_at_double_load(self):
        grid20 = [0.3, 0.73, 1.0]
        f20 = generate_family(TM20, DP, [2], grid=grid20)
        f10 = generate_family(TM10, DP, [2], grid=[2 * g for g in grid20])
        for a, b in zip(f20.points[2], f10.points[2]):
            assert a.rate == pytest.approx(b.rate, rel=1e-12)

    def test_empty_grid(self):
        with pytest.raises(DomainError):
            generate_family(TM20, DP, [2], grid=[])

    def test_grid_must_increase(self):
        with pytest.raises(DomainError):
            generate_family(TM20, DP, [2], grid=[0.5, 0.4])

    def test_bad_curviness(self):
        with pytest.raises(DomainError):
            generate_family(TM20, DP, [0], grid=[0.5])

    def test_default_grid(self):
        g = log_grid()
        assert len(g) == 200 and g[0] == 0.02 and g[-1] == 2.0
        assert all(b > a for a, b in zip(g, g[1:]))

    def test_clamp_solve_point_matches(self):
        pt = solve_point(TM20, Clamp(0.02), 0.5)
        assert (pt.delay, pt.drop) == tuple(clamp_point(TM20, 0.02, 0.5))

    def test_solve_point_satisfies_curve(self):
        curve = anchored_curve(DP, 4)
        pt = solve_point(TM20, curve, 1.2)
        assert pt.drop == pytest.approx(drop_prob(curve, pt.delay), rel=1e-12)


@given(st.floats(0.05, 2.0), st.sampled_from([(1, 2), (2, 4), (4, 8), (1, 8)]))
def test_pincer_pairs(load, pair):
    lo_u, hi_u = pair
    a = solve_point(TM20, anchored_curve(DP, lo_u), load)
    b = solve_point(TM20, anchored_curve(DP, hi_u), load)
    clamp = solve_point(TM20, Clamp(DP.delay), load)
    assume(abs(load / L_STAR_20 - 1) > 1e-6)
    if load > L_STAR_20:
        assert a.delay > b.delay > clamp.delay * (1 - 1e-9)
        assert a.drop < b.drop < clamp.drop * (1 + 1e-9)
    else:
        assert a.delay < b.delay < clamp.delay
        assert a.drop > b.drop > clamp.drop

import math

import numpy as np
import pytest

from plapext import operator_model as om
from plapext import radial as rad


@pytest.fixture(scope="module")
def spec4():
    return om.make_operator(4.0, 2, om.ConstantFamily(1.0))


@pytest.fixture(scope="module")
def spec_harmonic3d():
    return om.make_operator(2.0, 3, om.ConstantFamily(1.0))


class TestBarrierValue:
    def test_closed_form_p4(self, spec4):
        b = rad.RadialBarrier(spec=spec4, a=1.0)
        assert rad.barrier_value(b, 1.0) == pytest.approx(1.5, rel=1e-9)

    def test_value_at_base_radius_is_offset(self, spec4):
        b = rad.RadialBarrier(spec=spec4, a=2.0, s=0.5, offset=3.25)
        assert rad.barrier_value(b, 0.5) == 3.25
        # extension by zero inside the base ball
        assert rad.barrier_value(b, 0.1) == 3.25

    def test_harmonic_exterior_profile(self, spec_harmonic3d):
        # p=2, n=3, s=1: v(r) = 1 - 1/r
        b = rad.RadialBarrier(spec=spec_harmonic3d, a=1.0, s=1.0)
        for r in (2.0, 10.0, 100.0):
            assert rad.barrier_value(b, r) == pytest.approx(1.0 - 1.0 / r, abs=1e-9)

    def test_vectorized(self, spec4):
        b = rad.RadialBarrier(spec=spec4, a=1.0)
        rs = np.array([0.0, 1.0, 8.0])
        np.testing.assert_allclose(rad.barrier_value(b, rs),
                                   1.5 * rs ** (2.0 / 3.0), rtol=1e-9)

    def test_power_law_counterexample_shape(self):
        # for A == 1 the profile is ((p-1)/(p-n)) r^{(p-n)/(p-1)}
        spec = om.make_operator(5.0, 2, om.ConstantFamily(1.0))
        b = rad.RadialBarrier(spec=spec, a=1.0)
        expo = (spec.p - spec.n) / (spec.p - 1.0)
        coef = (spec.p - 1.0) / (spec.p - spec.n)
        for r in (0.3, 1.0, 4.0):
            assert rad.barrier_value(b, r) == pytest.approx(coef * r ** expo, rel=1e-9)

    def test_singular_base_requires_p_above_n(self, spec_harmonic3d):
        with pytest.raises(rad.BarrierError, match="p > n"):
            rad.RadialBarrier(spec=spec_harmonic3d, a=1.0, s=0.0)

    def test_bad_parameters(self, spec4):
        with pytest.raises(rad.BarrierError):
            rad.RadialBarrier(spec=spec4, a=0.0)
        with pytest.raises(rad.BarrierError):
            rad.RadialBarrier(spec=spec4, a=1.0, s=-1.0)
        with pytest.raises(rad.BarrierError):
            rad.RadialBarrier(spec=spec4, a=1.0, sign=2)

    def test_monotone_in_r_and_a(self, spec4):
        b1 = rad.RadialBarrier(spec=spec4, a=1.0)
        b2 = rad.RadialBarrier(spec=spec4, a=2.0)
        rs = np.linspace(0.1, 5.0, 20)
        v1 = rad.barrier_value(b1, rs)
        v2 = rad.barrier_value(b2, rs)
        assert np.all(np.diff(v1) > 0.0)
        assert np.all(v2 >= v1)

    def test_unboundedness_lower_bound(self):
        spec = om.make_operator(3.0, 2, om.RationalFamily(1.0, 1.0))
        b = rad.RadialBarrier(spec=spec, a=1.0)
        expo = (spec.p - spec.n) / (spec.p - 1.0)
        coef = (spec.p - 1.0) / (spec.p - spec.n)
        for r in (1.0, 10.0, 100.0):
            lower = (1.0 / spec.L_bound) ** (1.0 / (spec.p - 1.0)) * coef * r ** expo
            assert rad.barrier_value(b, r) >= lower * (1 - 1e-9)

    def test_vanishing_limit_in_a(self, spec4):
        vals = [rad.barrier_value(rad.RadialBarrier(spec=spec4, a=2.0 ** -k), 1.0)
                for k in range(13)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.1


class TestEnvelopeBounds:
    def test_constant_family_collapses(self, spec4):
        lo, hi = rad.envelope_bounds(spec4, 1.0, 0.0, 1.0)
        assert lo == pytest.approx(1.5, rel=1e-14)
        assert hi == pytest.approx(1.5, rel=1e-14)

    def test_two_sided_family(self):
        spec = om.make_operator(4.0, 2, om.RationalFamily(1.0, 1.0))
        lo, hi = rad.envelope_bounds(spec, 1.0, 0.0, 1.0)
        assert lo == pytest.approx(1.5 * 0.5 ** (1.0 / 3.0), rel=1e-14)
        assert hi == pytest.approx(1.5, rel=1e-14)

    def test_empty_interval(self, spec_harmonic3d):
        assert rad.envelope_bounds(spec_harmonic3d, 1.0, 1.0, 1.0) == (0.0, 0.0)

    def test_containment_sampled(self):
        spec = om.make_operator(3.0, 2, om.RationalFamily(1.0, 1.0))
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = 10.0 ** rng.uniform(-2, 2)
            r = 10.0 ** rng.uniform(-1, 1)
            lo, hi = rad.envelope_bounds(spec, a, 0.0, r)
            v = rad.barrier_value(rad.RadialBarrier(spec=spec, a=a), r)
            assert lo * (1 - 1e-9) <= v <= hi * (1 + 1e-9)

    def test_log_envelope_at_p_equals_n(self):
        spec = om.make_operator(2.0, 2, om.ConstantFamily(1.0))
        lo, hi = rad.envelope_bounds(spec, 1.0, 1.0, math.e)
        assert lo == pytest.approx(1.0, rel=1e-12)
        assert hi == pytest.approx(1.0, rel=1e-12)


class TestParameterSearches:
    def test_choose_a_small_postcondition(self, spec4):
        a = rad.choose_a_small(spec4, 1.0, 1.5)
        v = rad.barrier_value(rad.RadialBarrier(spec=spec4, a=a), 1.0)
        assert v < 1.5
        assert a <= 1.0

    def test_choose_a_small_huge_eps(self, spec4):
        a = rad.choose_a_small(spec4, 1.0, 1e9)
        v = rad.barrier_value(rad.RadialBarrier(spec=spec4, a=a), 1.0)
        assert v < 1e9

    def test_choose_a_small_table_family(self):
        fam = om.TableFamily((0.0, 1.0, 2.0), (1.0, 1.3, 1.5))
        spec = om.make_operator(3.0, 2, fam)
        a = rad.choose_a_small(spec, 5.0, 0.1)
        v = rad.barrier_value(rad.RadialBarrier(spec=spec, a=a), 5.0)
        assert v < 0.1

    def test_choose_a_large_postcondition(self, spec4):
        a = rad.choose_a_large(spec4, 1.0, 1.5)
        v = rad.barrier_value(rad.RadialBarrier(spec=spec4, a=a), 1.0)
        assert v >= 1.5

    def test_choose_a_large_3d(self):
        spec = om.make_operator(4.0, 3, om.ConstantFamily(1.0))
        a = rad.choose_a_large(spec, 0.5, 2.0)
        v = rad.barrier_value(rad.RadialBarrier(spec=spec, a=a), 0.5)
        assert v >= 2.0

    def test_zero_gap_rejected(self, spec4):
        with pytest.raises(rad.BarrierError):
            rad.choose_a_large(spec4, 1.0, 0.0)
        with pytest.raises(rad.BarrierError):
            rad.choose_a_small(spec4, 1.0, 0.0)

    def test_deterministic(self, spec4):
        assert rad.choose_a_small(spec4, 2.0, 0.3) == rad.choose_a_small(spec4, 2.0, 0.3)
        assert rad.choose_a_large(spec4, 2.0, 0.3) == rad.choose_a_large(spec4, 2.0, 0.3)


class TestPsiValue:
    def test_center_value(self, spec4):
        assert rad.psi_value(spec4, (1.0, 0.0), -1.0, 1.0, 1, (1.0, 0.0)) == -1.0

    def test_symmetry_about_offset(self, spec4):
        x = (0.3, 0.7)
        up = rad.psi_value(spec4, (0.0, 0.0), 2.0, 1.0, 1, x)
        dn = rad.psi_value(spec4, (0.0, 0.0), 2.0, 1.0, -1, x)
        assert up - 2.0 == pytest.approx(2.0 - dn, rel=1e-12)

    def test_shifted_value(self, spec4):
        got = rad.psi_value(spec4, (1.0, 0.0), 1.0, 1.0, 1, (2.0, 0.0))
        assert got == pytest.approx(2.5, rel=1e-9)

    def test_batched_points(self, spec4):
        pts = np.array([[1.0, 0.0], [2.0, 0.0]])
        got = rad.psi_value(spec4, (1.0, 0.0), 1.0, 1.0, 1, pts)
        np.testing.assert_allclose(got, [1.0, 2.5], rtol=1e-9)


class TestRadialInterpolant:
    def test_matches_quadrature(self, spec4):
        f = rad.radial_interpolant(spec4, 1.0, 0.0, 10.0)
        rs = np.linspace(0.05, 10.0, 25)
        exact = 1.5 * rs ** (2.0 / 3.0)
        np.testing.assert_allclose(f(rs), exact, atol=5e-7)

    def test_clamps_below_base(self, spec_harmonic3d):
        f = rad.radial_interpolant(spec_harmonic3d, 1.0, 1.0, 50.0)
        assert f(0.5) == 0.0
        assert f(10.0) == pytest.approx(0.9, abs=1e-6)

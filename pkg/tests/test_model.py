import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvol import (
    Butterfly,
    Call,
    CallSpread,
    ConfigError,
    Curve,
    ExtrapolationError,
    MarketModel,
    Put,
    SmoothedDigital,
    TabulatedCurve,
    VolatilityBand,
    derive_coefficients,
    g_apply,
    payoff_eval,
    payoff_is_convex,
)
from tests.conftest import constant_model


class TestCurve:
    def test_constant(self):
        c = Curve.constant(0.05)
        assert c(0.0) == 0.05 and c(17.3) == 0.05

    def test_interpolation_and_clamping(self):
        c = Curve((0.0, 1.0), (1.0, 2.0))
        assert c(0.5) == 1.5
        assert c(-1.0) == 1.0 and c(5.0) == 2.0

    def test_bad_knots_rejected(self):
        with pytest.raises(ConfigError):
            Curve((0.0, 0.0), (1.0, 2.0))
        with pytest.raises(ConfigError):
            Curve((0.0,), (1.0, 2.0))

    def test_integrals_against_dense_trapezoid(self):
        # independent oracle: brute-force trapezoid on a 20001-point grid
        c = Curve((0.0, 0.4, 1.0), (1.0, -0.5, 2.0))
        ts = np.linspace(0.1, 0.9, 20001)
        assert c.integral(0.1, 0.9) == pytest.approx(np.trapezoid(c(ts), ts), abs=1e-9)
        assert c.square_integral(0.1, 0.9) == pytest.approx(
            np.trapezoid(c(ts) ** 2, ts), abs=1e-8
        )


class TestDeriveCoefficients:
    def test_zero_premium(self):
        m = constant_model(r=0.03, eta=0.03, mu=0.0)
        dc = derive_coefficients(m)
        assert dc.b(0.5) == 0.0 and dc.d(0.5) == 0.0

    def test_constant_case(self):
        m = constant_model(r=0.02, eta=0.07, mu=0.5, sigma=1.0)
        dc = derive_coefficients(m)
        assert dc.b(0.3) == pytest.approx(0.05, abs=1e-15)
        assert dc.d(0.3) == pytest.approx(0.5, abs=1e-15)

    def test_time_varying_sigma(self):
        m = MarketModel(
            r=Curve.constant(0.0),
            eta=Curve.constant(0.1),
            mu=Curve.constant(0.0),
            sigma=Curve((0.0, 1.0), (1.0, 2.0)),
            T=1.0,
        )
        dc = derive_coefficients(m)
        assert dc.b(0.0) == pytest.approx(0.1)
        assert dc.b(1.0) == pytest.approx(0.05)

    def test_reconstruction_at_knots(self):
        m = MarketModel(
            r=Curve((0.0, 0.5, 1.0), (0.01, 0.03, 0.02)),
            eta=Curve((0.0, 1.0), (0.05, 0.09)),
            mu=Curve((0.0, 0.7), (0.2, -0.1)),
            sigma=Curve((0.0, 1.0), (0.8, 1.4)),
            T=1.0,
        )
        dc = derive_coefficients(m)
        for t in dc.b.ts:
            assert float(m.sigma(t)) * float(dc.b(t)) + float(m.r(t)) == pytest.approx(
                float(m.eta(t)), abs=1e-14
            )
            assert float(m.sigma(t)) * float(dc.d(t)) == pytest.approx(
                float(m.mu(t)), abs=1e-14
            )

    def test_sigma_floor_enforced(self):
        with pytest.raises(ConfigError):
            constant_model(sigma=0.0)


class TestBand:
    def test_validation(self):
        with pytest.raises(ConfigError):
            VolatilityBand(0.0, 0.1)
        with pytest.raises(ConfigError):
            VolatilityBand(0.2, 0.1)

    def test_sigma_edges(self):
        band = VolatilityBand(0.04, 0.09)
        assert band.sigma_low == pytest.approx(0.2)
        assert band.sigma_high == pytest.approx(0.3)


class TestGApply:
    def test_zero(self):
        assert g_apply(0.0, VolatilityBand(0.04, 0.09)) == 0.0

    def test_positive_branch(self):
        assert g_apply(2.0, VolatilityBand(0.04, 0.09)) == pytest.approx(0.09)

    def test_negative_branch(self):
        assert g_apply(-2.0, VolatilityBand(0.04, 0.09)) == pytest.approx(-0.04)

    @given(
        alpha=st.floats(-1e12, 1e12, allow_nan=False),
        v_low=st.floats(1e-6, 1.0),
        spread=st.floats(0.0, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_sublinearity_gap_identity_exact(self, alpha, v_low, spread):
        band = VolatilityBand(v_low, v_low + spread)
        lhs = g_apply(alpha, band) + g_apply(-alpha, band)
        a = abs(alpha)
        rhs = 0.5 * band.v_high * a - 0.5 * band.v_low * a
        assert lhs == rhs  # same operation structure on both sides: exact

    @given(
        a=st.floats(-1e6, 1e6),
        b=st.floats(-1e6, 1e6),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, a, b):
        band = VolatilityBand(0.01, 0.09)
        lo, hi = min(a, b), max(a, b)
        assert g_apply(hi, band) >= g_apply(lo, band)

    def test_vectorized(self):
        band = VolatilityBand(0.04, 0.09)
        out = g_apply(np.array([-2.0, 0.0, 2.0]), band)
        assert np.allclose(out, [-0.04, 0.0, 0.09])


class TestPayoffs:
    def test_call(self):
        assert payoff_eval(Call(100.0), 120.0) == 20.0
        assert payoff_eval(Call(100.0), 80.0) == 0.0

    def test_put(self):
        assert payoff_eval(Put(100.0), 120.0) == 0.0
        assert payoff_eval(Put(100.0), 90.0) == 10.0

    def test_butterfly_peak(self):
        assert payoff_eval(Butterfly(90.0, 100.0, 110.0), 100.0) == 10.0

    def test_call_spread(self):
        cs = CallSpread(90.0, 110.0)
        assert payoff_eval(cs, 80.0) == 0.0
        assert payoff_eval(cs, 100.0) == 10.0
        assert payoff_eval(cs, 150.0) == 20.0

    def test_smoothed_digital_ramp(self):
        sd = SmoothedDigital(100.0, 2.0)
        assert payoff_eval(sd, 90.0) == 0.0
        assert payoff_eval(sd, 100.0) == 0.5
        assert payoff_eval(sd, 110.0) == 1.0

    def test_negative_price_rejected(self):
        with pytest.raises(ConfigError):
            payoff_eval(Call(100.0), -1.0)

    def test_tabulated_interp_and_extrapolation_error(self):
        t = TabulatedCurve((0.0, 50.0, 100.0), (1.0, 2.0, 0.0))
        assert payoff_eval(t, 25.0) == pytest.approx(1.5)
        with pytest.raises(ExtrapolationError):
            payoff_eval(t, 150.0)

    def test_lipschitz_bound_on_grid(self):
        # |p(x) - p(y)| <= L (1 + |x|^m + |y|^m) |x - y| on a test grid
        xs = np.linspace(0.0, 300.0, 601)
        for p in (Call(100.0), Put(100.0), Butterfly(90.0, 100.0, 110.0), SmoothedDigital(100.0, 2.0)):
            ys = p(xs)
            gaps = np.abs(np.subtract.outer(ys, ys))
            dist = np.abs(np.subtract.outer(xs, xs))
            bound = p.lipschitz_L * (1.0 + np.add.outer(np.abs(xs) ** p.growth_m, np.abs(xs) ** p.growth_m)) * dist
            assert np.all(gaps <= bound + 1e-9)


class TestConvexity:
    def grid(self):
        return np.linspace(1.0, 300.0, 1201)

    def test_call_convex(self):
        assert payoff_is_convex(Call(100.0), self.grid())

    def test_butterfly_not_convex(self):
        assert not payoff_is_convex(Butterfly(90.0, 100.0, 110.0), self.grid())

    def test_affine_tabulated_convex(self):
        t = TabulatedCurve((0.0, 500.0), (2.0, 1502.0))  # 3x + 2
        assert payoff_is_convex(t, self.grid())

    def test_small_grid_rejected(self):
        with pytest.raises(ConfigError):
            payoff_is_convex(Call(100.0), np.array([1.0, 2.0]))

    @given(a=st.floats(-5.0, 5.0), b=st.floats(-100.0, 100.0), convex_base=st.booleans())
    @settings(max_examples=50, deadline=None)
    def test_invariant_under_affine_shift(self, a, b, convex_base):
        grid = self.grid()
        base = Call(100.0) if convex_base else Butterfly(90.0, 100.0, 110.0)
        shifted = TabulatedCurve(tuple(grid), tuple(base(grid) + a * grid + b))
        assert payoff_is_convex(base, grid) == payoff_is_convex(shifted, grid)

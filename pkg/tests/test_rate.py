import math

import numpy as np
import pytest

from rwreht.lyapunov import sandwich_bounds
from rwreht.rate import (
    NonConcaveError,
    OracleAlpha,
    TauberianScale,
    large_x_asymptote,
    legendre_sup,
    rate_curve,
    rate_function,
    small_x_asymptote,
)
from rwreht.scenery import (
    Deterministic,
    EnvironmentSpec,
    Exponential,
    PowerAtZero,
    StretchedAtZero,
    TransitionKernel,
)

SRW = EnvironmentSpec.srw(1)


def srw_alpha(lam):
    # arccosh(e^lam) without overflow
    return lam + math.log1p(math.sqrt(-math.expm1(-2 * lam)))


def cramer(v):
    if v == 1:
        return math.log(2)
    return (1 + v) / 2 * math.log1p(v) + (1 - v) / 2 * math.log1p(-v)


class TestLegendre:
    def test_vertex(self):
        r = legendre_sup(lambda l: -(l - 1) ** 2, 100.0)
        assert r.value == pytest.approx(0.0, abs=1e-12)
        assert r.argmax == pytest.approx(1.0, abs=1e-5)
        assert r.attained

    def test_boundary_maximiser(self):
        value, argmax, attained = legendre_sup(lambda l: -l, 100.0)
        assert (value, argmax, attained) == (0.0, 0.0, True)

    def test_unattained_limit(self):
        r = legendre_sup(lambda l: srw_alpha(l) - l, 1e3)
        assert not r.attained
        assert r.value == pytest.approx(math.log(2), abs=1e-9)

    def test_plateau_least_maximiser(self):
        r = legendre_sup(lambda l: min(l, 2.0) - 0.01 * max(l - 5.0, 0.0), 50.0)
        assert r.value == pytest.approx(2.0, abs=1e-9)
        assert r.argmax == pytest.approx(2.0, abs=1e-5)

    def test_non_concave_rejected(self):
        with pytest.raises(NonConcaveError):
            legendre_sup(lambda l: math.sin(l), 50.0)


class TestRateFunction:
    def test_zero_speed(self):
        p = rate_function(srw_alpha, 0.0)
        assert (p.value, p.lam_star) == (0.0, 0.0)

    def test_half_speed(self):
        p = rate_function(srw_alpha, 0.5)
        assert p.value == pytest.approx(0.130812, abs=1e-6)
        assert p.lam_star == pytest.approx(0.143841, abs=1e-6)
        assert p.attained

    def test_unit_speed(self):
        p = rate_function(srw_alpha, 1.0)
        assert p.value == pytest.approx(math.log(2), abs=1e-9)
        assert not p.attained

    @pytest.mark.parametrize("v", [0.1 * k for k in range(1, 10)])
    def test_matches_entropy(self, v):
        assert rate_function(srw_alpha, v).value == pytest.approx(cramer(v), abs=1e-6)

    @pytest.mark.parametrize("v", [0.1, 0.5, 0.9])
    def test_lam_star_solves_first_order_condition(self, v):
        p = rate_function(srw_alpha, v)
        lam = p.lam_star
        slope = math.exp(lam) / math.sqrt(math.exp(2 * lam) - 1)
        assert v * slope == pytest.approx(1.0, abs=1e-5)

    def test_oracle_source_agrees_with_closed_form(self):
        p = rate_function(OracleAlpha(SRW, n=50), 0.3)
        assert p.value == pytest.approx(cramer(0.3), abs=1e-6)

    def test_curve_convex_and_envelope(self):
        curve = rate_curve(srw_alpha, np.round(np.arange(0, 1.01, 0.05), 12))
        assert curve.values[0] == 0.0
        assert all(v >= 0 for v in curve.values)
        assert curve.midpoint_convex()
        for v, ival in zip(curve.speeds, curve.values):
            for lam in np.geomspace(1e-4, 50, 30):
                assert ival >= v * srw_alpha(lam) - lam - 1e-9

    def test_upper_bound_below_critical_speed(self):
        spec = EnvironmentSpec(
            1, (TransitionKernel((0.6, 0.4)), TransitionKernel((0.45, 0.55))), (Exponential(2.0),)
        )
        alpha = OracleAlpha(spec, n=400, replicas=4, seed=5)
        c = sandwich_bounds(spec, 0.0).c2
        vmax = 1.0 / spec.mean_holding()
        for v in (0.2, 0.6, 1.0, 1.6):
            assert v <= vmax
            p = rate_function(alpha, v)
            assert 0.0 <= p.value <= v * c + 3 * p.se + 1e-9

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            rate_function(srw_alpha, -0.1)


class TestSmallSpeed:
    def test_deterministic_ratio(self):
        rep = small_x_asymptote(SRW, (0.05,))
        assert rep.closed_form == pytest.approx(0.00125, abs=1e-15)
        assert rep.computed == pytest.approx(cramer(0.05), abs=1e-9)
        assert rep.ratio == pytest.approx(cramer(0.05) / 0.00125, abs=1e-6)
        assert 0.99 <= rep.ratio <= 1.01

    def test_exponential_ratio(self):
        rep = small_x_asymptote(EnvironmentSpec.srw(1, Exponential(1.0)), (0.05,))
        assert abs(rep.ratio - 1) < 0.05

    def test_zero(self):
        rep = small_x_asymptote(SRW, (0.0,))
        assert (rep.closed_form, rep.computed) == (0.0, 0.0)

    def test_requires_simple_walk(self):
        spec = EnvironmentSpec.homogeneous(TransitionKernel((0.6, 0.4)), Deterministic(1.0))
        with pytest.raises(ValueError):
            small_x_asymptote(spec, (0.05,))


class TestLargeSpeed:
    def test_log_scale(self):
        rep = large_x_asymptote(Exponential(1.0), math.e**2, 1.0)
        assert rep.closed_form == pytest.approx(math.e**2, rel=1e-15)
        assert rep.computed == pytest.approx(rep.closed_form, rel=1e-6)

    def test_power_scale(self):
        rep = large_x_asymptote(TauberianScale("power", 1.0, 0.5), 2.0, 1.0)
        assert rep.closed_form == pytest.approx(1.0, rel=1e-15)
        assert rep.computed == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("gamma", [1.5, 3.0])
    @pytest.mark.parametrize("c", [2.0, 10.0])
    def test_power_formula(self, gamma, c):
        s = TauberianScale("power", 1.0, gamma / (1 + gamma))
        want = (1 / (1 + gamma)) * (gamma / (1 + gamma)) ** gamma * c ** (1 + gamma)
        assert large_x_asymptote(s, c, 1.0).closed_form == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("c", [3.0, 20.0, 100.0])
    def test_log_formula(self, c):
        rep = large_x_asymptote(PowerAtZero(2.0), 1.0, c)
        assert rep.closed_form == pytest.approx(c * (math.log(c) - 1), rel=1e-12)

    def test_linear_infinite(self):
        rep = large_x_asymptote(Deterministic(1.0), 1.5, 1.0)
        assert math.isinf(rep.closed_form)

    def test_stretched_law_uses_power_form(self):
        rep = large_x_asymptote(StretchedAtZero(2.0), 1.0, 5.0)
        assert math.isfinite(rep.closed_form) and rep.closed_form > 0

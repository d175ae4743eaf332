import math

import numpy as np
import pytest

from rwreht.crossing import solve_crossing
from rwreht.montecarlo import (
    empirical_ldp_curve,
    estimate_crossing_mc,
    simulate_path,
    srw_tail_probability,
    tilted_hitting_sampler,
)
from rwreht.rate import rate_function
from rwreht.scenery import (
    Deterministic,
    EnvironmentSpec,
    Exponential,
    Gamma,
    PowerAtZero,
    TransitionKernel,
    sample_environment,
)

SRW = EnvironmentSpec.srw(1)
F_ONE = math.exp(1) - math.sqrt(math.exp(2) - 1)
SLOPE_ONE = math.e / math.sqrt(math.e**2 - 1)
RWRE2 = EnvironmentSpec(
    2,
    (TransitionKernel((0.3, 0.2, 0.25, 0.25)), TransitionKernel((0.2, 0.3, 0.3, 0.2))),
    (Exponential(1.0), Gamma(2.0, 0.5)),
)


def line(spec, lo, hi, seed=0):
    return sample_environment(spec, ([lo], [hi]), seed)


class TestSimulatePath:
    def test_unit_holds_clock(self):
        p = simulate_path(line(SRW, -50, 50), (0,), 10.0, seed=0)
        np.testing.assert_array_equal(p.clock[:10], np.arange(1, 11))
        assert not p.flagged

    def test_clock_increasing_and_nearest_neighbour(self):
        env = sample_environment(RWRE2, ((-40, -40), (40, 40)), 2)
        p = simulate_path(env, (0, 0), 200.0, seed=5)
        assert np.all(np.diff(p.clock) > 0)
        assert np.all(np.abs(np.diff(p.sites, axis=0)).sum(axis=1) == 1)

    def test_position_piecewise_constant(self):
        p = simulate_path(line(SRW, -50, 50), (0,), 20.0, seed=1)
        assert tuple(p.position(0.0)) == (0,)
        assert tuple(p.position(2.5)) == tuple(p.sites[2])
        assert tuple(p.position(3.0)) == tuple(p.sites[3])

    def test_exponential_renewal_rate(self):
        spec = EnvironmentSpec.srw(1, Exponential(1.0))
        p = simulate_path(line(spec, -2000, 2000), (0,), 1e4, seed=3)
        assert 0.97 <= p.jumps / 1e4 <= 1.03

    def test_diffusive_displacement(self):
        p = simulate_path(line(SRW, -2000, 2000), (0,), 1e4, seed=4)
        assert abs(p.position(1e4)[0]) / 1e4 < 0.05

    def test_exit_flagged(self):
        p = simulate_path(line(SRW, -3, 3), (0,), 1e3, seed=0)
        assert p.exited and p.flagged
        assert abs(p.sites[-1][0]) == 4

    def test_reproducible(self):
        env = sample_environment(RWRE2, ((-30, -30), (30, 30)), 1)
        a = simulate_path(env, (0, 0), 50.0, seed=9, sample=4)
        b = simulate_path(env, (0, 0), 50.0, seed=9, sample=4)
        np.testing.assert_array_equal(a.sites, b.sites)
        np.testing.assert_array_equal(a.holds, b.holds)

    @pytest.mark.parametrize("law", [Gamma(0.5, 2.0), Gamma(3.0, 1.0), PowerAtZero(2.0)], ids=repr)
    def test_mean_holding(self, law):
        spec = EnvironmentSpec.srw(1, law)
        p = simulate_path(line(spec, -3000, 3000), (0,), 2e4, seed=6)
        assert np.mean(p.holds) == pytest.approx(law.mean(), rel=0.05)


class TestCrossingMC:
    def test_closed_form_covered(self):
        env = line(SRW, -200, 1)
        est, se = estimate_crossing_mc(env, (0,), (1,), 1.0, 100_000, seed=0)
        assert abs(est - F_ONE) <= 3 * se

    def test_same_site(self):
        env = line(SRW, -5, 5)
        r = estimate_crossing_mc(env, (2,), (2,), 1.0, 10, seed=0)
        assert (r.estimate, r.se) == (1.0, 0.0)

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            estimate_crossing_mc(line(SRW, -5, 5), (0,), (1,), 0.0, 10, seed=0)

    def test_coverage_against_solver(self):
        covered = 0
        for s in range(20):
            env = sample_environment(RWRE2, ((-4, -4), (4, 4)), s)
            y = (1 + s % 3, -(s % 2))
            exact = solve_crossing(env, (0, 0), [y], 0.5, tol=1e-12).value
            est, se = estimate_crossing_mc(env, (0, 0), y, 0.5, 20_000, seed=100 + s)
            covered += abs(est - exact) <= 2.576 * se
        assert covered >= 17

    def test_workers_do_not_change_result(self):
        env = sample_environment(RWRE2, ((-6, -6), (6, 6)), 3)
        a = estimate_crossing_mc(env, (0, 0), (2, 2), 0.7, 40_000, seed=3, workers=1)
        b = estimate_crossing_mc(env, (0, 0), (2, 2), 0.7, 40_000, seed=3, workers=3)
        assert a == b


class TestTilted:
    def test_hitting_time_concentrates(self):
        env = line(SRW, -200, 40)
        ts = tilted_hitting_sampler(env, (0,), (40,), 1.0, 20_000, seed=0)
        assert ts.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert 1.05 <= ts.weighted_mean() <= 1.10
        assert ts.ess >= 100 and not ts.flagged

    def test_large_rate_toward_one(self):
        env = line(SRW, -200, 40)
        m1 = tilted_hitting_sampler(env, (0,), (40,), 1.0, 5000, seed=1).weighted_mean()
        m5 = tilted_hitting_sampler(env, (0,), (40,), 5.0, 5000, seed=1).weighted_mean()
        assert 1.0 <= m5 < m1
        assert m5 == pytest.approx(math.exp(5) / math.sqrt(math.exp(10) - 1), abs=2e-3)

    def test_crossing_estimate_unbiased(self):
        env = line(SRW, -200, 40)
        ts = tilted_hitting_sampler(env, (0,), (5,), 1.0, 20_000, seed=2)
        assert math.log(ts.crossing_estimate) == pytest.approx(5 * math.log(F_ONE), abs=0.02)

    def test_exponential_holding_mean(self):
        spec = EnvironmentSpec.srw(1, Exponential(1.0))
        env = line(spec, -200, 30)
        ts = tilted_hitting_sampler(env, (0,), (30,), 1.0, 20_000, seed=3)
        # d/dlam arccosh(1 + lam) at lam = 1
        assert ts.weighted_mean() == pytest.approx(1 / math.sqrt(3), rel=0.03)
        assert not ts.flagged

    def test_quantiles_ordered(self):
        env = line(SRW, -200, 20)
        ts = tilted_hitting_sampler(env, (0,), (20,), 1.0, 5000, seed=4)
        qs = [ts.weighted_quantile(q) for q in (0.1, 0.5, 0.9)]
        assert qs[0] <= qs[1] <= qs[2]


def test_tail_probability_bruteforce():
    from itertools import product

    t = 10
    sums = [sum(s) for s in product((-1, 1), repeat=t)]
    for thr in (-10, -3, 0, 4, 10, 11):
        want = sum(s >= thr for s in sums) / 2**t
        assert srw_tail_probability(t, thr) == pytest.approx(want, abs=1e-15)


class TestEmpiricalLdp:
    def test_srw_rates(self):
        speeds = [0.0, 0.25, 0.5, 1.5]
        rows = empirical_ldp_curve(SRW, speeds, 40, 200_000, seed=0)
        assert rows[0].empirical == pytest.approx(0.0, abs=0.02)
        assert rows[3].flag == "impossible" and math.isinf(rows[3].empirical)
        exact = -math.log(srw_tail_probability(40, 20)) / 40
        assert rows[2].empirical == pytest.approx(exact, rel=0.05)
        assert rows[0].empirical <= rows[1].empirical <= rows[2].empirical

    def test_zero_hits_lower_bound(self):
        rows = empirical_ldp_curve(SRW, [0.9], 40, 1000, seed=0)
        assert rows[0].flag == "lower_bound"
        assert rows[0].empirical == pytest.approx(math.log(1000) / 40)

    def test_theoretical_column(self):
        def I(v):
            return rate_function(lambda l: l + math.log1p(math.sqrt(-math.expm1(-2 * l))), v).value

        rows = empirical_ldp_curve(SRW, [0.5], 20, 1000, seed=0, rate=I)
        assert rows[0].theoretical == pytest.approx(0.130812, abs=1e-6)

    def test_random_environment_monotone(self):
        spec = EnvironmentSpec(
            1, (TransitionKernel((0.6, 0.4)), TransitionKernel((0.4, 0.6))), (Exponential(1.0),)
        )
        rows = empirical_ldp_curve(spec, [0.0, 0.1, 0.2, 0.3], 30, 100_000, seed=2)
        emp = [r.empirical for r in rows]
        assert all(a <= b + 0.01 for a, b in zip(emp, emp[1:]))

    def test_workers_do_not_change_result(self):
        a = empirical_ldp_curve(SRW, [0.2, 0.4], 20, 40_000, seed=5, workers=1)
        b = empirical_ldp_curve(SRW, [0.2, 0.4], 20, 40_000, seed=5, workers=4)
        assert a == b


def test_deterministic_law_clock_scale():
    spec = EnvironmentSpec.srw(1, Deterministic(0.5))
    p = simulate_path(line(spec, -100, 100), (0,), 5.0, seed=0)
    np.testing.assert_allclose(p.clock, 0.5 * np.arange(1, p.jumps + 1))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwreht.crossing import solve_crossing
from rwreht.oracle1d import CutNotConverged, exact_a_1d, step_crossings
from rwreht.scenery import (
    EnvironmentSpec,
    Exponential,
    Gamma,
    SpecError,
    TransitionKernel,
    sample_environment,
)

SRW = EnvironmentSpec.srw(1)
RWRE = EnvironmentSpec(
    1,
    (TransitionKernel((0.6, 0.4)), TransitionKernel((0.35, 0.65)), TransitionKernel((0.5, 0.5))),
    (Exponential(1.0), Gamma(2.0, 0.75)),
)
STEP = math.acosh(math.e)


def test_fixed_point_of_recursion():
    env = sample_environment(RWRE, ([-300], [50]), 3)
    sc = step_crossings(env, 0.7)
    probs, theta = env.probs(), env.theta(0.7)
    for k in range(-250, 50):
        i = k - env.lo[0]
        f, g = sc.at(k), sc.at(k - 1)
        rhs = math.exp(-theta[i]) * (probs[i, 0] + probs[i, 1] * g * f)
        assert f == pytest.approx(rhs, rel=1e-12)


def test_srw_closed_forms():
    env = sample_environment(SRW, ([0], [10]), 0)
    assert exact_a_1d(env, 0, 3, 1.0) == pytest.approx(4.9723633624592, abs=1e-9)
    assert exact_a_1d(env, 0, 10, 1.0) == pytest.approx(10 * STEP, abs=1e-8)
    assert exact_a_1d(env, 0, -10, 1.0) == pytest.approx(10 * STEP, abs=1e-8)
    assert exact_a_1d(env, 0, 10, 1.0) == pytest.approx(16.574544541530, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**40), st.integers(-30, 30), st.integers(-30, 30), st.integers(-30, 30),
       st.floats(0.05, 3.0))
def test_additive_along_monotone_paths(seed, x, y, z, lam):
    x, y, z = sorted((x, y, z))
    env = sample_environment(RWRE, ([x], [z]), seed)
    total = exact_a_1d(env, x, z, lam)
    assert total == pytest.approx(exact_a_1d(env, x, y, lam) + exact_a_1d(env, y, z, lam), abs=1e-8)
    back = exact_a_1d(env, z, x, lam)
    assert back == pytest.approx(exact_a_1d(env, z, y, lam) + exact_a_1d(env, y, x, lam), abs=1e-8)


def test_agrees_with_lattice_solver():
    rng_seeds = range(50)
    for s in rng_seeds:
        lam = 0.2 + 0.05 * s
        y = 1 + s % 7
        cut = -40
        env = sample_environment(RWRE, ([cut], [y]), s)
        oracle = exact_a_1d(env, 0, y, lam, left_cut=cut)
        sol = solve_crossing(env, (0,), [(y,)], lam, tol=1e-13)
        assert oracle == pytest.approx(sol.cost, abs=1e-8), s


def test_recurrent_zero_rate_does_not_converge():
    env = sample_environment(SRW, ([0], [5]), 0)
    with pytest.raises(CutNotConverged):
        exact_a_1d(env, 0, 5, 0.0)


def test_transient_zero_rate_converges():
    spec = EnvironmentSpec.homogeneous(TransitionKernel((0.7, 0.3)), Exponential(1.0))
    env = sample_environment(spec, ([0], [5]), 0)
    assert exact_a_1d(env, 0, 5, 0.0) == pytest.approx(0.0, abs=1e-9)
    # leftward against the drift: hit probability (q/p)^5
    assert exact_a_1d(env, 0, -5, 0.0) == pytest.approx(5 * math.log(7 / 3), abs=1e-8)


def test_ellipticity_enforced():
    with pytest.raises(SpecError):
        TransitionKernel((1.0, 0.0))


def test_needs_one_dimension():
    env = sample_environment(EnvironmentSpec.srw(2), ((0, 0), (2, 2)), 0)
    with pytest.raises(ValueError):
        step_crossings(env, 1.0)


def test_huge_rate_no_underflow():
    env = sample_environment(SRW, ([0], [5]), 0)
    a = exact_a_1d(env, 0, 5, 800.0)
    assert np.isfinite(a) and a == pytest.approx(5 * (800 + math.log(2)), rel=1e-12)

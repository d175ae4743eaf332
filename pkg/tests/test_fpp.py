import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwreht.fpp import (
    WeightField,
    estimate_time_constant,
    lyapunov_fpp_scaling,
    passage_time,
    passage_time_bruteforce,
    passage_times_from,
)
from rwreht.scenery import Deterministic, EnvironmentSpec, Exponential, TransitionKernel


def random_field(seed, side=4, dim=2):
    rng = np.random.default_rng(seed)
    return WeightField((0,) * dim, (side - 1,) * dim, rng.exponential(1.0, (side,) * dim) + 1e-3)


def corner_field():
    w = np.empty((2, 2))
    w[0, 0], w[1, 0], w[0, 1], w[1, 1] = 1.0, 5.0, 2.0, 7.0
    return WeightField((0, 0), (1, 1), w)


class TestPassageTime:
    def test_empty_path(self):
        r = passage_time(random_field(0), (2, 1), (2, 1))
        assert r.value == 0.0 and r.path == [(2, 1)]

    def test_corner_example(self):
        r = passage_time(corner_field(), (0, 0), (1, 1))
        assert r.value == 3.0
        assert r.path == [(0, 0), (0, 1), (1, 1)]
        assert passage_time_bruteforce(corner_field(), (0, 0), (1, 1)).value == 3.0

    @pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
    def test_constant_weights(self, c):
        fld = WeightField.constant((-3, -3), (3, 3), c)
        for y in [(3, 3), (-2, 1), (0, -3), (1, 0)]:
            assert passage_time(fld, (0, 0), y).value == pytest.approx(c * sum(map(abs, y)), abs=1e-12)
        small = WeightField.constant((0, 0), (2, 2), c)
        assert passage_time_bruteforce(small, (0, 0), (2, 1)).value == pytest.approx(3 * c)

    def test_value_is_path_cost(self):
        fld = random_field(3, side=8)
        r = passage_time(fld, (0, 0), (7, 5))
        assert r.value == pytest.approx(fld.path_cost(r.path), rel=1e-14)
        assert r.path[0] == (0, 0) and r.path[-1] == (7, 5)
        steps = np.abs(np.diff(np.array(r.path), axis=0)).sum(axis=1)
        assert np.all(steps == 1)

    def test_bruteforce_equivalence_on_seeded_fields(self):
        for seed in range(25):
            fld = random_field(seed)
            for y in [(3, 3), (0, 3), (2, 1)]:
                bf = passage_time_bruteforce(fld, (0, 0), y)
                assert bf.exhaustive
                assert bf.value == passage_time(fld, (0, 0), y).value, (seed, y)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.tuples(st.integers(0, 3), st.integers(0, 3)),
           st.tuples(st.integers(0, 3), st.integers(0, 3)))
    def test_bruteforce_equivalence_property(self, seed, x, y):
        fld = random_field(seed)
        assert passage_time_bruteforce(fld, x, y).value == passage_time(fld, x, y).value

    def test_length_cap_flags(self):
        fld = random_field(1)
        short = passage_time_bruteforce(fld, (0, 0), (3, 3), max_len=6)
        assert not short.exhaustive
        assert short.value >= passage_time(fld, (0, 0), (3, 3)).value

    def test_triangle_inequality(self):
        fld = random_field(7, side=9)
        from_x, _ = passage_times_from(fld, (0, 0))
        for y in [(4, 4), (8, 0), (2, 7)]:
            from_y, _ = passage_times_from(fld, y)
            assert np.all(from_x <= from_x[y] + from_y + 1e-12)

    def test_monotone_in_weights(self):
        fld = random_field(11, side=7)
        rng = np.random.default_rng(0)
        heavier = WeightField(fld.lo, fld.hi, fld.weights * (1 + rng.random(fld.shape)))
        a, _ = passage_times_from(fld, (3, 3))
        b, _ = passage_times_from(heavier, (3, 3))
        assert np.all(a <= b)

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            WeightField((0, 0), (1, 1), np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_three_dimensions(self):
        fld = random_field(2, side=3, dim=3)
        assert passage_time(fld, (0, 0, 0), (2, 2, 1)).value == passage_time_bruteforce(fld, (0, 0, 0), (2, 2, 1)).value


class TestTimeConstant:
    def test_constant_law_exact(self):
        spec = EnvironmentSpec.srw(2, Deterministic(2.5))
        est = estimate_time_constant(spec, (2, 1), schedule=(2, 4, 8), replicas=3, weights="mean")
        np.testing.assert_allclose(est.values, 2.5 * 3, rtol=0, atol=1e-12)
        assert est.spread == 0.0

    def test_exponential_geodesics_beat_straight_line(self):
        spec = EnvironmentSpec.srw(2, Exponential(1.0))
        est = estimate_time_constant(spec, (1, 0), schedule=(10, 20, 40), replicas=8, seed=1, weights="sample")
        assert est.point < 1.0
        assert np.all(est.values <= est.straight + 1e-12)
        assert est.point < est.straight[-1].mean()

    def test_subadditive(self):
        spec = EnvironmentSpec.srw(2, Exponential(1.0))
        one = estimate_time_constant(spec, (1, 1), schedule=(15,), replicas=8, seed=2, weights="sample")
        two = estimate_time_constant(spec, (2, 2), schedule=(15,), replicas=8, seed=2, weights="sample")
        assert two.point <= 2 * one.point + 3 * (two.spread + 2 * one.spread)

    def test_rejects_zero_direction(self):
        with pytest.raises(ValueError):
            estimate_time_constant(EnvironmentSpec.srw(2), (0, 0))

    def test_rows_cover_schedule(self):
        est = estimate_time_constant(EnvironmentSpec.srw(1), (1,), schedule=(5, 10), replicas=2, weights="mean")
        assert [r[:2] for r in est.rows()] == [(5, 0), (5, 1), (10, 0), (10, 1)]


class TestScaling:
    def test_srw_ratios(self):
        rows = lyapunov_fpp_scaling(EnvironmentSpec.srw(1), (1,), [5, 20, 50], replicas=2, nu_schedule=(10,))
        want = [1 + math.log1p(math.sqrt(-math.expm1(-2 * l))) / l for l in (5, 20, 50)]
        np.testing.assert_allclose([r.ratio for r in rows], want, atol=1e-9)
        assert rows[-1].ratio == pytest.approx(1.013863, abs=1e-3)
        assert rows[0].ratio > rows[1].ratio > rows[2].ratio > rows[0].nu == 1.0

    def test_deterministic_two(self):
        spec = EnvironmentSpec.srw(1, Deterministic(2.0))
        rows = lyapunov_fpp_scaling(spec, (1,), [50, 200], replicas=2, nu_schedule=(10,))
        assert rows[0].nu == 2.0
        for r in rows:
            assert r.ratio == pytest.approx(2 + math.log1p(math.sqrt(-math.expm1(-4 * r.lam))) / r.lam, abs=1e-9)
        assert abs(rows[1].ratio - 2) < abs(rows[0].ratio - 2)

    def test_random_1d_ratio_approaches_time_constant(self):
        spec = EnvironmentSpec(
            1, (TransitionKernel((0.6, 0.4)), TransitionKernel((0.4, 0.6))), (Exponential(1.0), Exponential(0.5))
        )
        rows = lyapunov_fpp_scaling(spec, (1,), [10, 100, 1000], replicas=4, schedule=(200,), nu_schedule=(200,))
        gaps = [abs(r.ratio - r.nu) for r in rows]
        assert gaps[2] < gaps[1] < gaps[0]

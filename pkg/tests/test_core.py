import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sristab.core import (DomainError, RandomSource, RangeError, StepSchedule,
                          Trace, TraceBuilder, clock, interpolate,
                          interpolate_many, robbins_monro_verdict,
                          schedule_value)


class TestScheduleValue:
    def test_reference_law_first_step(self):
        s = StepSchedule(0.01, 0.6)
        assert schedule_value(s, 1) == 0.01

    def test_harmonic(self):
        assert schedule_value(StepSchedule(1.0, 1.0), 10) == pytest.approx(0.1)

    def test_large_index_against_high_precision(self):
        # 0.01 / 100000**0.6 evaluated with 40-digit arithmetic
        s = StepSchedule(0.01, 0.6)
        assert schedule_value(s, 100_000) == pytest.approx(1e-5, rel=1e-12)

    def test_zero_index_rejected(self):
        with pytest.raises(DomainError):
            schedule_value(StepSchedule(0.01, 0.6), 0)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(DomainError):
            StepSchedule(0.0, 0.6)
        with pytest.raises(DomainError):
            StepSchedule(1.0, 0.0)


class TestVerdict:
    @pytest.mark.parametrize("p,expected", [
        (0.6, "admissible"),
        (1.0, "admissible"),
        (0.4, "divergent-sum-of-squares"),
        (0.5, "divergent-sum-of-squares"),
        (1.5, "summable"),
    ])
    def test_classification(self, p, expected):
        assert robbins_monro_verdict(StepSchedule(1.0, p)) == expected


class TestClock:
    def test_starts_at_zero(self):
        assert clock(StepSchedule(0.01, 0.6), 0) == 0.0

    def test_zero_based_convention(self):
        # alpha_0 = 1, alpha_1 = 1/2 under the zero-based power law
        assert clock(StepSchedule(1.0, 1.0), 2) == pytest.approx(1.5)

    def test_matches_direct_summation(self):
        s = StepSchedule(0.01, 0.6)
        n = 12345
        direct = float(np.sum(0.01 / (np.arange(n) + 1.0) ** 0.6))
        assert clock(s, n) == pytest.approx(direct, rel=1e-12)

    def test_increments_are_the_steps(self):
        s = StepSchedule(0.3, 0.7)
        for n in (0, 1, 5, 100, 4321):
            assert clock(s, n + 1) - clock(s, n) == pytest.approx(s.alpha(n))

    def test_divergence_to_one_million(self):
        # admissible schedules have an unbounded, strictly increasing clock
        s = StepSchedule(0.01, 0.6)
        grid = s.clock_grid(1_000_000)
        assert np.all(np.diff(grid) > 0)
        assert grid[-1] > grid[100_000] > grid[10_000]
        assert grid[-1] == pytest.approx(
            float(np.sum(0.01 / (np.arange(1_000_000) + 1.0) ** 0.6)), rel=1e-10)

    def test_cache_consistency(self):
        s = StepSchedule(1.0, 0.8)
        a = s.clock(10)
        b = s.clock(1000)
        assert s.clock(10) == a
        assert s.clock(1000) == b

    def test_steps_to_cover(self):
        s = StepSchedule(1.0, 1.0)
        # t(1) = 1, so horizon 0.9 from n=0 is covered by one step
        assert s.steps_to_cover(0, 0.9) == 1
        m = s.steps_to_cover(10, 2.0)
        assert s.clock(10 + m) >= s.clock(10) + 2.0
        assert s.clock(10 + m - 1) < s.clock(10) + 2.0


def _toy_trace(points, c=1.0, p=1.0):
    pts = np.asarray(points, dtype=float)
    return Trace(points=pts, schedule=StepSchedule(c, p), seed=0)


class TestInterpolate:
    def test_grid_points_exact(self):
        tr = _toy_trace([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
        grid = tr.times()
        for n in range(3):
            assert np.array_equal(interpolate(tr, grid[n]), tr.points[n])

    def test_midpoint(self):
        tr = _toy_trace([[0.0], [2.0]])
        t_mid = tr.times()[:2].mean()
        assert interpolate(tr, t_mid) == pytest.approx([1.0])

    @given(st.floats(0.0, 1.0), st.integers(0, 2))
    @settings(max_examples=50, deadline=None)
    def test_affine_formula(self, w, seg):
        # independent re-implementation of the segment formula
        tr = _toy_trace([[0.0, 1.0], [1.0, -1.0], [2.5, 0.5], [0.0, 0.0]])
        grid = tr.times()
        t = grid[seg] + w * (grid[seg + 1] - grid[seg])
        expected = tr.points[seg] + (tr.points[seg + 1] - tr.points[seg]) * (
            (t - grid[seg]) / (grid[seg + 1] - grid[seg]))
        got = interpolate(tr, min(t, grid[-1]))
        if t <= grid[-1]:
            assert got == pytest.approx(expected, abs=1e-12)

    def test_out_of_range(self):
        tr = _toy_trace([[0.0], [1.0]])
        with pytest.raises(RangeError):
            interpolate(tr, -0.1)
        with pytest.raises(RangeError):
            interpolate(tr, tr.times()[-1] + 0.1)

    def test_segment_lipschitz_continuity(self):
        tr = _toy_trace([[0.0, 0.0], [1.0, 3.0], [1.5, 2.0]])
        grid = tr.times()
        rng = np.random.default_rng(1)
        for n in range(2):
            slope = np.linalg.norm(tr.points[n + 1] - tr.points[n]) / (
                grid[n + 1] - grid[n])
            ts = rng.uniform(grid[n], grid[n + 1], size=(20, 2))
            for t1, t2 in ts:
                d = np.linalg.norm(interpolate(tr, t1) - interpolate(tr, t2))
                assert d <= slope * abs(t1 - t2) + 1e-12

    def test_vectorized_matches_scalar(self):
        tr = _toy_trace([[0.0, 1.0], [2.0, 2.0], [1.0, 0.0]])
        ts = np.linspace(0, tr.times()[-1], 17)
        many = interpolate_many(tr, ts)
        for t, row in zip(ts, many):
            assert row == pytest.approx(interpolate(tr, t), abs=1e-12)


class TestTrace:
    def test_length_invariant(self):
        with pytest.raises(DomainError):
            Trace(points=np.zeros((3, 2)), schedule=StepSchedule(1, 1), seed=0,
                  noise=np.zeros((3, 2)))

    def test_builder_roundtrip(self):
        tb = TraceBuilder([1.0, 2.0], StepSchedule(1, 1), seed=7)
        for k in range(5):
            tb.append([k, k], noise=[0.1, 0.1], estimate=[1, 1], bias=[0, 0])
        tr = tb.build()
        assert tr.n_steps == 5
        assert tr.points.shape == (6, 2)
        assert tr.noise.shape == (5, 2)
        assert tr.seed == 7

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            TraceBuilder([np.nan, 0.0], StepSchedule(1, 1), seed=0)


class TestRandomSource:
    def test_identical_seed_identical_stream(self):
        a = RandomSource(42).split(0.1).generator().standard_normal(8)
        b = RandomSource(42).split(0.1).generator().standard_normal(8)
        assert np.array_equal(a, b)

    def test_distinct_paths_differ(self):
        base = RandomSource(42)
        a = base.split(0.1).generator().standard_normal(8)
        b = base.split(0.2).generator().standard_normal(8)
        c = base.split(0.1, 1).generator().standard_normal(8)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_float_keys_bit_stable(self):
        assert RandomSource(1).split(0.1).path == RandomSource(1).split(0.1).path
        assert RandomSource(1).split(0.1).path != RandomSource(1).split(0.2).path

    def test_rejects_odd_key_types(self):
        with pytest.raises(DomainError):
            RandomSource(1).split("lam")

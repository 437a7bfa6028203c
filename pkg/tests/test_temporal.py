"""Clock arithmetic: fixed-value cases and circle properties."""

import math
from datetime import datetime, timezone

import numpy as np
import pytest

from interest_clock.temporal import (
    SECONDS_PER_DAY,
    circular_gap,
    circular_gap_array,
    clock_of_day,
    clock_of_day_array,
    time_features,
    time_features_array,
)


def hms(h, m=0, s=0):
    return h * 3600 + m * 60 + s


class TestClockOfDay:
    def test_reference_datetime(self):
        ts = int(datetime(2024, 12, 10, 13, 30, 0, tzinfo=timezone.utc).timestamp())
        assert clock_of_day(ts) == hms(13, 30, 0)

    def test_midnight(self):
        ts = int(datetime(2023, 5, 1, tzinfo=timezone.utc).timestamp())
        assert clock_of_day(ts) == 0

    def test_daily_periodicity(self):
        rng = np.random.default_rng(0)
        for ts in rng.integers(0, 2**31, size=200):
            k = int(rng.integers(1, 10))
            assert clock_of_day(int(ts)) == clock_of_day(int(ts) + k * SECONDS_PER_DAY)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            clock_of_day(-1)

    def test_array_matches_scalar(self):
        ts = np.array([0, 86399, 86400, 123456789])
        assert np.array_equal(clock_of_day_array(ts),
                              [clock_of_day(int(t)) for t in ts])


class TestCircularGap:
    def test_wraps_across_midnight(self):
        assert circular_gap(hms(23), hms(1)) == 120.0

    def test_same_day_afternoon(self):
        assert circular_gap(hms(11), hms(17)) == 360.0

    def test_identity(self):
        assert circular_gap(hms(9, 41), hms(9, 41)) == 0.0

    def test_antipodal_maximum(self):
        assert circular_gap(hms(0), hms(12)) == 720.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            a, b = rng.integers(0, SECONDS_PER_DAY, size=2)
            assert circular_gap(int(a), int(b)) == circular_gap(int(b), int(a))

    def test_bounded_by_half_day(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            a, b = rng.integers(0, SECONDS_PER_DAY, size=2)
            assert 0.0 <= circular_gap(int(a), int(b)) <= 720.0

    def test_triangle_inequality_on_circle(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b, c = (int(x) for x in rng.integers(0, SECONDS_PER_DAY, size=3))
            assert circular_gap(a, c) <= circular_gap(a, b) + circular_gap(b, c) + 1e-9

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(4)
        clocks = rng.integers(0, SECONDS_PER_DAY, size=100)
        ref = int(rng.integers(0, SECONDS_PER_DAY))
        got = circular_gap_array(clocks, ref)
        want = [circular_gap(int(c), ref) for c in clocks]
        assert np.array_equal(got, want)


class TestTimeFeatures:
    def test_zero_gap_is_zero_vector(self):
        assert np.array_equal(time_features(0.0), np.zeros(4))

    def test_maximum_gap(self):
        np.testing.assert_allclose(time_features(720.0),
                                   [1.0, 1.0, 1.0, math.log(2.0)], rtol=0, atol=0)

    def test_quarter_gap(self):
        # 180 minutes: x = 0.25, so [0.25, 0.5, 0.0625, ln 1.25]
        np.testing.assert_allclose(
            time_features(180.0),
            [0.25, 0.5, 0.0625, 0.22314355131420976], rtol=1e-15)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            time_features(720.5)
        with pytest.raises(ValueError):
            time_features(-0.1)

    def test_componentwise_monotone(self):
        gaps = np.linspace(0.0, 720.0, 2000)
        feats = time_features_array(gaps)
        assert np.all(np.diff(feats, axis=0) >= 0.0)

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(5)
        gaps = rng.uniform(0, 720, size=50)
        got = time_features_array(gaps)
        for row, g in zip(got, gaps):
            assert np.array_equal(row, time_features(float(g)))

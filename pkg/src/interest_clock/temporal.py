"""Circular clock-of-day arithmetic.

Timestamps are integer epoch seconds (UTC). A clock time is the number of
seconds into the day, in ``[0, 86400)``. The gap between two clock times is
the minimum distance on the 24-hour circle, expressed in minutes, so it is
symmetric and never exceeds 720 (half a day). Gaps are normalised to
``[0, 1]`` before the four-component feature map is applied, which keeps the
squared term bounded for the downstream score network.

Scalar functions have vectorised ``*_array`` siblings operating on numpy
arrays; both share the same arithmetic.
"""

from __future__ import annotations

import numpy as np

SECONDS_PER_DAY = 86_400
HALF_DAY_MINUTES = 720.0


def clock_of_day(epoch_seconds: int) -> int:
    """Seconds into the day, ``[0, 86400)``, for an epoch timestamp."""
    if epoch_seconds < 0:
        raise ValueError(f"timestamp must be non-negative, got {epoch_seconds}")
    return int(epoch_seconds) % SECONDS_PER_DAY


def clock_of_day_array(epoch_seconds) -> np.ndarray:
    ts = np.asarray(epoch_seconds, dtype=np.int64)
    return np.mod(ts, SECONDS_PER_DAY)


def circular_gap(a: int, b: int) -> float:
    """Minimum distance between two clock times on the day circle, in minutes."""
    diff = abs(int(a) - int(b))
    diff = min(diff, SECONDS_PER_DAY - diff)
    return diff / 60.0


def circular_gap_array(clock_seconds, reference: int) -> np.ndarray:
    """Circular gaps in minutes between each clock time and a single reference."""
    c = np.asarray(clock_seconds, dtype=np.int64)
    diff = np.abs(c - int(reference))
    np.minimum(diff, SECONDS_PER_DAY - diff, out=diff)
    return diff / 60.0


def time_features(gap_minutes: float) -> np.ndarray:
    """Feature 4-vector ``[x, sqrt(x), x^2, ln(x+1)]`` of the normalised gap.

    The gap is divided by 720 first, so every component lies in ``[0, 1]``
    except the log term, which tops out at ``ln 2``.
    """
    if not 0.0 <= gap_minutes <= HALF_DAY_MINUTES:
        raise ValueError(f"gap must be in [0, 720] minutes, got {gap_minutes}")
    x = gap_minutes / HALF_DAY_MINUTES
    return np.array([x, np.sqrt(x), x * x, np.log1p(x)], dtype=np.float64)


def time_features_array(gap_minutes) -> np.ndarray:
    """Row-per-gap feature matrix, shape ``(len(gaps), 4)``."""
    x = np.asarray(gap_minutes, dtype=np.float64) / HALF_DAY_MINUTES
    out = np.empty(x.shape + (4,), dtype=np.float64)
    out[..., 0] = x
    out[..., 1] = np.sqrt(x)
    out[..., 2] = x * x
    out[..., 3] = np.log1p(x)
    return out

"""Shared stream builders and independent oracles.

The oracle functions recompute detector quantities from first principles
(plain comprehensions, collections.Counter, the four-case table written
out flat) so the tests never share a code path with the implementation.
"""

from __future__ import annotations

import math
from collections import Counter
from datetime import datetime, timedelta

import pytest

from meterguard.core import CurrentLimits, Reading, WindowPair


def make_readings(values, start=datetime(2019, 3, 4, 10, 0), period_minutes=5):
    return [
        Reading(start + timedelta(minutes=period_minutes * i), float(v))
        for i, v in enumerate(values)
    ]


def make_window_pair(cur_values, pri_values, start=datetime(2019, 3, 4, 10, 0), period_minutes=5):
    cur = make_readings(cur_values, start, period_minutes)
    pri = [
        Reading(r.timestamp.replace(year=r.timestamp.year - 1), float(v))
        for r, v in zip(cur, pri_values)
    ]
    return WindowPair(
        current=tuple(cur), prior_year=tuple(pri), window_length=len(cur_values) - 1
    )


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def oracle_headroom(gi, i_max):
    """Exact-decimal headroom percent: ceil over rationals, no FP rounding.

    Values are taken at their shortest decimal representation (what the
    meter file printed), which is the arithmetic the worked figures use.
    """
    from fractions import Fraction

    frac = (Fraction(repr(float(i_max))) - Fraction(repr(float(gi)))) * 100 / Fraction(
        repr(float(i_max))
    )
    n = math.ceil(frac)
    return min(100, max(0, n))


def oracle_averages(cur_values, pri_values, T, limits: CurrentLimits):
    """Raw indicator-filtered means per the 1/(2T+2) definition."""
    both = list(cur_values) + list(pri_values)
    denom = 2 * T + 2
    r2_raw = sum(v for v in both if v > limits.i_b) / denom
    r1_raw = sum(v for v in both if v <= limits.i_b) / denom
    return r1_raw, r2_raw


def oracle_alpha(values, i_max):
    """Mode of tens digits with largest-value tie-break, via Counter."""
    digits = [oracle_headroom(v, i_max) // 10 for v in values]
    counts = Counter(digits)
    top = max(counts.values())
    return max(d for d, c in counts.items() if c == top) / 10.0


def oracle_thresholds(r1_bar, r2_bar, alpha, limits: CurrentLimits):
    """Flat enumeration of the four-case table for each threshold.

    Asserts exactly one case fires per threshold (the resolved table is a
    partition).
    """
    a, ib, b = limits.a, limits.i_b, limits.i_max

    cases_r2 = [
        ((1 + alpha) * r2_bar <= b and b - r2_bar >= r2_bar - ib, (1 + alpha) * r2_bar),
        ((1 - alpha) * r2_bar > ib and b - r2_bar < r2_bar - ib, (1 - alpha) * r2_bar),
        ((1 + alpha) * r2_bar > b and b - r2_bar >= r2_bar - ib, r2_bar),
        ((1 - alpha) * r2_bar <= ib and b - r2_bar < r2_bar - ib, r2_bar),
    ]
    hits = [value for fired, value in cases_r2 if fired]
    assert len(hits) == 1, f"r2 case table must fire exactly once, fired {len(hits)}"
    r2 = hits[0]

    cases_r1 = [
        ((1 - alpha) * r1_bar > a and r1_bar - a >= ib - r1_bar, (1 - alpha) * r1_bar),
        ((1 + alpha) * r1_bar <= ib and r1_bar - a < ib - r1_bar, (1 + alpha) * r1_bar),
        ((1 - alpha) * r1_bar <= a and r1_bar - a >= ib - r1_bar, r1_bar),
        ((1 + alpha) * r1_bar > ib and r1_bar - a < ib - r1_bar, r1_bar),
    ]
    hits = [value for fired, value in cases_r1 if fired]
    assert len(hits) == 1, f"r1 case table must fire exactly once, fired {len(hits)}"
    r1 = hits[0]
    return r1, r2


def oracle_recompute_from_window_pair(pair: WindowPair, limits: CurrentLimits, prev=None):
    """From-scratch R1/R2 (with fallback), alpha, r1/r2 from stored samples.

    prev = (prev_r1, prev_r2) last raw-accepted averages, or None. The
    returned dict reports whether each raw average was accepted so callers
    can maintain prev across a stream.
    """
    cur = [r.intensity for r in pair.current]
    pri = [r.intensity for r in pair.prior_year]
    T = pair.window_length
    r1_raw, r2_raw = oracle_averages(cur, pri, T, limits)
    prev_r1, prev_r2 = prev if prev is not None else (None, None)
    r2_accepted = limits.i_b < r2_raw < limits.i_max
    if r2_accepted:
        r2_bar = r2_raw
    else:
        r2_bar = prev_r2 if prev_r2 is not None else (limits.i_b + limits.i_max) / 2
    r1_accepted = limits.a < r1_raw <= limits.i_b
    if r1_accepted:
        r1_bar = r1_raw
    else:
        r1_bar = prev_r1 if prev_r1 is not None else (limits.a + limits.i_b) / 2
    alpha = oracle_alpha(cur + pri, limits.i_max)
    r1, r2 = oracle_thresholds(r1_bar, r2_bar, alpha, limits)
    return {
        "r1_bar": r1_bar,
        "r2_bar": r2_bar,
        "alpha": alpha,
        "r1": r1,
        "r2": r2,
        "r1_accepted": r1_accepted,
        "r2_accepted": r2_accepted,
    }


@pytest.fixture
def limits():
    return CurrentLimits(a=0.0, i_b=5.0, i_max=30.0)

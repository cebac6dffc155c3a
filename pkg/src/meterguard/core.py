"""Streaming verification core for smart-meter intensity data.

A meter stream is judged one reading at a time against an adaptive band
[r1, r2] built from two sliding windows of past intensities: the most
recent T+1 samples and their calendar twins from one year earlier.
Window samples below or at the basic current I_b feed the low cumulative
average R1; samples above it feed the high average R2. A quantized
rate-of-change coefficient (the tens digit of the percentage headroom to
the maximum allowed intensity, taken as the mode over both windows)
widens or shrinks those averages into thresholds, and each new reading is
mapped through the uniform-distribution CDF (GI - r1) / (r2 - r1): a
result outside [0, 1] flags suspected theft.

`DetectorState` is the single-owner sequential state machine; the pure
functions (`cumulative_averages`, `rate_of_change`, `thresholds`,
`verify`) expose the individual computations on explicit window pairs.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Optional, Sequence

__all__ = [
    "MeterGuardError",
    "WindowIncompleteError",
    "OutOfOrderTimestampError",
    "Reading",
    "CurrentLimits",
    "WindowPair",
    "CumulativeAverages",
    "RateOfChange",
    "DigitDecomposition",
    "Thresholds",
    "Verdict",
    "DetectorState",
    "WindowContext",
    "cumulative_averages",
    "rate_of_change",
    "thresholds",
    "verify",
    "digit_decomposition",
    "headroom_percent",
    "to_epoch_seconds",
    "from_epoch_seconds",
    "backshift_one_year",
    "backshift_epoch",
]


class MeterGuardError(Exception):
    """Base class for all meterguard errors."""


class WindowIncompleteError(MeterGuardError):
    """A window operation was invoked before both windows held T+1 samples."""


class OutOfOrderTimestampError(MeterGuardError):
    """A reading arrived at or before the newest accepted timestamp."""


_EPOCH = datetime(1970, 1, 1)
_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()

# Guard subtracted before ceil() in the headroom percentage: absorbs FP noise
# when the exact mathematical value is an integer. Decimal-valued meter data
# never lands within 1e-9 of an integer percentage otherwise.
_NJ_GUARD = 1e-9


def to_epoch_seconds(ts: datetime) -> int:
    """Naive datetime -> integer epoch seconds (no timezone involvement)."""
    return int((ts - _EPOCH) // timedelta(seconds=1))


def from_epoch_seconds(seconds: int) -> datetime:
    return _EPOCH + timedelta(seconds=int(seconds))


def backshift_one_year(ts: datetime) -> datetime:
    """Same calendar month/day/time one year earlier; 29 Feb maps to 28 Feb."""
    try:
        return ts.replace(year=ts.year - 1)
    except ValueError:
        return ts.replace(year=ts.year - 1, day=28)


def backshift_epoch(seconds: int) -> int:
    return to_epoch_seconds(backshift_one_year(from_epoch_seconds(seconds)))


def _backshift_day_ordinal(day: int, cache: dict) -> int:
    """Epoch-day -> epoch-day one calendar year earlier (memoized per date)."""
    hit = cache.get(day)
    if hit is not None:
        return hit
    d = date.fromordinal(day + _EPOCH_ORDINAL)
    try:
        shifted = d.replace(year=d.year - 1)
    except ValueError:
        shifted = d.replace(year=d.year - 1, day=28)
    out = shifted.toordinal() - _EPOCH_ORDINAL
    cache[day] = out
    return out


def backshift_epoch_array(ts_seconds) -> "object":
    """Vectorized calendar backshift for int64 epoch-second arrays."""
    import numpy as np

    ts = np.asarray(ts_seconds, dtype=np.int64)
    out = np.empty_like(ts)
    cache: dict = {}
    days = ts // 86400
    rems = ts - days * 86400
    days_list = days.tolist()
    for i, day in enumerate(days_list):
        out[i] = _backshift_day_ordinal(day, cache) * 86400
    out += rems
    return out


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reading:
    """One timestamped global-intensity sample (amperes, minute resolution)."""

    timestamp: datetime
    intensity: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.intensity) or self.intensity < 0.0:
            raise ValueError(f"intensity must be finite and >= 0, got {self.intensity!r}")


@dataclass(frozen=True)
class CurrentLimits:
    """Provider-set operating range: b = i_max > i_b (basic current) > a >= 0."""

    a: float = 0.0
    i_b: float = 5.0
    i_max: float = 30.0

    def __post_init__(self) -> None:
        if not (self.i_max > self.i_b > self.a >= 0.0):
            raise ValueError(
                f"limits must satisfy i_max > i_b > a >= 0, got "
                f"a={self.a}, i_b={self.i_b}, i_max={self.i_max}"
            )

    @property
    def b(self) -> float:
        """Upper limit alias: the maximum allowed intensity."""
        return self.i_max

    def scaled(self, factor: int) -> "CurrentLimits":
        """i_b and i_max multiplied by an active-meter count; a unchanged."""
        if factor < 1:
            raise ValueError(f"scale factor must be >= 1, got {factor}")
        return CurrentLimits(a=self.a, i_b=self.i_b * factor, i_max=self.i_max * factor)


@dataclass(frozen=True)
class WindowPair:
    """A current window and its year-earlier twin, both holding <= T+1 readings.

    Prior-year timestamps pair positionally with the current window's,
    shifted back by one calendar year.
    """

    current: tuple
    prior_year: tuple
    window_length: int  # T; a complete window holds T+1 samples

    @property
    def is_complete(self) -> bool:
        need = self.window_length + 1
        return len(self.current) == need and len(self.prior_year) == need


@dataclass(frozen=True)
class CumulativeAverages:
    """Indicator-filtered means over both windows (R1 low / R2 high).

    The fallback flags record when a raw average left its admissible
    interval and was replaced by the previous accepted value or the
    interval midpoint.
    """

    r1_bar: float
    r2_bar: float
    r1_fallback_used: bool = False
    r2_fallback_used: bool = False


@dataclass(frozen=True)
class RateOfChange:
    """Quantized scaling coefficient, one of 0.0, 0.1, ..., 1.0."""

    alpha: float


@dataclass(frozen=True)
class DigitDecomposition:
    """Headroom percent n_j split as n_j = 10 * alpha_j + beta_j."""

    n_j: int
    alpha_j: int
    beta_j: int


@dataclass(frozen=True)
class Thresholds:
    """Validity band for the next reading; b >= r2 > i_b >= r1 > a unless initial."""

    r1: float
    r2: float
    computed_from_window_start: Optional[datetime] = None
    is_initial: bool = False


@dataclass(frozen=True)
class Verdict:
    """Outcome of one verification: the CDF ratio and its [0, 1] membership."""

    query_timestamp: datetime
    ratio: float
    valid: bool
    thresholds_used: Optional[Thresholds] = None


# ---------------------------------------------------------------------------
# Scalar kernels shared by the public operations, DetectorState and the
# pure-Python batch engine. The compiled engine mirrors these expressions
# exactly; keep the arithmetic order stable.
# ---------------------------------------------------------------------------


def headroom_percent(intensity: float, i_max: float) -> int:
    """ceil of the percentage headroom below i_max, clamped to [0, 100]."""
    n = math.ceil(((i_max - intensity) / i_max) * 100.0 - _NJ_GUARD)
    if n < 0:
        return 0
    if n > 100:
        return 100
    return n


def digit_decomposition(intensity: float, i_max: float) -> DigitDecomposition:
    n = headroom_percent(intensity, i_max)
    alpha_j = n // 10
    return DigitDecomposition(n_j=n, alpha_j=alpha_j, beta_j=n - 10 * alpha_j)


def resolve_alpha(cur_nj: Sequence[int], pri_nj: Sequence[int]) -> float:
    """Mode of the tens digits over both windows; ties go to the largest."""
    counts = [0] * 11
    for n in cur_nj:
        counts[n // 10] += 1
    for n in pri_nj:
        counts[n // 10] += 1
    best = 0
    for v in range(11):
        if counts[v] >= counts[best]:
            best = v
    return best / 10.0


def resolve_averages(
    cur_values: Sequence[float],
    pri_values: Sequence[float],
    window_length: int,
    a: float,
    i_b: float,
    i_max: float,
    prev_r1: float,
    prev_r2: float,
) -> tuple:
    """R1/R2 with out-of-range fallback.

    Returns (r1_bar, r2_bar, r1_fallback, r2_fallback, next_prev_r1,
    next_prev_r2). prev_* are the last raw-accepted values (NaN when none).
    A raw average outside its interval, (a, i_b] for R1 and (i_b, i_max)
    for R2, is replaced by the previous accepted value, or the interval
    midpoint when none exists yet.
    """
    denom = float(2 * window_length + 2)
    s1 = 0.0
    s2 = 0.0
    for v in cur_values:
        if v > i_b:
            s2 += v
        else:
            s1 += v
    for v in pri_values:
        if v > i_b:
            s2 += v
        else:
            s1 += v
    r1_raw = s1 / denom
    r2_raw = s2 / denom

    if r2_raw > i_b and r2_raw < i_max:
        r2_bar = r2_raw
        r2_fb = False
        prev_r2 = r2_raw
    else:
        r2_fb = True
        r2_bar = prev_r2 if prev_r2 == prev_r2 else 0.5 * (i_b + i_max)

    if r1_raw > a and r1_raw <= i_b:
        r1_bar = r1_raw
        r1_fb = False
        prev_r1 = r1_raw
    else:
        r1_fb = True
        r1_bar = prev_r1 if prev_r1 == prev_r1 else 0.5 * (a + i_b)

    return r1_bar, r2_bar, r1_fb, r2_fb, prev_r1, prev_r2


def resolve_thresholds(
    r1_bar: float,
    r2_bar: float,
    alpha: float,
    a: float,
    i_b: float,
    i_max: float,
    is_initial: bool = False,
) -> tuple:
    """Piecewise threshold selection: (r1, r2).

    The scaling direction (widen toward the far limit, shrink toward the
    near one) is chosen by which side of the admissible interval the
    average sits on; if the scaled candidate would leave the interval, the
    average itself is kept. r1's shrink candidate must stay strictly above
    a so the band ordering r1 > a survives even at alpha = 1.
    """
    if is_initial:
        return a, i_max

    if i_max - r2_bar >= r2_bar - i_b:
        cand = (1.0 + alpha) * r2_bar
        r2 = cand if cand <= i_max else r2_bar
    else:
        cand = (1.0 - alpha) * r2_bar
        r2 = cand if cand > i_b else r2_bar

    if r1_bar - a >= i_b - r1_bar:
        cand = (1.0 - alpha) * r1_bar
        r1 = cand if cand > a else r1_bar
    else:
        cand = (1.0 + alpha) * r1_bar
        r1 = cand if cand <= i_b else r1_bar

    return r1, r2


def nearest_match(
    ts: Sequence[int], hi: int, target: int, tolerance: int
) -> int:
    """Index of the stored timestamp nearest to target among ts[0:hi].

    Returns -1 when no stored timestamp lies within tolerance seconds.
    Equidistant candidates resolve to the earlier sample.
    """
    if hi <= 0:
        return -1
    p = bisect_left(ts, target, 0, hi)
    best = -1
    best_d = tolerance + 1
    if p > 0:
        best = p - 1
        best_d = target - ts[p - 1]
    if p < hi:
        d = ts[p] - target
        if d < best_d:
            best = p
            best_d = d
    if best_d <= tolerance:
        return best
    return -1


def fill_holes(src: Sequence[int]) -> list:
    """Replace -1 entries with the nearest non-negative entry by position.

    Ties resolve to the earlier position. At least one entry must be >= 0.
    """
    n = len(src)
    out = list(src)
    left = [-1] * n
    last = -1
    for k in range(n):
        if src[k] >= 0:
            last = k
        left[k] = last
    nxt = -1
    for k in range(n - 1, -1, -1):
        if src[k] >= 0:
            nxt = k
        if out[k] < 0:
            lk = left[k]
            if lk < 0:
                out[k] = src[nxt]
            elif nxt < 0:
                out[k] = src[lk]
            else:
                out[k] = src[lk] if (k - lk) <= (nxt - k) else src[nxt]
    return out


# ---------------------------------------------------------------------------
# Public operations on explicit window pairs
# ---------------------------------------------------------------------------


def _require_complete(windows: WindowPair) -> None:
    if not windows.is_complete:
        raise WindowIncompleteError(
            f"both windows must hold exactly {windows.window_length + 1} samples "
            f"(got {len(windows.current)} current, {len(windows.prior_year)} prior)"
        )


def cumulative_averages(
    windows: WindowPair,
    limits: CurrentLimits,
    previous: Optional[CumulativeAverages] = None,
) -> CumulativeAverages:
    """Indicator-filtered means of both windows with the 1/(2T+2) denominator.

    `previous` supplies the substitute values when a raw average leaves its
    admissible interval (its r-values are always in range, whether they were
    themselves raw-accepted or substituted).
    """
    _require_complete(windows)
    prev_r1 = previous.r1_bar if previous is not None else math.nan
    prev_r2 = previous.r2_bar if previous is not None else math.nan
    r1_bar, r2_bar, fb1, fb2, _, _ = resolve_averages(
        [r.intensity for r in windows.current],
        [r.intensity for r in windows.prior_year],
        windows.window_length,
        limits.a,
        limits.i_b,
        limits.i_max,
        prev_r1,
        prev_r2,
    )
    return CumulativeAverages(
        r1_bar=r1_bar, r2_bar=r2_bar, r1_fallback_used=fb1, r2_fallback_used=fb2
    )


def rate_of_change(windows: WindowPair, limits: CurrentLimits) -> RateOfChange:
    """Quantized rate of change over the 2T+2 samples of both windows."""
    _require_complete(windows)
    cur_nj = [headroom_percent(r.intensity, limits.i_max) for r in windows.current]
    pri_nj = [headroom_percent(r.intensity, limits.i_max) for r in windows.prior_year]
    return RateOfChange(alpha=resolve_alpha(cur_nj, pri_nj))


def thresholds(
    averages: CumulativeAverages,
    alpha: RateOfChange,
    limits: CurrentLimits,
    is_initial: bool = False,
    window_start: Optional[datetime] = None,
) -> Thresholds:
    """Scale the cumulative averages into the validity band [r1, r2]."""
    r1, r2 = resolve_thresholds(
        averages.r1_bar,
        averages.r2_bar,
        alpha.alpha,
        limits.a,
        limits.i_b,
        limits.i_max,
        is_initial=is_initial,
    )
    return Thresholds(
        r1=r1, r2=r2, computed_from_window_start=window_start, is_initial=is_initial
    )


def verify(query: Reading, bounds: Thresholds) -> Verdict:
    """Uniform-CDF validity check of one reading against a threshold band."""
    ratio = (query.intensity - bounds.r1) / (bounds.r2 - bounds.r1)
    return Verdict(
        query_timestamp=query.timestamp,
        ratio=ratio,
        valid=0.0 <= ratio <= 1.0,
        thresholds_used=bounds,
    )


# ---------------------------------------------------------------------------
# Streaming state machine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowContext:
    """Threshold-generation state derived from the newest complete window pair."""

    r1: float
    r2: float
    r1_bar: float
    r2_bar: float
    alpha: float
    r1_fallback: bool
    r2_fallback: bool
    window_start_seconds: int


class DetectorState:
    """Per-meter sequential detector: verify each reading, then slide.

    Once both windows are full, an incoming reading is verified against the
    thresholds derived from the current window pair, then admitted (the
    windows slide forward one sample and all derived state is recomputed).
    During warm-up readings are admitted silently.

    Prior-year twins are matched per sample: the stored reading nearest to
    the current timestamp shifted back one calendar year, within one
    sampling period. Unmatched positions are filled from the nearest
    matched position in the window; a window with no matches at all falls
    back to a copy of the current window (cold start).
    """

    def __init__(
        self,
        limits: CurrentLimits = CurrentLimits(),
        window_length: int = 22,
        period_minutes: int = 5,
    ) -> None:
        if window_length < 1:
            raise ValueError(f"window_length must be >= 1, got {window_length}")
        if period_minutes < 1:
            raise ValueError(f"period_minutes must be >= 1, got {period_minutes}")
        self.limits = limits
        self.window_length = window_length
        self.period_minutes = period_minutes
        self._tolerance = period_minutes * 60
        # Retention horizon: one year back plus the window span plus slack,
        # so every reachable prior-year candidate stays resident.
        self._horizon = 366 * 86400 + (window_length + 1) * self._tolerance + 31 * 86400
        self._ts: list = []  # accepted epoch seconds
        self._gi: list = []  # accepted intensities
        self._nj: list = []  # per-sample headroom percent
        self._src: list = []  # absolute index of the prior-year match, -1 = hole
        self._base = 0  # absolute index of self._ts[0]
        self._count = 0  # total accepted samples
        self._prev_r1 = math.nan
        self._prev_r2 = math.nan
        self._context: Optional[WindowContext] = None

    @property
    def samples_accepted(self) -> int:
        return self._count

    @property
    def warmed_up(self) -> bool:
        """True once a complete window pair exists (verdicts are being emitted)."""
        return self._context is not None

    @property
    def context(self) -> Optional[WindowContext]:
        """Threshold state that will judge the next reading, if any."""
        return self._context

    def step(self, reading: Reading) -> Optional[Verdict]:
        """Verify (when warm) then admit one reading. Returns the verdict or None."""
        seconds = to_epoch_seconds(reading.timestamp)
        if self._ts and seconds <= self._ts[-1]:
            raise OutOfOrderTimestampError(
                f"reading at {reading.timestamp} is not after "
                f"{from_epoch_seconds(self._ts[-1])}"
            )
        verdict = None
        ctx = self._context
        if ctx is not None:
            verdict = verify(
                reading,
                Thresholds(
                    r1=ctx.r1,
                    r2=ctx.r2,
                    computed_from_window_start=from_epoch_seconds(ctx.window_start_seconds),
                    is_initial=False,
                ),
            )
        self._admit(seconds, reading.intensity)
        return verdict

    # -- internals ----------------------------------------------------------

    def _admit(self, seconds: int, intensity: float) -> None:
        target = backshift_epoch(seconds)
        pos = nearest_match(self._ts, len(self._ts), target, self._tolerance)
        self._ts.append(seconds)
        self._gi.append(intensity)
        self._nj.append(headroom_percent(intensity, self.limits.i_max))
        self._src.append(pos + self._base if pos >= 0 else -1)
        self._count += 1
        if self._count >= self.window_length + 1:
            self._refresh_context()
        self._trim(seconds)

    def _window_bounds(self) -> tuple:
        start_abs = self._count - 1 - self.window_length
        lo = start_abs - self._base
        hi = self._count - self._base
        return lo, hi

    def _effective_sources(self, lo: int, hi: int) -> list:
        srcs = self._src[lo:hi]
        if all(s < 0 for s in srcs):
            return [self._base + lo + k for k in range(len(srcs))]
        return fill_holes(srcs)

    def _refresh_context(self) -> None:
        lo, hi = self._window_bounds()
        cur_values = self._gi[lo:hi]
        cur_nj = self._nj[lo:hi]
        eff = self._effective_sources(lo, hi)
        pri_values = [self._gi[s - self._base] for s in eff]
        pri_nj = [self._nj[s - self._base] for s in eff]
        r1_bar, r2_bar, fb1, fb2, self._prev_r1, self._prev_r2 = resolve_averages(
            cur_values,
            pri_values,
            self.window_length,
            self.limits.a,
            self.limits.i_b,
            self.limits.i_max,
            self._prev_r1,
            self._prev_r2,
        )
        alpha = resolve_alpha(cur_nj, pri_nj)
        r1, r2 = resolve_thresholds(
            r1_bar,
            r2_bar,
            alpha,
            self.limits.a,
            self.limits.i_b,
            self.limits.i_max,
            is_initial=False,
        )
        self._context = WindowContext(
            r1=r1,
            r2=r2,
            r1_bar=r1_bar,
            r2_bar=r2_bar,
            alpha=alpha,
            r1_fallback=fb1,
            r2_fallback=fb2,
            window_start_seconds=self._ts[lo],
        )

    def _trim(self, newest: int) -> None:
        cutoff = newest - self._horizon
        if self._ts[0] >= cutoff:
            return
        cut = bisect_left(self._ts, cutoff)
        keep_from = len(self._ts) - (self.window_length + 1)
        if cut > keep_from:
            cut = keep_from
        if cut <= 0:
            return
        del self._ts[:cut]
        del self._gi[:cut]
        del self._nj[:cut]
        del self._src[:cut]
        self._base += cut

    def window_pair(self) -> Optional[WindowPair]:
        """Materialize the effective window pair (holes filled), oldest first."""
        if self._count < self.window_length + 1:
            return None
        lo, hi = self._window_bounds()
        eff = self._effective_sources(lo, hi)
        current = tuple(
            Reading(from_epoch_seconds(self._ts[lo + k]), self._gi[lo + k])
            for k in range(hi - lo)
        )
        prior = tuple(
            Reading(
                backshift_one_year(from_epoch_seconds(self._ts[lo + k])),
                self._gi[eff[k] - self._base],
            )
            for k in range(hi - lo)
        )
        return WindowPair(current=current, prior_year=prior, window_length=self.window_length)

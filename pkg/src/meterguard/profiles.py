"""Season / time-of-day / day-type consumption profiles.

Consumption patterns differ between seasons, between day and night, and
between weekdays and weekends, so thresholds are built separately per
bucket: each reading routes to exactly one of 16 (season, period, daytype)
keys, and every bucket runs an independent detector over its own
subsequence, including its own prior-year window alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, Mapping, Optional

from .core import CurrentLimits, DetectorState, Reading, Verdict

SEASONS = ("winter", "spring", "summer", "autumn")
PERIODS = ("day", "night")
DAYTYPES = ("weekday", "weekend")

DEFAULT_SEASON_BY_MONTH: Mapping[int, str] = {
    12: "winter", 1: "winter", 2: "winter",
    3: "spring", 4: "spring", 5: "spring",
    6: "summer", 7: "summer", 8: "summer",
    9: "autumn", 10: "autumn", 11: "autumn",
}


@dataclass(frozen=True)
class ProfileKey:
    season: str
    period: str
    daytype: str

    def __post_init__(self) -> None:
        if self.season not in SEASONS or self.period not in PERIODS or self.daytype not in DAYTYPES:
            raise ValueError(f"invalid profile key ({self.season}, {self.period}, {self.daytype})")

    @property
    def label(self) -> str:
        return f"{self.season}-{self.period}-{self.daytype}"

    @classmethod
    def from_label(cls, label: str) -> "ProfileKey":
        season, period, daytype = label.split("-")
        return cls(season, period, daytype)


#: Fixed bucket order; index = season*4 + period*2 + daytype.
BUCKET_ORDER = tuple(
    ProfileKey(s, p, d) for s in SEASONS for p in PERIODS for d in DAYTYPES
)
_BUCKET_INDEX = {key: i for i, key in enumerate(BUCKET_ORDER)}


@dataclass(frozen=True)
class ProfileConfig:
    """Bucket boundaries. Defaults: month-based seasons, day = [06:00, 18:00),
    weekend = Saturday/Sunday."""

    season_by_month: Mapping[int, str] = field(
        default_factory=lambda: dict(DEFAULT_SEASON_BY_MONTH)
    )
    day_start_hour: int = 6
    day_end_hour: int = 18
    weekend_days: frozenset = frozenset({5, 6})  # Monday = 0

    def __post_init__(self) -> None:
        months = set(self.season_by_month)
        if months != set(range(1, 13)):
            raise ValueError("season_by_month must map every month 1..12")
        bad = set(self.season_by_month.values()) - set(SEASONS)
        if bad:
            raise ValueError(f"unknown seasons {sorted(bad)}")
        if not (0 <= self.day_start_hour < self.day_end_hour <= 24):
            raise ValueError("day window must satisfy 0 <= start < end <= 24")
        if not self.weekend_days <= set(range(7)):
            raise ValueError("weekend_days must be weekday numbers 0..6")


DEFAULT_PROFILE_CONFIG = ProfileConfig()


def classify(timestamp: datetime, config: ProfileConfig = DEFAULT_PROFILE_CONFIG) -> ProfileKey:
    """Route a timestamp to its (season, period, daytype) bucket."""
    season = config.season_by_month[timestamp.month]
    period = "day" if config.day_start_hour <= timestamp.hour < config.day_end_hour else "night"
    daytype = "weekend" if timestamp.weekday() in config.weekend_days else "weekday"
    return ProfileKey(season, period, daytype)


def bucket_index(key: ProfileKey) -> int:
    return _BUCKET_INDEX[key]


def classify_epochs(ts_seconds, config: ProfileConfig = DEFAULT_PROFILE_CONFIG):
    """Vectorized bucket index per int64 epoch-second timestamp."""
    import numpy as np

    ts = np.asarray(ts_seconds, dtype=np.int64)
    months = ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64) % 12 + 1
    season_of_month = np.zeros(13, dtype=np.int64)
    for m, s in config.season_by_month.items():
        season_of_month[m] = SEASONS.index(s)
    season_idx = season_of_month[months]
    hours = (ts % 86400) // 3600
    period_idx = np.where((hours >= config.day_start_hour) & (hours < config.day_end_hour), 0, 1)
    dow = (ts // 86400 + 3) % 7  # epoch day 0 was a Thursday
    weekend_mask = np.zeros(7, dtype=bool)
    for d in config.weekend_days:
        weekend_mask[d] = True
    daytype_idx = weekend_mask[dow].astype(np.int64)
    return season_idx * 4 + period_idx * 2 + daytype_idx


@dataclass(frozen=True)
class DetectorConfig:
    """Everything needed to build detectors: limits, window, cadence, buckets."""

    limits: CurrentLimits = CurrentLimits()
    window_length: int = 22
    period_minutes: int = 5
    profile: ProfileConfig = DEFAULT_PROFILE_CONFIG


class ProfiledDetector:
    """One independent DetectorState per profile bucket, routed by timestamp."""

    def __init__(self, config: DetectorConfig = DetectorConfig()) -> None:
        self.config = config
        self.detectors: Dict[ProfileKey, DetectorState] = {}

    def detector_for(self, key: ProfileKey) -> DetectorState:
        state = self.detectors.get(key)
        if state is None:
            state = DetectorState(
                limits=self.config.limits,
                window_length=self.config.window_length,
                period_minutes=self.config.period_minutes,
            )
            self.detectors[key] = state
        return state

    def step(self, reading: Reading) -> Optional[Verdict]:
        """Delegate to the reading's bucket; warm-up applies per bucket."""
        key = classify(reading.timestamp, self.config.profile)
        return self.detector_for(key).step(reading)

    def route(self, reading: Reading) -> ProfileKey:
        return classify(reading.timestamp, self.config.profile)

"""Batch detection engine: runs whole streams through the per-bucket loop.

At import time the compiled extension (`meterguard._fastloop`) is selected
when available, with the pure-Python loop (`meterguard._pyloop`) as
fallback. Both produce bit-identical results; `engine=` lets callers and
the benchmark pin one explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _pyloop
from .core import MeterGuardError, backshift_epoch_array
from .profiles import BUCKET_ORDER, DetectorConfig, classify_epochs

try:
    from . import _fastloop
except ImportError:  # pragma: no cover - depends on build environment
    _fastloop = None

DEFAULT_ENGINE = "compiled" if _fastloop is not None else "python"


def available_engines() -> tuple:
    return ("python", "compiled") if _fastloop is not None else ("python",)


def _select(engine: str):
    if engine == "auto":
        engine = DEFAULT_ENGINE
    if engine == "python":
        return _pyloop
    if engine == "compiled":
        if _fastloop is None:
            raise MeterGuardError("compiled engine requested but _fastloop is not built")
        return _fastloop
    raise ValueError(f"unknown engine {engine!r}")


@dataclass
class StreamResult:
    """Per-input-position outputs of a detection run.

    Positions without a verdict (per-bucket warm-up) have has_verdict False
    and NaN in the float columns. The threshold columns hold the values the
    verdict at that position was judged against.
    """

    timestamps: np.ndarray
    intensity: np.ndarray
    has_verdict: np.ndarray
    valid: np.ndarray
    ratio: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r1_bar: np.ndarray
    r2_bar: np.ndarray
    alpha: np.ndarray
    r1_fallback: np.ndarray
    r2_fallback: np.ndarray
    bucket: Optional[np.ndarray] = None  # bucket index per position, if profiled

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def verdict_count(self) -> int:
        return int(self.has_verdict.sum())

    @property
    def invalid_count(self) -> int:
        return int((self.has_verdict & ~self.valid).sum())

    def bucket_label(self, position: int) -> Optional[str]:
        if self.bucket is None:
            return None
        return BUCKET_ORDER[int(self.bucket[position])].label


_FIELDS = (
    "has_verdict",
    "valid",
    "ratio",
    "r1",
    "r2",
    "r1_bar",
    "r2_bar",
    "alpha",
    "r1_fallback",
    "r2_fallback",
)


def _validate_stream(ts: np.ndarray) -> None:
    if len(ts) > 1 and not bool((np.diff(ts) > 0).all()):
        raise MeterGuardError("stream timestamps must be strictly increasing")


def run_stream(
    ts_seconds,
    intensity,
    config: DetectorConfig = DetectorConfig(),
    engine: str = "auto",
) -> StreamResult:
    """Run one unprofiled stream (a single bucket) through the detector."""
    impl = _select(engine)
    ts = np.ascontiguousarray(ts_seconds, dtype=np.int64)
    gi = np.ascontiguousarray(intensity, dtype=np.float64)
    _validate_stream(ts)
    targets = backshift_epoch_array(ts)
    out = impl.run_bucket(
        ts,
        gi,
        targets,
        config.window_length,
        config.limits.a,
        config.limits.i_b,
        config.limits.i_max,
        config.period_minutes * 60,
    )
    return StreamResult(timestamps=ts, intensity=gi, **out)


def run_profiled(
    ts_seconds,
    intensity,
    config: DetectorConfig = DetectorConfig(),
    engine: str = "auto",
) -> StreamResult:
    """Route the stream into profile buckets and detect per bucket.

    Equivalent to replaying each bucket's subsequence through its own
    detector; outputs are scattered back to original stream positions.
    """
    impl = _select(engine)
    ts = np.ascontiguousarray(ts_seconds, dtype=np.int64)
    gi = np.ascontiguousarray(intensity, dtype=np.float64)
    _validate_stream(ts)
    buckets = classify_epochs(ts, config.profile)
    targets = backshift_epoch_array(ts)

    n = len(ts)
    merged = {
        "has_verdict": np.zeros(n, dtype=bool),
        "valid": np.zeros(n, dtype=bool),
        "ratio": np.full(n, np.nan),
        "r1": np.full(n, np.nan),
        "r2": np.full(n, np.nan),
        "r1_bar": np.full(n, np.nan),
        "r2_bar": np.full(n, np.nan),
        "alpha": np.full(n, np.nan),
        "r1_fallback": np.zeros(n, dtype=bool),
        "r2_fallback": np.zeros(n, dtype=bool),
    }
    for b in range(len(BUCKET_ORDER)):
        idx = np.nonzero(buckets == b)[0]
        if len(idx) == 0:
            continue
        out = impl.run_bucket(
            ts[idx],
            gi[idx],
            targets[idx],
            config.window_length,
            config.limits.a,
            config.limits.i_b,
            config.limits.i_max,
            config.period_minutes * 60,
        )
        for name in _FIELDS:
            merged[name][idx] = out[name]
    return StreamResult(timestamps=ts, intensity=gi, bucket=buckets, **merged)

"""Stream ingestion: UCI household CSV parsing, synthetic stream generation,
and labeled forged-reading injection.

The canonical on-disk stream format is a CSV with header
``timestamp,intensity_amps,label`` (ISO-8601 minute timestamps, label 1 on
forged rows). The UCI household power consumption format (semicolon
separated, ``?`` for missing values, dd/mm/yyyy dates) is parsed into the
same in-memory representation; only date, time and global intensity feed
the detector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .core import MeterGuardError, Reading, from_epoch_seconds, to_epoch_seconds
from .profiles import BUCKET_ORDER, DetectorConfig, ProfileConfig, classify_epochs

UCI_HEADER = (
    "Date;Time;Global_active_power;Global_reactive_power;Voltage;"
    "Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3"
)
CANONICAL_HEADER = "timestamp,intensity_amps,label"
MISSING = "?"


class MalformedRowError(MeterGuardError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NonMonotoneTimestampError(MeterGuardError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InsufficientEligiblePositionsError(MeterGuardError):
    pass


@dataclass
class Stream:
    """Array-form reading stream; labels mark forged positions (None = unlabeled)."""

    ts_seconds: np.ndarray
    intensity: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.ts_seconds = np.ascontiguousarray(self.ts_seconds, dtype=np.int64)
        self.intensity = np.ascontiguousarray(self.intensity, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=bool)
            if len(self.labels) != len(self.ts_seconds):
                raise ValueError("labels and readings must have equal length")
        if len(self.intensity) != len(self.ts_seconds):
            raise ValueError("intensity and timestamps must have equal length")

    def __len__(self) -> int:
        return len(self.ts_seconds)

    def readings(self) -> List[Reading]:
        return [
            Reading(from_epoch_seconds(s), v)
            for s, v in zip(self.ts_seconds.tolist(), self.intensity.tolist())
        ]


def readings_to_stream(readings: Sequence[Reading]) -> Stream:
    ts = np.fromiter((to_epoch_seconds(r.timestamp) for r in readings), dtype=np.int64, count=len(readings))
    gi = np.fromiter((r.intensity for r in readings), dtype=np.float64, count=len(readings))
    return Stream(ts_seconds=ts, intensity=gi)


@dataclass(frozen=True)
class UciRecord:
    """One fully-parsed UCI row. Missing numeric fields are None."""

    date: str
    time: str
    global_active_power: Optional[float]
    global_reactive_power: Optional[float]
    voltage: Optional[float]
    global_intensity: Optional[float]
    sub_metering_1: Optional[float]
    sub_metering_2: Optional[float]
    sub_metering_3: Optional[float]


@dataclass(frozen=True)
class ParseSummary:
    rows_read: int
    rows_emitted: int
    rows_dropped: int
    rows_malformed: int


def parse_uci_record(line: str, line_number: int = 0) -> UciRecord:
    fields = line.rstrip("\r\n").split(";")
    if len(fields) != 9:
        raise MalformedRowError(line_number, f"expected 9 fields, got {len(fields)}")

    def num(value: str) -> Optional[float]:
        if value == MISSING or value == "":
            return None
        return float(value)

    try:
        return UciRecord(
            date=fields[0],
            time=fields[1],
            global_active_power=num(fields[2]),
            global_reactive_power=num(fields[3]),
            voltage=num(fields[4]),
            global_intensity=num(fields[5]),
            sub_metering_1=num(fields[6]),
            sub_metering_2=num(fields[7]),
            sub_metering_3=num(fields[8]),
        )
    except ValueError as exc:
        raise MalformedRowError(line_number, str(exc)) from None


_EPOCH_DT = datetime(1970, 1, 1)


def _day_seconds(day: str, cache: dict, line_number: int) -> int:
    hit = cache.get(day)
    if hit is not None:
        return hit
    try:
        d = int(day[0:2])
        m = int(day[3:5])
        y = int(day[6:10])
        if day[2] != "/" or day[5] != "/" or len(day) != 10:
            raise ValueError
        base = int((datetime(y, m, d) - _EPOCH_DT).total_seconds())
    except (ValueError, IndexError):
        raise MalformedRowError(line_number, f"bad date {day!r}") from None
    cache[day] = base
    return base


def _scan_uci(handle: TextIO, on_malformed: str) -> Tuple[list, list, ParseSummary]:
    header = handle.readline()
    if not header.startswith("Date;Time;"):
        raise MalformedRowError(1, "missing UCI header row")
    ts: list = []
    gi: list = []
    rows_read = 0
    dropped = 0
    malformed = 0
    day_cache: dict = {}
    last = None
    line_number = 1
    for line in handle:
        line_number += 1
        if line == "\n" or line == "":
            continue
        rows_read += 1
        fields = line.rstrip("\r\n").split(";")
        try:
            if len(fields) != 9:
                raise MalformedRowError(line_number, f"expected 9 fields, got {len(fields)}")
            date_s, time_s, raw_gi = fields[0], fields[1], fields[5]
            if date_s == MISSING or time_s == MISSING or raw_gi == MISSING:
                dropped += 1
                continue
            seconds = _day_seconds(date_s, day_cache, line_number)
            try:
                hh = int(time_s[0:2])
                mm = int(time_s[3:5])
                if time_s[2] != ":" or hh > 23 or mm > 59:
                    raise ValueError
            except (ValueError, IndexError):
                raise MalformedRowError(line_number, f"bad time {time_s!r}") from None
            seconds += hh * 3600 + mm * 60
            try:
                value = float(raw_gi)
            except ValueError:
                raise MalformedRowError(line_number, f"bad global_intensity {raw_gi!r}") from None
            if not math.isfinite(value) or value < 0.0:
                raise MalformedRowError(line_number, f"global_intensity out of range: {raw_gi!r}")
        except MalformedRowError:
            if on_malformed == "count":
                malformed += 1
                continue
            raise
        if last is not None and seconds <= last:
            raise NonMonotoneTimestampError(
                line_number, f"timestamp {date_s} {time_s} is not after the previous row"
            )
        last = seconds
        ts.append(seconds)
        gi.append(value)
    summary = ParseSummary(
        rows_read=rows_read,
        rows_emitted=len(ts),
        rows_dropped=dropped,
        rows_malformed=malformed,
    )
    return ts, gi, summary


def _open_maybe(source: Union[str, Path, TextIO]):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def load_uci(source: Union[str, Path, TextIO], on_malformed: str = "raise") -> Tuple[Stream, ParseSummary]:
    """Parse the UCI format into an array stream plus a totals summary.

    on_malformed: "raise" (default) aborts with a line-numbered error;
    "count" skips malformed rows and tallies them in the summary.
    """
    if on_malformed not in ("raise", "count"):
        raise ValueError(f"on_malformed must be 'raise' or 'count', got {on_malformed!r}")
    handle, owned = _open_maybe(source)
    try:
        ts, gi, summary = _scan_uci(handle, on_malformed)
    finally:
        if owned:
            handle.close()
    stream = Stream(
        ts_seconds=np.array(ts, dtype=np.int64),
        intensity=np.array(gi, dtype=np.float64),
    )
    return stream, summary


def parse_uci(source: Union[str, Path, TextIO], on_malformed: str = "raise") -> Tuple[List[Reading], ParseSummary]:
    """Parse the UCI format into Reading objects (file order preserved)."""
    stream, summary = load_uci(source, on_malformed=on_malformed)
    return stream.readings(), summary


# ---------------------------------------------------------------------------
# Canonical stream files
# ---------------------------------------------------------------------------


def format_timestamp(seconds: int) -> str:
    return from_epoch_seconds(seconds).strftime("%Y-%m-%dT%H:%M")


def parse_timestamp(text: str, line_number: int = 0) -> int:
    try:
        y = int(text[0:4])
        mo = int(text[5:7])
        d = int(text[8:10])
        hh = int(text[11:13])
        mi = int(text[14:16])
        if text[4] != "-" or text[7] != "-" or text[10] != "T" or text[13] != ":":
            raise ValueError
        return to_epoch_seconds(datetime(y, mo, d, hh, mi))
    except (ValueError, IndexError):
        raise MalformedRowError(line_number, f"bad timestamp {text!r}") from None


def write_canonical(path: Union[str, Path], stream: Stream) -> None:
    labels = stream.labels
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CANONICAL_HEADER + "\n")
        ts_l = stream.ts_seconds.tolist()
        gi_l = stream.intensity.tolist()
        lb_l = labels.tolist() if labels is not None else [False] * len(ts_l)
        for s, v, lab in zip(ts_l, gi_l, lb_l):
            fh.write(f"{format_timestamp(s)},{v!r},{1 if lab else 0}\n")


def read_canonical(source: Union[str, Path, TextIO]) -> Stream:
    handle, owned = _open_maybe(source)
    try:
        header = handle.readline().rstrip("\r\n")
        if header != CANONICAL_HEADER:
            raise MalformedRowError(1, f"expected header {CANONICAL_HEADER!r}, got {header!r}")
        ts: list = []
        gi: list = []
        labels: list = []
        last = None
        line_number = 1
        for line in handle:
            line_number += 1
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise MalformedRowError(line_number, f"expected 3 columns, got {len(parts)}")
            seconds = parse_timestamp(parts[0], line_number)
            if last is not None and seconds <= last:
                raise NonMonotoneTimestampError(line_number, "timestamps must strictly increase")
            last = seconds
            try:
                value = float(parts[1])
                label = int(parts[2])
            except ValueError as exc:
                raise MalformedRowError(line_number, str(exc)) from None
            if label not in (0, 1):
                raise MalformedRowError(line_number, f"label must be 0 or 1, got {parts[2]!r}")
            ts.append(seconds)
            gi.append(value)
            labels.append(bool(label))
    finally:
        if owned:
            handle.close()
    return Stream(
        ts_seconds=np.array(ts, dtype=np.int64),
        intensity=np.array(gi, dtype=np.float64),
        labels=np.array(labels, dtype=bool),
    )


def sniff_format(path: Union[str, Path]) -> str:
    """'uci' or 'canonical', by header row."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("Date;Time;"):
        return "uci"
    if first.rstrip("\r\n") == CANONICAL_HEADER:
        return "canonical"
    raise MalformedRowError(1, "unrecognized stream header")


def load_stream(path: Union[str, Path]) -> Stream:
    """Read a canonical or UCI stream file, sniffing the format."""
    kind = sniff_format(path)
    if kind == "uci":
        stream, _ = load_uci(path)
        return stream
    return read_canonical(path)


# ---------------------------------------------------------------------------
# Synthetic streams
# ---------------------------------------------------------------------------

#: Desk-scale defaults: day buckets sit above the 5 A basic current, night
#: buckets below it, with mild seasonal movement. All within (0, 30).
DEFAULT_AMPLITUDES: Mapping[str, float] = {
    "winter-day-weekday": 8.0,
    "winter-day-weekend": 9.0,
    "winter-night-weekday": 3.5,
    "winter-night-weekend": 4.0,
    "spring-day-weekday": 7.0,
    "spring-day-weekend": 8.0,
    "spring-night-weekday": 3.0,
    "spring-night-weekend": 3.5,
    "summer-day-weekday": 10.0,
    "summer-day-weekend": 11.0,
    "summer-night-weekday": 4.5,
    "summer-night-weekend": 5.0,
    "autumn-day-weekday": 7.5,
    "autumn-day-weekend": 8.5,
    "autumn-night-weekday": 3.2,
    "autumn-night-weekend": 3.8,
}


def synthesize(
    start: datetime,
    end: datetime,
    period_minutes: int,
    seed: int,
    amplitudes: Optional[Mapping[str, float]] = None,
    noise_scale: float = 0.5,
    clamp_max: float = 30.0,
    profile_config: ProfileConfig = ProfileConfig(),
) -> Stream:
    """Deterministic per-bucket-mean stream with bounded uniform noise.

    Each sample is its bucket's mean amplitude plus uniform noise in
    [-noise_scale, +noise_scale], clamped to [0, clamp_max]. Identical
    arguments (including seed) reproduce the stream bit for bit.
    """
    if end <= start:
        raise ValueError("end must be after start")
    amps = dict(DEFAULT_AMPLITUDES if amplitudes is None else amplitudes)
    means = np.empty(len(BUCKET_ORDER))
    for i, key in enumerate(BUCKET_ORDER):
        try:
            mean = float(amps[key.label])
        except KeyError:
            raise ValueError(f"no amplitude for bucket {key.label}") from None
        if not (0.0 < mean < clamp_max):
            raise ValueError(f"amplitude for {key.label} must lie in (0, {clamp_max})")
        means[i] = mean
    ts = np.arange(
        to_epoch_seconds(start), to_epoch_seconds(end), period_minutes * 60, dtype=np.int64
    )
    buckets = classify_epochs(ts, profile_config)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-noise_scale, noise_scale, len(ts))
    values = np.clip(means[buckets] + noise, 0.0, clamp_max)
    return Stream(ts_seconds=ts, intensity=values)


# ---------------------------------------------------------------------------
# Attack injection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackSpec:
    """How many readings to forge, what value to write, and the RNG seed.

    value_source forms: ``constant:<amps>``, ``factor:<multiplier>`` (scales
    the true value), or ``file:<path>`` (one value per line, consumed in
    sorted-position order, cycling).
    """

    count: int
    value_source: str = "constant:25"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("count must be >= 0")
        _parse_value_source(self.value_source)  # validate early


def _parse_value_source(spec: str) -> tuple:
    kind, _, arg = spec.partition(":")
    if kind == "constant":
        value = float(arg)
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"constant forged value must be finite and >= 0, got {arg!r}")
        return ("constant", value)
    if kind == "factor":
        factor = float(arg)
        if not np.isfinite(factor) or factor < 0:
            raise ValueError(f"factor must be finite and >= 0, got {arg!r}")
        return ("factor", factor)
    if kind == "file":
        if not arg:
            raise ValueError("file value source needs a path: file:<path>")
        return ("file", arg)
    raise ValueError(f"unknown value source {spec!r} (constant:/factor:/file:)")


@dataclass(frozen=True)
class InjectionManifest:
    """Ground-truth provenance: where, what was there, what was written."""

    positions: tuple
    original_values: tuple
    forged_values: tuple
    seed: int
    value_source: str

    def to_dict(self) -> dict:
        return {
            "count": len(self.positions),
            "seed": self.seed,
            "value_source": self.value_source,
            "positions": list(self.positions),
            "original_values": list(self.original_values),
            "forged_values": list(self.forged_values),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InjectionManifest":
        return cls(
            positions=tuple(data["positions"]),
            original_values=tuple(data["original_values"]),
            forged_values=tuple(data["forged_values"]),
            seed=data["seed"],
            value_source=data["value_source"],
        )

    def write(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "InjectionManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class LabeledStream:
    """A stream with per-reading forged/honest labels and their provenance."""

    stream: Stream
    manifest: InjectionManifest

    @property
    def labels(self) -> np.ndarray:
        return self.stream.labels


def eligible_positions(stream: Stream, config: DetectorConfig) -> np.ndarray:
    """Positions whose bucket already holds at least T+1 earlier samples.

    Injections restricted to these positions are guaranteed to receive a
    verdict (their bucket's detector is past warm-up).
    """
    buckets = classify_epochs(stream.ts_seconds, config.profile)
    keep = []
    for b in range(len(BUCKET_ORDER)):
        idx = np.nonzero(buckets == b)[0]
        if len(idx) > config.window_length + 1:
            keep.append(idx[config.window_length + 1 :])
    if not keep:
        return np.empty(0, dtype=np.int64)
    out = np.concatenate(keep)
    out.sort()
    return out


def inject(
    stream: Stream,
    attack: AttackSpec,
    config: DetectorConfig = DetectorConfig(),
) -> LabeledStream:
    """Overwrite attack.count uniform-random eligible positions with forged values.

    Deterministic given (stream, attack); the manifest records original and
    forged values per position. Non-injected positions are untouched.
    """
    n = len(stream)
    if attack.count > n:
        raise InsufficientEligiblePositionsError(
            f"cannot inject {attack.count} faults into a stream of {n} readings"
        )
    eligible = eligible_positions(stream, config)
    if attack.count > len(eligible):
        raise InsufficientEligiblePositionsError(
            f"only {len(eligible)} eligible positions for {attack.count} injections"
        )
    rng = np.random.default_rng(attack.seed)
    if attack.count > 0:
        positions = np.sort(rng.choice(eligible, size=attack.count, replace=False))
    else:
        positions = np.empty(0, dtype=np.int64)

    originals = stream.intensity[positions].copy()
    kind, arg = _parse_value_source(attack.value_source)
    if kind == "constant":
        forged = np.full(len(positions), float(arg))
    elif kind == "factor":
        forged = originals * float(arg)
    else:
        pool = _read_value_file(arg)
        if len(pool) == 0:
            raise ValueError(f"value file {arg!r} contains no values")
        forged = np.array([pool[i % len(pool)] for i in range(len(positions))])
    if len(forged) and (not np.all(np.isfinite(forged)) or forged.min() < 0):
        raise ValueError("forged values must be finite and >= 0")

    values = stream.intensity.copy()
    values[positions] = forged
    labels = np.zeros(n, dtype=bool)
    labels[positions] = True
    injected = Stream(ts_seconds=stream.ts_seconds.copy(), intensity=values, labels=labels)
    manifest = InjectionManifest(
        positions=tuple(int(p) for p in positions),
        original_values=tuple(float(v) for v in originals),
        forged_values=tuple(float(v) for v in forged),
        seed=attack.seed,
        value_source=attack.value_source,
    )
    return LabeledStream(stream=injected, manifest=manifest)


def _read_value_file(path: str) -> list:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                values.append(float(line))
    return values

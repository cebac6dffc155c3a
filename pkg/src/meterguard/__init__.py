"""meterguard: streaming energy-theft detection for smart-meter intensity data.

Verifies each meter reading against an adaptive threshold band derived
from seasonal sliding-window cumulative averages, routes readings through
season/time-of-day/day-type profiles, simulates the grid verification
hierarchy, and evaluates detection quality against injected forged
readings.
"""

from .core import (
    CumulativeAverages,
    CurrentLimits,
    DetectorState,
    DigitDecomposition,
    MeterGuardError,
    OutOfOrderTimestampError,
    RateOfChange,
    Reading,
    Thresholds,
    Verdict,
    WindowIncompleteError,
    WindowPair,
    cumulative_averages,
    digit_decomposition,
    rate_of_change,
    thresholds,
    verify,
)
from .engine import DEFAULT_ENGINE, StreamResult, available_engines, run_profiled, run_stream
from .evaluate import ConfusionMatrix, MetricsReport, metrics, score
from .hierarchy import (
    Alert,
    GridNode,
    GridSimulator,
    GridTopology,
    aggregate,
    scale_limits,
)
from .ingest import (
    AttackSpec,
    InjectionManifest,
    LabeledStream,
    ParseSummary,
    Stream,
    UciRecord,
    inject,
    load_uci,
    parse_uci,
    read_canonical,
    synthesize,
    write_canonical,
)
from .profiles import (
    BUCKET_ORDER,
    DetectorConfig,
    ProfileConfig,
    ProfiledDetector,
    ProfileKey,
    classify,
)

__version__ = "0.1.0"

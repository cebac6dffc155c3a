"""Command-line front door: detect / inject / eval / simulate / synth / bench.

Every command is deterministic given its flags (and seed); identical
invocations write byte-identical outputs. Exit codes: 0 clean, 1 usage or
input error, 2 theft detected.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CurrentLimits, MeterGuardError, Verdict, from_epoch_seconds
from .engine import DEFAULT_ENGINE, StreamResult, available_engines, run_profiled, run_stream
from .evaluate import AlignmentError, metrics, score
from .hierarchy import GridSimulator, GridTopology
from .ingest import (
    AttackSpec,
    DEFAULT_AMPLITUDES,
    Stream,
    format_timestamp,
    inject,
    load_stream,
    parse_timestamp,
    read_canonical,
    synthesize,
    write_canonical,
)
from .profiles import DetectorConfig, ProfileConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THEFT = 2


class UsageError(MeterGuardError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on bad usage, per the CLI contract
        raise UsageError(message)


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _build_detector_config(args, cfg: dict) -> DetectorConfig:
    """Config file values overridden by explicit flags."""
    limits_cfg = cfg.get("limits", {})
    a = args.a_limit if args.a_limit is not None else limits_cfg.get("a", 0.0)
    i_b = args.i_b if args.i_b is not None else limits_cfg.get("i_b", 5.0)
    i_max = args.i_max if args.i_max is not None else limits_cfg.get("i_max", 30.0)
    t_window = args.t_window if args.t_window is not None else cfg.get("t_window", 22)
    period = (
        args.period_minutes
        if args.period_minutes is not None
        else cfg.get("period_minutes", 5)
    )
    profile_cfg = cfg.get("profile", {})
    profile_kwargs = {}
    if "season_by_month" in profile_cfg:
        profile_kwargs["season_by_month"] = {
            int(k): v for k, v in profile_cfg["season_by_month"].items()
        }
    if "day_start_hour" in profile_cfg:
        profile_kwargs["day_start_hour"] = int(profile_cfg["day_start_hour"])
    if "day_end_hour" in profile_cfg:
        profile_kwargs["day_end_hour"] = int(profile_cfg["day_end_hour"])
    if "weekend_days" in profile_cfg:
        profile_kwargs["weekend_days"] = frozenset(int(d) for d in profile_cfg["weekend_days"])
    return DetectorConfig(
        limits=CurrentLimits(a=float(a), i_b=float(i_b), i_max=float(i_max)),
        window_length=int(t_window),
        period_minutes=int(period),
        profile=ProfileConfig(**profile_kwargs) if profile_kwargs else ProfileConfig(),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override file values)")
    parser.add_argument("--seed", type=int, help="PRNG seed (required for randomized steps)")
    parser.add_argument("--t-window", type=int, dest="t_window", help="window length T (samples)")
    parser.add_argument("--i-max", type=float, dest="i_max", help="maximum allowed intensity (A)")
    parser.add_argument("--i-b", type=float, dest="i_b", help="basic current (A)")
    parser.add_argument("--a-limit", type=float, dest="a_limit", help="minimal current level (A)")
    parser.add_argument(
        "--period-minutes", type=int, dest="period_minutes", help="sampling period (minutes)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meterguard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="verify a stream and emit verdicts + threshold trace")
    p.add_argument("--input", required=True, help="stream file (canonical CSV or UCI format)")
    p.add_argument("--output", required=True, help="verdicts JSONL path")
    p.add_argument("--trace", help="trace CSV path (default: <output>.trace.csv)")
    p.add_argument("--engine", default="auto", choices=("auto", "python", "compiled"))
    _add_common(p)

    p = sub.add_parser("inject", help="overwrite seeded random readings with forged values")
    p.add_argument("--input", required=True, help="honest stream (canonical CSV or UCI)")
    p.add_argument("--output", required=True, help="labeled canonical CSV path")
    p.add_argument("--manifest", help="injection manifest JSON path (default: <output>.manifest.json)")
    p.add_argument("--count", type=int, help="number of forged readings")
    p.add_argument(
        "--value-source",
        dest="value_source",
        help="constant:<amps> | factor:<mult> | file:<path> (default constant:25)",
    )
    _add_common(p)

    p = sub.add_parser("eval", help="score verdicts against ground-truth labels")
    p.add_argument("--verdicts", required=True, help="verdicts JSONL from detect")
    p.add_argument("--labels", required=True, help="labeled canonical CSV from inject")
    p.add_argument("--output", help="metrics JSON path (also printed to stdout)")
    _add_common(p)

    p = sub.add_parser("simulate", help="run the grid hierarchy over bound leaf streams")
    p.add_argument("--topology", required=True, help="topology JSON")
    p.add_argument("--output", required=True, help="alerts JSONL path")
    p.add_argument("--no-auto-quarantine", action="store_true")
    _add_common(p)

    p = sub.add_parser("synth", help="generate a deterministic synthetic stream")
    p.add_argument("--output", required=True, help="canonical CSV path")
    p.add_argument("--start", default="2019-01-01T00:00")
    p.add_argument("--end", default="2021-01-01T00:00")
    p.add_argument("--noise", type=float, default=0.5, help="uniform noise half-width (A)")
    _add_common(p)

    p = sub.add_parser("bench", help="compare the compiled and pure-Python engines")
    p.add_argument("--samples", type=int, default=200_000)
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_detect(args) -> int:
    cfg = _load_config_file(args.config)
    config = _build_detector_config(args, cfg)
    stream = load_stream(args.input)
    result = run_profiled(stream.ts_seconds, stream.intensity, config, engine=args.engine)

    out_path = Path(args.output)
    trace_path = Path(args.trace) if args.trace else out_path.with_suffix(out_path.suffix + ".trace.csv")
    _write_verdicts(out_path, result)
    _write_trace(trace_path, result)
    invalid = result.invalid_count
    print(
        json.dumps(
            {
                "samples": len(result),
                "verdicts": result.verdict_count,
                "invalid": invalid,
                "engine": args.engine if args.engine != "auto" else DEFAULT_ENGINE,
            },
            sort_keys=True,
        )
    )
    return EXIT_THEFT if invalid else EXIT_OK


def _write_verdicts(path: Path, result: StreamResult) -> None:
    ts_l = result.timestamps.tolist()
    gi_l = result.intensity.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(result)):
            if not result.has_verdict[i]:
                continue
            record = {
                "position": i,
                "timestamp": format_timestamp(ts_l[i]),
                "gi": gi_l[i],
                "ratio": float(result.ratio[i]),
                "valid": bool(result.valid[i]),
                "r1": float(result.r1[i]),
                "r2": float(result.r2[i]),
                "R1": float(result.r1_bar[i]),
                "R2": float(result.r2_bar[i]),
                "alpha": float(result.alpha[i]),
                "r1_fallback": bool(result.r1_fallback[i]),
                "r2_fallback": bool(result.r2_fallback[i]),
                "bucket": result.bucket_label(i),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _write_trace(path: Path, result: StreamResult) -> None:
    ts_l = result.timestamps.tolist()
    gi_l = result.intensity.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,GI,R1,R2,r1,r2,alpha,valid\n")
        for i in range(len(result)):
            if not result.has_verdict[i]:
                continue
            fh.write(
                f"{format_timestamp(ts_l[i])},{gi_l[i]!r},"
                f"{float(result.r1_bar[i])!r},{float(result.r2_bar[i])!r},"
                f"{float(result.r1[i])!r},{float(result.r2[i])!r},"
                f"{float(result.alpha[i])!r},{1 if result.valid[i] else 0}\n"
            )


def cmd_inject(args) -> int:
    cfg = _load_config_file(args.config)
    config = _build_detector_config(args, cfg)
    attack_cfg = cfg.get("attack", {})
    count = args.count if args.count is not None else attack_cfg.get("count")
    if count is None:
        raise UsageError("--count is required (or attack.count in the config file)")
    seed = args.seed if args.seed is not None else attack_cfg.get("seed")
    if seed is None:
        raise UsageError("--seed is required for injection")
    value_source = (
        args.value_source
        if args.value_source is not None
        else attack_cfg.get("value_source", "constant:25")
    )
    stream = load_stream(args.input)
    labeled = inject(stream, AttackSpec(count=int(count), value_source=value_source, seed=int(seed)), config)
    write_canonical(args.output, labeled.stream)
    manifest_path = args.manifest or str(Path(args.output).with_suffix(".manifest.json"))
    labeled.manifest.write(manifest_path)
    print(
        json.dumps(
            {"injected": len(labeled.manifest.positions), "output": str(args.output)},
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    labels_stream = read_canonical(args.labels)
    if labels_stream.labels is None:
        raise AlignmentError("labels file carries no label column")
    labels = labels_stream.labels.tolist()
    verdicts: list = [None] * len(labels)
    with open(args.verdicts, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            pos = int(record["position"])
            if pos < 0 or pos >= len(labels):
                raise AlignmentError(f"verdict position {pos} outside the labeled stream")
            if verdicts[pos] is not None:
                raise AlignmentError(f"duplicate verdict for position {pos}")
            verdicts[pos] = Verdict(
                query_timestamp=from_epoch_seconds(parse_timestamp(record["timestamp"])),
                ratio=float(record["ratio"]),
                valid=bool(record["valid"]),
            )
    matrix = score(verdicts, labels)
    excluded = len(labels) - matrix.total
    report = metrics(matrix, excluded=excluded)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(payload)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config_file(args.config)
    config = _build_detector_config(args, cfg)
    topology = GridTopology.from_json(args.topology)
    base = Path(args.topology).parent
    leaf_streams = {}
    tick_seconds: set = set()
    for leaf_id, binding in topology.streams.items():
        path = Path(binding.path)
        if not path.is_absolute():
            path = base / path
        stream = load_stream(path)
        readings = stream.readings()
        leaf_streams[leaf_id] = readings
        tick_seconds.update(stream.ts_seconds.tolist())
    sim = GridSimulator(
        topology, leaf_streams, config, auto_quarantine=not args.no_auto_quarantine
    )
    timestamps = [from_epoch_seconds(s) for s in sorted(tick_seconds)]
    alerts = sim.run(timestamps)
    with open(args.output, "w", encoding="utf-8") as fh:
        for alert in alerts:
            fh.write(alert.to_json() + "\n")
        for gap in sim.gaps:
            fh.write(gap.to_json() + "\n")
    print(json.dumps({"ticks": len(timestamps), "alerts": len(alerts), "gaps": len(sim.gaps)}, sort_keys=True))
    return EXIT_THEFT if alerts else EXIT_OK


def cmd_synth(args) -> int:
    cfg = _load_config_file(args.config)
    config = _build_detector_config(args, cfg)
    synth_cfg = cfg.get("synth", {})
    seed = args.seed if args.seed is not None else synth_cfg.get("seed")
    if seed is None:
        raise UsageError("--seed is required for synthesis")
    amplitudes = synth_cfg.get("amplitudes", DEFAULT_AMPLITUDES)
    start = from_epoch_seconds(parse_timestamp(args.start))
    end = from_epoch_seconds(parse_timestamp(args.end))
    stream = synthesize(
        start=start,
        end=end,
        period_minutes=config.period_minutes,
        seed=int(seed),
        amplitudes=amplitudes,
        noise_scale=float(args.noise),
        clamp_max=config.limits.i_max,
        profile_config=config.profile,
    )
    write_canonical(args.output, stream)
    print(json.dumps({"samples": len(stream), "output": str(args.output)}, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config_file(args.config)
    config = _build_detector_config(args, cfg)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    n = int(args.samples)
    ts = np.arange(n, dtype=np.int64) * (config.period_minutes * 60) + 1_546_300_800
    gi = rng.uniform(config.limits.i_b * 0.5, config.limits.i_max * 0.8, n)

    timings = {}
    outputs = {}
    for engine in available_engines():
        t0 = time.perf_counter()
        outputs[engine] = run_stream(ts, gi, config, engine=engine)
        timings[engine] = time.perf_counter() - t0
    identical = True
    if "compiled" in outputs:
        py = outputs["python"]
        cc = outputs["compiled"]
        for name in ("has_verdict", "valid", "ratio", "r1", "r2", "r1_bar", "r2_bar", "alpha"):
            if not np.array_equal(getattr(py, name), getattr(cc, name), equal_nan=True):
                identical = False
    report = {
        "samples": n,
        "seed": seed,
        "python_seconds": round(timings["python"], 4),
        "outputs_identical": identical,
    }
    if "compiled" in timings:
        report["compiled_seconds"] = round(timings["compiled"], 4)
        report["speedup"] = round(timings["python"] / timings["compiled"], 1)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if identical else EXIT_ERROR


_COMMANDS = {
    "detect": cmd_detect,
    "inject": cmd_inject,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MeterGuardError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

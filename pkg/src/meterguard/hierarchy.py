"""Simulated verification hierarchy: CC -> NAN -> BAN -> HAN.

Every node carries its own profiled detector sized to the number of
household meters beneath it. Each tick runs bottom-up: leaves report their
readings, parents verify every child's reported intensity, aggregate the
non-quarantined children by summation, and verify the aggregate at their
own scale. Invalid verdicts become alerts carrying the parent chain up to
the control center; flagged leaves are quarantined (communication halted)
until manually released.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from .core import CurrentLimits, MeterGuardError, Reading, Verdict, to_epoch_seconds
from .profiles import DetectorConfig, ProfiledDetector

LEVELS = ("CC", "NAN", "BAN", "HAN")
_LEVEL_RANK = {name: i for i, name in enumerate(LEVELS)}


class TopologyError(MeterGuardError):
    """The node table does not describe a single CC-rooted tree."""


class TimestampMismatchError(MeterGuardError):
    """Readings offered for aggregation carry different timestamps."""


class RootQuarantineError(MeterGuardError):
    """The control center cannot be quarantined."""


def aggregate(readings: Sequence[Reading], quarantined: Optional[Sequence[bool]] = None) -> Reading:
    """Sum child intensities at a common timestamp, skipping quarantined ones."""
    if quarantined is not None:
        if len(quarantined) != len(readings):
            raise ValueError("quarantined mask must match readings length")
        readings = [r for r, q in zip(readings, quarantined) if not q]
    if not readings:
        raise ValueError("nothing to aggregate")
    ts = readings[0].timestamp
    total = 0.0
    for r in readings:
        if r.timestamp != ts:
            raise TimestampMismatchError(
                f"reading at {r.timestamp} does not share timestamp {ts}"
            )
        total += r.intensity
    return Reading(timestamp=ts, intensity=total)


def scale_limits(leaf_limits: CurrentLimits, active_child_count: int) -> CurrentLimits:
    """Household limits scaled to an aggregate of active_child_count meters."""
    return leaf_limits.scaled(active_child_count)


@dataclass
class GridNode:
    id: str
    level: str
    children: List[str] = field(default_factory=list)
    detector: Optional[ProfiledDetector] = None
    quarantined: bool = False
    parent: Optional[str] = None
    leaf_count: int = 1  # household meters beneath (1 for a HAN)


@dataclass(frozen=True)
class StreamBinding:
    path: str
    column: str = "intensity_amps"


@dataclass(frozen=True)
class Alert:
    """An invalid verdict somewhere in the tree, with its route to the root."""

    node_id: str
    timestamp: datetime
    verdict: Verdict
    path: tuple  # node ids from the flagged node up to the CC
    kind: str  # "child" for leaf-report checks, "aggregate" for non-leaf self-checks

    def to_json(self) -> str:
        return json.dumps(
            {
                "node": self.node_id,
                "timestamp": self.timestamp.strftime("%Y-%m-%dT%H:%M"),
                "ratio": self.verdict.ratio,
                "path": list(self.path),
                "kind": self.kind,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class GapRecord:
    """A leaf offered no reading at a tick; it was skipped, not judged."""

    node_id: str
    timestamp: datetime

    def to_json(self) -> str:
        return json.dumps(
            {
                "node": self.node_id,
                "timestamp": self.timestamp.strftime("%Y-%m-%dT%H:%M"),
                "kind": "gap",
            },
            sort_keys=True,
        )


class GridTopology:
    """Validated node table with exactly one CC root and HAN leaves."""

    def __init__(
        self,
        nodes: Mapping[str, GridNode],
        streams: Optional[Mapping[str, StreamBinding]] = None,
    ) -> None:
        self.nodes: Dict[str, GridNode] = dict(nodes)
        self.streams: Dict[str, StreamBinding] = dict(streams or {})
        self.root_id = self._validate()

    def _validate(self) -> str:
        roots = [n.id for n in self.nodes.values() if n.level == "CC"]
        if len(roots) != 1:
            raise TopologyError(f"expected exactly one CC node, found {len(roots)}")
        root = roots[0]
        for node in self.nodes.values():
            if node.level not in _LEVEL_RANK:
                raise TopologyError(f"node {node.id}: unknown level {node.level!r}")
            if node.level == "HAN" and node.children:
                raise TopologyError(f"HAN {node.id} must not have children")
            if node.level != "HAN" and not node.children:
                raise TopologyError(f"{node.level} {node.id} must have children")
            for child_id in node.children:
                child = self.nodes.get(child_id)
                if child is None:
                    raise TopologyError(f"node {node.id} references unknown child {child_id}")
                if _LEVEL_RANK[child.level] != _LEVEL_RANK[node.level] + 1:
                    raise TopologyError(
                        f"edge {node.id}({node.level}) -> {child_id}({child.level}) "
                        "must descend exactly one level"
                    )
                if child.parent is not None and child.parent != node.id:
                    raise TopologyError(f"node {child_id} has two parents")
                child.parent = node.id
        # connectivity and acyclicity: every node reachable from the root once
        seen: set = set()
        stack = [root]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise TopologyError(f"node {nid} reachable twice (cycle or shared child)")
            seen.add(nid)
            stack.extend(self.nodes[nid].children)
        if seen != set(self.nodes):
            missing = sorted(set(self.nodes) - seen)
            raise TopologyError(f"nodes not reachable from the root: {missing}")
        for node in self.nodes.values():
            node.leaf_count = self._count_leaves(node.id)
        return root

    def _count_leaves(self, node_id: str) -> int:
        node = self.nodes[node_id]
        if node.level == "HAN":
            return 1
        return sum(self._count_leaves(c) for c in node.children)

    def leaves(self) -> List[str]:
        return [n.id for n in self.nodes.values() if n.level == "HAN"]

    def subtree(self, node_id: str) -> List[str]:
        out = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self.nodes[nid].children)
        return out

    def path_to_root(self, node_id: str) -> tuple:
        path = [node_id]
        cur = self.nodes[node_id]
        while cur.parent is not None:
            path.append(cur.parent)
            cur = self.nodes[cur.parent]
        return tuple(path)

    def quarantine(self, node_id: str) -> None:
        """Halt a node (and its subtree): excluded from aggregation and checks."""
        if node_id not in self.nodes:
            raise TopologyError(f"unknown node {node_id}")
        if node_id == self.root_id:
            raise RootQuarantineError("cannot quarantine the control center")
        for nid in self.subtree(node_id):
            self.nodes[nid].quarantined = True

    def release(self, node_id: str) -> None:
        if node_id not in self.nodes:
            raise TopologyError(f"unknown node {node_id}")
        for nid in self.subtree(node_id):
            self.nodes[nid].quarantined = False

    @classmethod
    def from_dict(cls, data: dict) -> "GridTopology":
        nodes: Dict[str, GridNode] = {}
        streams: Dict[str, StreamBinding] = {}
        for entry in data.get("nodes", []):
            node = GridNode(
                id=str(entry["id"]),
                level=str(entry["level"]),
                children=[str(c) for c in entry.get("children", [])],
            )
            if node.id in nodes:
                raise TopologyError(f"duplicate node id {node.id}")
            nodes[node.id] = node
            binding = entry.get("stream")
            if binding:
                streams[node.id] = StreamBinding(
                    path=str(binding["path"]),
                    column=str(binding.get("column", "intensity_amps")),
                )
        topology = cls(nodes, streams)
        for leaf in topology.leaves():
            if leaf not in topology.streams:
                raise TopologyError(f"HAN {leaf} has no stream binding")
        return topology

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "GridTopology":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class GridSimulator:
    """Drives a topology tick by tick over per-leaf reading streams.

    auto_quarantine: quarantine a leaf on its first invalid verdict
    (aggregate alerts never auto-quarantine: the culprit is ambiguous).
    Quarantines apply from the next tick.
    """

    def __init__(
        self,
        topology: GridTopology,
        leaf_streams: Mapping[str, Sequence[Reading]],
        config: DetectorConfig = DetectorConfig(),
        auto_quarantine: bool = True,
    ) -> None:
        self.topology = topology
        self.config = config
        self.auto_quarantine = auto_quarantine
        self.gaps: List[GapRecord] = []
        self.last_aggregates: Dict[str, float] = {}
        self._streams: Dict[str, Dict[int, Reading]] = {}
        for leaf_id, readings in leaf_streams.items():
            if leaf_id not in topology.nodes or topology.nodes[leaf_id].level != "HAN":
                raise TopologyError(f"stream bound to non-HAN node {leaf_id}")
            self._streams[leaf_id] = {to_epoch_seconds(r.timestamp): r for r in readings}
        missing = set(topology.leaves()) - set(self._streams)
        if missing:
            raise TopologyError(f"HAN nodes without streams: {sorted(missing)}")
        for node in topology.nodes.values():
            scaled = DetectorConfig(
                limits=scale_limits(config.limits, max(1, node.leaf_count)),
                window_length=config.window_length,
                period_minutes=config.period_minutes,
                profile=config.profile,
            )
            node.detector = ProfiledDetector(scaled)

    def tick(self, timestamp: datetime) -> List[Alert]:
        """One bottom-up verification pass; returns this tick's alerts."""
        alerts: List[Alert] = []
        to_quarantine: List[str] = []
        self.last_aggregates = {}
        self._report(self.topology.root_id, timestamp, alerts, to_quarantine)
        if self.auto_quarantine:
            for node_id in to_quarantine:
                if node_id != self.topology.root_id:
                    self.topology.quarantine(node_id)
        return alerts

    def run(self, timestamps: Sequence[datetime]) -> List[Alert]:
        alerts: List[Alert] = []
        for ts in timestamps:
            alerts.extend(self.tick(ts))
        return alerts

    def _report(
        self,
        node_id: str,
        timestamp: datetime,
        alerts: List[Alert],
        to_quarantine: List[str],
    ) -> Optional[Reading]:
        node = self.topology.nodes[node_id]
        if node.quarantined:
            return None
        if node.level == "HAN":
            reading = self._streams[node_id].get(to_epoch_seconds(timestamp))
            if reading is None:
                self.gaps.append(GapRecord(node_id=node_id, timestamp=timestamp))
                return None
            self._check(node, reading, "child", alerts, to_quarantine)
            return reading
        child_readings = []
        for child_id in node.children:
            child_reading = self._report(child_id, timestamp, alerts, to_quarantine)
            if child_reading is not None:
                child_readings.append(child_reading)
        if not child_readings:
            return None
        agg = aggregate(child_readings)
        self.last_aggregates[node_id] = agg.intensity
        self._check(node, agg, "aggregate", alerts, to_quarantine)
        return agg

    def _check(
        self,
        node: GridNode,
        reading: Reading,
        kind: str,
        alerts: List[Alert],
        to_quarantine: List[str],
    ) -> None:
        verdict = node.detector.step(reading)
        if verdict is not None and not verdict.valid:
            alerts.append(
                Alert(
                    node_id=node.id,
                    timestamp=reading.timestamp,
                    verdict=verdict,
                    path=self.topology.path_to_root(node.id),
                    kind=kind,
                )
            )
            if kind == "child":
                to_quarantine.append(node.id)

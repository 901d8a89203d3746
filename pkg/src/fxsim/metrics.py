"""Per-run measurements: throughput, latency percentiles, availability,
duplicates, error-queue depth, cross-datacenter traffic, per-instance load.

Availability is reported two ways, since informally the word covers both:
structurally (fraction of virtual time the service had at least one active,
healthy, reachable replica; the system value is the minimum over the request
path) and as request success rate (completed / generated). Percentiles use
nearest-rank over the full latency vector - exact and deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import SimTime, TraceEntry, US_PER_SECOND
from .errors import MismatchedScenario


def nearest_rank(sorted_values: list[int], percentile: float) -> int:
    if not sorted_values:
        return 0
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    return sorted_values[max(0, rank - 1)]


class AvailabilityTracker:
    """Accumulates per-service unavailable time, exactly, on every transition."""

    def __init__(self, engine, is_available: Callable[[str], bool]):
        self.engine = engine
        self.is_available = is_available
        self._state: dict[str, bool] = {}
        self._since: dict[str, SimTime] = {}
        self._down_us: dict[str, int] = {}

    def register(self, service: str) -> None:
        self._state[service] = self.is_available(service)
        self._since[service] = self.engine.now
        self._down_us[service] = 0

    def update(self, service: str) -> None:
        if service not in self._state:
            return
        now_available = self.is_available(service)
        if now_available == self._state[service]:
            return
        if not self._state[service]:
            self._down_us[service] += self.engine.now - self._since[service]
        self._state[service] = now_available
        self._since[service] = self.engine.now

    def update_all(self) -> None:
        for service in self._state:
            self.update(service)

    def finalize(self) -> None:
        for service, available in self._state.items():
            if not available:
                self._down_us[service] += self.engine.now - self._since[service]
                self._since[service] = self.engine.now

    def availability(self, service: str, horizon_us: int) -> float:
        if service not in self._down_us or horizon_us <= 0:
            return 1.0
        return max(0.0, 1.0 - self._down_us[service] / horizon_us)


@dataclass
class MetricsReport:
    scenario_name: str
    preset: str
    seed: int
    horizon_us: int
    fingerprint: str
    generated: int
    completed: int
    failed: int
    error_queued: int
    pending: int
    throughput_per_s: float
    latency_p50_us: int
    latency_p95_us: int
    latency_p99_us: int
    availability_success: float
    availability_structural: float
    duplicate_deliveries: int
    reenqueued_processed: int
    error_queue_depth: int
    unroutable_count: int
    cross_dc_messages: int
    mainframe_share: float
    cache_hits: int
    cache_misses: int
    detection_slack_us: int
    services: dict[str, dict] = field(default_factory=dict)
    stage_loads: dict[str, dict[str, int]] = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    SYSTEM_FIELDS = ["generated", "completed", "failed", "error_queued", "pending",
                     "throughput_per_s", "latency_p50_us", "latency_p95_us",
                     "latency_p99_us", "availability_success", "availability_structural",
                     "duplicate_deliveries", "reenqueued_processed", "error_queue_depth",
                     "unroutable_count", "cross_dc_messages", "mainframe_share"]

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "scenario": {"name": self.scenario_name, "preset": self.preset,
                         "seed": self.seed, "horizon_us": self.horizon_us,
                         "fingerprint": self.fingerprint},
            "system": {name: getattr(self, name) for name in self.SYSTEM_FIELDS},
            "cache": {"hits": self.cache_hits, "misses": self.cache_misses},
            "detection_slack_us": self.detection_slack_us,
            "services": self.services,
            "stage_loads": self.stage_loads,
            "resolved_params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"scenario  {self.scenario_name}  preset={self.preset} "
                 f"seed={self.seed} horizon_us={self.horizon_us}"]
        for name in self.SYSTEM_FIELDS:
            value = getattr(self, name)
            if isinstance(value, float):
                lines.append(f"  {name:<26} {value:.6f}")
            else:
                lines.append(f"  {name:<26} {value}")
        lines.append("  per-service availability / served-by-node:")
        for service, info in self.services.items():
            served = " ".join(f"{node}={count}" for node, count in
                              sorted(info["served"].items())) or "-"
            lines.append(f"    {service:<22} {info['availability']:.6f}  {served}")
        return "\n".join(lines) + "\n"


@dataclass
class ComparisonTable:
    name_a: str
    name_b: str
    rows: list[tuple[str, float, float, float, Optional[float]]]

    def to_dict(self) -> dict:
        return {"a": self.name_a, "b": self.name_b,
                "rows": [{"metric": m, "a": a, "b": b, "delta": d, "relative": r}
                         for m, a, b, d, r in self.rows]}

    def to_text(self) -> str:
        header = f"{'metric':<26} {self.name_a:>14} {self.name_b:>14} {'delta':>12} {'rel':>8}"
        lines = [header, "-" * len(header)]
        for metric, a, b, delta, rel in self.rows:
            rel_text = f"{rel:+.3f}" if rel is not None else "-"
            lines.append(f"{metric:<26} {a:>14.4f} {b:>14.4f} {delta:>+12.4f} {rel_text:>8}")
        return "\n".join(lines) + "\n"


def compare(report_a: MetricsReport, report_b: MetricsReport) -> ComparisonTable:
    """Side-by-side numbers for two runs of the same workload, fault schedule
    and seed. No verdicts, deltas only."""
    if report_a.fingerprint != report_b.fingerprint:
        raise MismatchedScenario(
            f"workload/fault-schedule/seed differ: {report_a.fingerprint} vs {report_b.fingerprint}")
    rows = []
    for name in MetricsReport.SYSTEM_FIELDS:
        a = float(getattr(report_a, name))
        b = float(getattr(report_b, name))
        rel = (b - a) / a if a not in (0, 0.0) else None
        rows.append((name, a, b, b - a, rel))
    return ComparisonTable(name_a=report_a.preset or report_a.scenario_name,
                           name_b=report_b.preset or report_b.scenario_name,
                           rows=rows)


def duplicate_count(trace: list[TraceEntry]) -> int:
    """Recount duplicate processings from the trace alone: completions beyond
    the first per (message, queue), read off the process-done lines."""
    max_n: dict[tuple[str, str], int] = {}
    for entry in trace:
        if entry.kind != "process-done":
            continue
        msg, queue, n_part = entry.outcome.split(" ")
        key = (msg, queue)
        max_n[key] = max(max_n.get(key, 0), int(n_part.removeprefix("n=")))
    return sum(n - 1 for n in max_n.values() if n > 1)


def active_intervals(trace: list[TraceEntry], service: str,
                     horizon_us: int) -> dict[str, list[tuple[int, int]]]:
    """Per-replica [start, end) intervals in the Active state, from the trace."""
    intervals: dict[str, list[tuple[int, int]]] = {}
    open_at: dict[str, int] = {}
    prefix = f"{service}#"
    for entry in trace:
        if entry.entity != "orch" or entry.kind != "state":
            continue
        replica, _arrow, state, *_rest = entry.outcome.split(" ")
        if not replica.startswith(prefix):
            continue
        if state == "Active":
            open_at.setdefault(replica, entry.time)
        elif replica in open_at:
            intervals.setdefault(replica, []).append((open_at.pop(replica), entry.time))
    for replica, start in open_at.items():
        intervals.setdefault(replica, []).append((start, horizon_us))
    return intervals


def overlapping_active(trace: list[TraceEntry], service: str, horizon_us: int) -> bool:
    """True if two replicas of the service were ever Active at once."""
    spans = [span for spans in active_intervals(trace, service, horizon_us).values()
             for span in spans]
    spans.sort()
    for (start_a, end_a), (start_b, _end_b) in zip(spans, spans[1:]):
        if start_b < end_a:
            return True
    return False

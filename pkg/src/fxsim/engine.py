"""Deterministic discrete-event core.

Virtual time is a non-negative integer number of microseconds. Events are
totally ordered by (fire_at, seq), where seq is the global scheduling order,
so equal-time events fire in the order they were scheduled. All randomness
goes through named, independently seeded streams so that adding draws to one
stochastic source never perturbs another. A run never observes wall-clock
time; identical (scenario, seed) pairs produce byte-identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .errors import InvariantViolation, SchedulingInPast, UnknownStream

SimTime = int  # microseconds of virtual time

US_PER_SECOND = 1_000_000


class EventKind(Enum):
    MESSAGE_DELIVERY = "MessageDelivery"
    ACK_TIMEOUT = "AckTimeout"
    HEALTH_PROBE = "HealthProbe"
    FAULT_ACTION = "FaultAction"
    WORK_ARRIVAL = "WorkArrival"
    PROCESSING_DONE = "ProcessingDone"
    TAKEOVER_TIMER = "TakeoverTimer"
    UPDATE_STEP = "UpdateStep"


@dataclass
class Event:
    fire_at: SimTime
    seq: int
    kind: EventKind
    target: str
    payload: Any = None


@dataclass(frozen=True)
class TraceEntry:
    time: SimTime
    entity: str
    kind: str
    outcome: str

    def line(self) -> str:
        return f"{self.time} {self.entity} {self.kind} {self.outcome}"


@dataclass
class RunHandle:
    """Reproducibility record for one run: the seed, the horizon and the full trace."""

    seed: int
    horizon: SimTime
    trace: list[TraceEntry] = field(default_factory=list)

    def trace_text(self) -> str:
        return "\n".join(e.line() for e in self.trace) + "\n"


@dataclass(frozen=True)
class Dist:
    """Duration distribution descriptor: constant, uniform or exponential.

    Draws return integer microseconds. Constant distributions consume no
    randomness, which keeps golden traces stable under default parameters.
    """

    kind: str
    params: tuple[float, ...]

    @staticmethod
    def constant(value: float) -> "Dist":
        return Dist("constant", (float(value),))

    @staticmethod
    def uniform(lo: float, hi: float) -> "Dist":
        if lo > hi:
            raise ValueError("uniform lower bound exceeds upper bound")
        return Dist("uniform", (float(lo), float(hi)))

    @staticmethod
    def exponential(mean: float) -> "Dist":
        if mean <= 0:
            raise ValueError("exponential mean must be positive")
        return Dist("exponential", (float(mean),))

    @staticmethod
    def from_spec(spec: Any) -> "Dist":
        """Accept a bare number (constant) or {"dist": ..., ...} mapping."""
        if isinstance(spec, (int, float)):
            return Dist.constant(spec)
        if isinstance(spec, Dist):
            return spec
        kind = spec.get("dist", "constant")
        if kind == "constant":
            return Dist.constant(spec["value"])
        if kind == "uniform":
            return Dist.uniform(spec["low"], spec["high"])
        if kind == "exponential":
            return Dist.exponential(spec["mean"])
        raise ValueError(f"unknown distribution kind: {kind!r}")

    def mean(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return (self.params[0] + self.params[1]) / 2.0
        return self.params[0]

    def draw(self, rng: random.Random) -> int:
        if self.kind == "constant":
            value = self.params[0]
        elif self.kind == "uniform":
            value = rng.uniform(self.params[0], self.params[1])
        else:
            value = rng.expovariate(1.0 / self.params[0])
        if self.kind == "constant":
            return int(round(value))
        return max(1, int(round(value)))

    def to_spec(self) -> Any:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return {"dist": "uniform", "low": self.params[0], "high": self.params[1]}
        return {"dist": "exponential", "mean": self.params[0]}


def _stream_rng(seed: int, name: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


DEFAULT_STREAMS = ("arrivals", "service", "net", "cache")


class Engine:
    """Virtual clock, ordered event queue and seeded RNG streams.

    Handlers are registered per event kind; the run loop pops events in
    (fire_at, seq) order until the horizon or exhaustion. Cancelled events
    are skipped and do not count as fired.
    """

    def __init__(self, seed: int, horizon: SimTime, streams: tuple[str, ...] = DEFAULT_STREAMS):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.seed = seed
        self.horizon = horizon
        self.now: SimTime = 0
        self.fired = 0
        self._next_seq = 0
        self._heap: list[tuple[SimTime, int]] = []
        self._events: dict[int, Event] = {}
        self._rngs = {name: _stream_rng(seed, name) for name in streams}
        self.handlers: dict[EventKind, Callable[[Event], None]] = {}
        self.handle = RunHandle(seed=seed, horizon=horizon)

    # -- scheduling ----------------------------------------------------

    def schedule(self, at: SimTime, kind: EventKind, target: str, payload: Any = None) -> int:
        """Enqueue an event; returns its id (cancellable until fired)."""
        if at < self.now:
            raise SchedulingInPast(f"fire_at {at} < now {self.now}")
        seq = self._next_seq
        self._next_seq += 1
        event = Event(fire_at=at, seq=seq, kind=kind, target=target, payload=payload)
        self._events[seq] = event
        heapq.heappush(self._heap, (at, seq))
        return seq

    def after(self, delay: SimTime, kind: EventKind, target: str, payload: Any = None) -> int:
        return self.schedule(self.now + delay, kind, target, payload)

    def cancel(self, event_id: int) -> bool:
        """True iff the event existed and had not fired. Cancelled events never fire."""
        return self._events.pop(event_id, None) is not None

    # -- randomness ----------------------------------------------------

    def rng(self, stream: str) -> random.Random:
        try:
            return self._rngs[stream]
        except KeyError:
            raise UnknownStream(stream) from None

    def rand_draw(self, stream: str, dist: Dist) -> int:
        return dist.draw(self.rng(stream))

    # -- trace ---------------------------------------------------------

    def trace(self, entity: str, kind: str, outcome: str) -> None:
        self.handle.trace.append(TraceEntry(self.now, entity, kind, outcome))

    # -- run loop ------------------------------------------------------

    def run_loop(self) -> None:
        while self._heap:
            at, seq = self._heap[0]
            if at > self.horizon:
                break
            heapq.heappop(self._heap)
            event = self._events.pop(seq, None)
            if event is None:
                continue  # cancelled
            if at < self.now:
                raise InvariantViolation(f"clock would move backwards: {at} < {self.now}")
            self.now = at
            handler = self.handlers.get(event.kind)
            if handler is None:
                raise InvariantViolation(f"no handler for event kind {event.kind}")
            handler(event)
            self.fired += 1
        self.now = self.horizon

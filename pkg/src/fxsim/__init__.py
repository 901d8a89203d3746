"""Deterministic discrete-event simulator comparing monolithic and
microservice deployments of an FX trading core."""

from .engine import Dist, Engine, Event, EventKind, RunHandle, SimTime, TraceEntry
from .errors import (BrokerUnreachable, DeclarationConflict, InsufficientNodes,
                     InvalidPartition, InvariantViolation, MismatchedScenario,
                     NoHealthyInstance, ScenarioError, SchedulingInPast, SimError,
                     UnknownEntity, UnknownNode, UnknownService, UnknownStream)
from .metrics import ComparisonTable, MetricsReport, compare, duplicate_count
from .runtime import World, execute, run
from .scenario import Build, FaultAction, Issue, emit, list_presets, validate, validate_file

__version__ = "0.1.0"

__all__ = [
    "Dist", "Engine", "Event", "EventKind", "RunHandle", "SimTime", "TraceEntry",
    "SimError", "SchedulingInPast", "UnknownStream", "UnknownNode", "InvalidPartition",
    "DeclarationConflict", "UnknownEntity", "BrokerUnreachable", "UnknownService",
    "NoHealthyInstance", "InsufficientNodes", "MismatchedScenario", "ScenarioError",
    "InvariantViolation",
    "MetricsReport", "ComparisonTable", "compare", "duplicate_count",
    "World", "execute", "run",
    "Build", "FaultAction", "Issue", "validate", "validate_file", "emit", "list_presets",
    "__version__",
]

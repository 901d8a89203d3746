"""Scenario file ingestion, validation and preset materialization.

Scenarios are JSON with a versioned schema. Validation reports every problem
at once (with the JSON path, or line/column for parse errors) and a valid
scenario materializes into a fully resolved build: topology objects, service
specs, broker wiring, workload, fault schedule and the complete parameter
set, which is embedded in the run report for auditability.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .broker import DEFAULT_ACK_TIMEOUT_US, DEFAULT_MAX_REDELIVERIES, QueueMode
from .discovery import (DEFAULT_FAILURE_THRESHOLD, DEFAULT_PROBE_INTERVAL_US,
                        DEFAULT_RECOVERY_THRESHOLD, HealthProbeConfig, Policy)
from .engine import Dist
from .errors import ScenarioError
from .orchestrator import (DEFAULT_RESTART_DELAY_US, DEFAULT_TAKEOVER_DELAY_US,
                           DEFAULT_UPDATE_TIMEOUT_US, FailoverMode, PlacementRule,
                           ServiceKind, ServiceSpec)
from .topology import Datacenter, LatencyModel, Node
from .workload import (CacheConfig, Params, PresetDef, WorkloadSpec,
                       PRESET_BUILDERS)

SCHEMA_VERSION = 1

DEFAULT_INTRA_DC_US = 500
DEFAULT_INTER_DC_US = 2_000
DEFAULT_MAINFRAME_US = 20_000

FAULT_ACTIONS = ("kill_node", "restore_node", "kill_replica",
                 "partition", "heal", "rolling_update")


@dataclass(frozen=True)
class Issue:
    path: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


@dataclass
class FaultAction:
    at_us: int
    action: str
    node: Optional[str] = None
    service: Optional[str] = None
    index: Optional[int] = None
    groups: Optional[list[list[str]]] = None
    version: Optional[int] = None
    viable: bool = True

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"at_us": self.at_us, "action": self.action}
        for key in ("node", "service", "index", "groups", "version"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if not self.viable:
            out["viable"] = False
        return out


@dataclass
class Build:
    """A fully materialized scenario, ready to simulate."""

    name: str
    preset: str
    seed: int
    horizon_us: int
    datacenters: list[Datacenter]
    nodes: list[Node]
    latency: LatencyModel
    broker_members: list[str]
    ack_timeout_us: int
    max_redeliveries: int
    probe_config: HealthProbeConfig
    policies: dict[str, Policy]
    specs: list[ServiceSpec]
    exchanges: list[str]
    queues: list[tuple[str, QueueMode]]
    bindings: list[tuple[str, str, str]]
    workload: WorkloadSpec
    faults: list[FaultAction]
    cache: CacheConfig
    params: Params
    request_path_services: list[str]
    takeover_delay_us: int = DEFAULT_TAKEOVER_DELAY_US
    restart_delay_us: int = DEFAULT_RESTART_DELAY_US
    update_timeout_us: int = DEFAULT_UPDATE_TIMEOUT_US
    raw: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        """Digest of what compare() requires to match: workload, faults, seed."""
        canon = json.dumps({
            "workload": self.workload.to_dict(),
            "faults": [f.to_dict() for f in self.faults],
            "horizon_us": self.horizon_us,
            "seed": self.seed,
        }, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def resolved_params(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "preset": self.preset,
            "seed": self.seed,
            "horizon_us": self.horizon_us,
            "latency": {"intra_dc_us": self.latency.intra_dc.to_spec(),
                        "inter_dc_us": self.latency.inter_dc.to_spec(),
                        "mainframe_us": self.latency.mainframe_call.to_spec()},
            "broker": {"ack_timeout_us": self.ack_timeout_us,
                       "max_redeliveries": self.max_redeliveries,
                       "members": list(self.broker_members)},
            "discovery": {"probe_interval_us": self.probe_config.interval_us,
                          "failure_threshold": self.probe_config.failure_threshold,
                          "recovery_threshold": self.probe_config.recovery_threshold,
                          "policies": {s: p.value for s, p in self.policies.items()}},
            "orchestrator": {"takeover_delay_us": self.takeover_delay_us,
                             "restart_delay_us": self.restart_delay_us,
                             "update_timeout_us": self.update_timeout_us},
            "cache": {"hit_ratio": self.cache.hit_ratio,
                      "hit_latency_us": self.cache.hit_latency_us},
            "params": self.params.to_dict(),
            "workload": self.workload.to_dict(),
            "faults": [f.to_dict() for f in self.faults],
            "topology": {
                "datacenters": [{"id": dc.id, "nodes": list(dc.node_ids)}
                                for dc in self.datacenters],
                "node_capacity": self.params.node_capacity,
            },
            "services": [{"name": s.name, "kind": s.kind.value,
                          "failover": s.failover.value, "replicas": s.replicas,
                          "placement": s.placement.value,
                          "processing_time_us": s.processing_time.to_spec(),
                          "version": s.version}
                         for s in self.specs],
        }


def _dist(value: Any, default_us: int) -> Dist:
    if value is None:
        return Dist.constant(default_us)
    return Dist.from_spec(value)


def parse_scenario_text(text: str) -> dict:
    return json.loads(text)


def validate(source: Any, seed_override: Optional[int] = None) -> Build:
    """Validate scenario text or a parsed mapping; raises ScenarioError with
    every issue found, or returns the materialized build."""
    issues: list[Issue] = []
    if isinstance(source, str):
        try:
            data = parse_scenario_text(source)
        except json.JSONDecodeError as exc:
            raise ScenarioError([Issue(f"line {exc.lineno}, column {exc.colno}",
                                       "ParseError", exc.msg)]) from None
    else:
        data = source
    if not isinstance(data, dict):
        raise ScenarioError([Issue("$", "ParseError", "scenario must be a JSON object")])

    schema = data.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        issues.append(Issue("schema", "ParseError", f"unsupported schema version {schema}"))

    name = data.get("name", "scenario")
    preset = data.get("preset", "microservice")
    if preset not in ("monolith", "microservice", "custom"):
        issues.append(Issue("preset", "ParseError", f"unknown preset {preset!r}"))
        preset = "microservice"

    horizon = data.get("horizon_us", 0)
    if not isinstance(horizon, int) or horizon <= 0:
        issues.append(Issue("horizon_us", "ParseError", "horizon_us must be a positive integer"))
        horizon = 1

    seed = seed_override if seed_override is not None else data.get("seed")
    if seed is None:
        issues.append(Issue("seed", "ParseError", "seed is required"))
        seed = 0
    elif not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        issues.append(Issue("seed", "ParseError", "seed must be an unsigned 64-bit integer"))
        seed = 0

    params = Params()
    for key, value in data.get("params", {}).items():
        if not hasattr(params, key):
            issues.append(Issue(f"params.{key}", "UnknownEntity", "unknown parameter"))
        elif not isinstance(value, int) or value < 0:
            issues.append(Issue(f"params.{key}", "ParseError", "must be a non-negative integer"))
        else:
            setattr(params, key, value)

    lat_spec = data.get("latency", {})
    try:
        latency = LatencyModel(
            intra_dc=_dist(lat_spec.get("intra_dc_us"), DEFAULT_INTRA_DC_US),
            inter_dc=_dist(lat_spec.get("inter_dc_us"), DEFAULT_INTER_DC_US),
            mainframe_call=_dist(lat_spec.get("mainframe_us"), DEFAULT_MAINFRAME_US))
        latency.validate()
    except (ValueError, KeyError) as exc:
        issues.append(Issue("latency", "ParseError", str(exc)))
        latency = LatencyModel(Dist.constant(DEFAULT_INTRA_DC_US),
                               Dist.constant(DEFAULT_INTER_DC_US),
                               Dist.constant(DEFAULT_MAINFRAME_US))

    cache_spec = data.get("cache", {})
    try:
        cache = CacheConfig(hit_ratio=float(cache_spec.get("hit_ratio", 0.8)),
                            hit_latency_us=int(cache_spec.get("hit_latency_us", 1_000)))
    except (TypeError, ValueError) as exc:
        issues.append(Issue("cache", "ParseError", str(exc)))
        cache = CacheConfig()

    # -- topology & services: preset or custom -----------------------------
    if preset == "custom":
        base = _custom_preset(data, params, issues)
    else:
        base = PRESET_BUILDERS[preset](params)
        base = _apply_service_overrides(base, data.get("services", {}), issues)

    node_ids = {n.id for n in base.nodes}
    service_names = {s.name for s in base.specs}

    broker_spec = data.get("broker", {})
    ack_timeout = broker_spec.get("ack_timeout_us", DEFAULT_ACK_TIMEOUT_US)
    max_redeliveries = broker_spec.get("max_redeliveries", DEFAULT_MAX_REDELIVERIES)
    if not isinstance(ack_timeout, int) or ack_timeout <= 0:
        issues.append(Issue("broker.ack_timeout_us", "ParseError", "must be a positive integer"))
        ack_timeout = DEFAULT_ACK_TIMEOUT_US
    if not isinstance(max_redeliveries, int) or max_redeliveries < 0:
        issues.append(Issue("broker.max_redeliveries", "ParseError",
                            "must be a non-negative integer"))
        max_redeliveries = DEFAULT_MAX_REDELIVERIES

    disc_spec = data.get("discovery", {})
    try:
        probe_config = HealthProbeConfig(
            interval_us=disc_spec.get("probe_interval_us", DEFAULT_PROBE_INTERVAL_US),
            failure_threshold=disc_spec.get("failure_threshold", DEFAULT_FAILURE_THRESHOLD),
            recovery_threshold=disc_spec.get("recovery_threshold", DEFAULT_RECOVERY_THRESHOLD))
    except ValueError as exc:
        issues.append(Issue("discovery", "ParseError", str(exc)))
        probe_config = HealthProbeConfig()
    policies: dict[str, Policy] = {}
    for service, policy_name in disc_spec.get("policies", {}).items():
        if service not in service_names:
            issues.append(Issue(f"discovery.policies.{service}", "UnknownEntity",
                                "unknown service"))
            continue
        try:
            policies[service] = Policy(policy_name)
        except ValueError:
            issues.append(Issue(f"discovery.policies.{service}", "ParseError",
                                f"unknown policy {policy_name!r}"))

    workload = _parse_workload(data.get("workload", {}), preset, base, issues)
    faults = _parse_faults(data.get("faults", []), node_ids, service_names, issues)

    orch_spec = data.get("orchestrator", {})
    takeover = orch_spec.get("takeover_delay_us", DEFAULT_TAKEOVER_DELAY_US)
    restart = orch_spec.get("restart_delay_us", DEFAULT_RESTART_DELAY_US)
    update_timeout = orch_spec.get("update_timeout_us", DEFAULT_UPDATE_TIMEOUT_US)

    if issues:
        raise ScenarioError(issues)

    return Build(
        name=name, preset=preset, seed=seed, horizon_us=horizon,
        datacenters=base.datacenters, nodes=base.nodes, latency=latency,
        broker_members=base.broker_members, ack_timeout_us=ack_timeout,
        max_redeliveries=max_redeliveries, probe_config=probe_config,
        policies=policies, specs=base.specs, exchanges=base.exchanges,
        queues=base.queues, bindings=base.bindings, workload=workload,
        faults=faults, cache=cache, params=params,
        request_path_services=base.request_path_services,
        takeover_delay_us=takeover, restart_delay_us=restart,
        update_timeout_us=update_timeout, raw=data)


def validate_file(path: str, seed_override: Optional[int] = None) -> Build:
    with open(path, "r", encoding="utf-8") as fh:
        return validate(fh.read(), seed_override)


def _parse_workload(spec: dict, preset: str, base: PresetDef,
                    issues: list[Issue]) -> WorkloadSpec:
    kind = spec.get("kind", "requests")
    if kind not in ("requests", "publishes"):
        issues.append(Issue("workload.kind", "ParseError", f"unknown workload kind {kind!r}"))
        kind = "requests"
    workload = WorkloadSpec(kind=kind)
    if kind == "requests":
        workload.pattern = spec.get("pattern", "constant")
        if workload.pattern not in ("constant", "poisson"):
            issues.append(Issue("workload.pattern", "ParseError",
                                f"unknown pattern {workload.pattern!r}"))
            workload.pattern = "constant"
        workload.rate_per_s = float(spec.get("rate_per_s", 20.0))
        if workload.rate_per_s < 0:
            issues.append(Issue("workload.rate_per_s", "ParseError", "must be >= 0"))
        workload.duration_us = spec.get("duration_us")
        workload.trade_ratio = float(spec.get("trade_ratio", 0.5))
        if not 0.0 <= workload.trade_ratio <= 1.0:
            issues.append(Issue("workload.trade_ratio", "ParseError", "must be in [0, 1]"))
        if preset == "custom" and kind == "requests":
            issues.append(Issue("workload.kind", "ParseError",
                                "custom preset supports only the publishes workload"))
    else:
        workload.exchange = spec.get("exchange", "fx")
        workload.routing_key = spec.get("routing_key", "job.run")
        workload.count = int(spec.get("count", 0))
        workload.period_us = int(spec.get("period_us", 1_000_000))
        workload.start_us = int(spec.get("start_us", 0))
        workload.publish_node = spec.get("publish_node", "")
        if workload.exchange not in base.exchanges:
            issues.append(Issue("workload.exchange", "UnknownEntity",
                                f"exchange {workload.exchange!r} not declared"))
        if workload.publish_node and workload.publish_node not in {n.id for n in base.nodes}:
            issues.append(Issue("workload.publish_node", "UnknownEntity",
                                f"node {workload.publish_node!r} not in topology"))
    return workload


def _parse_faults(raw: list, node_ids: set[str], service_names: set[str],
                  issues: list[Issue]) -> list[FaultAction]:
    faults: list[FaultAction] = []
    partitioned = False
    last_at = -1
    for i, item in enumerate(raw):
        path = f"faults[{i}]"
        if not isinstance(item, dict):
            issues.append(Issue(path, "ParseError", "fault must be an object"))
            continue
        action = item.get("action")
        if action not in FAULT_ACTIONS:
            issues.append(Issue(path, "ParseError", f"unknown action {action!r}"))
            continue
        at = item.get("at_us", 0)
        if not isinstance(at, int) or at < 0:
            issues.append(Issue(f"{path}.at_us", "ParseError", "must be a non-negative integer"))
            at = 0
        if at < last_at:
            issues.append(Issue(f"{path}.at_us", "UnsortedSchedule",
                                "fault actions must be sorted by time"))
        last_at = max(last_at, at)
        fault = FaultAction(at_us=at, action=action)
        if action in ("kill_node", "restore_node"):
            fault.node = item.get("node")
            if fault.node not in node_ids:
                issues.append(Issue(f"{path}.node", "UnknownEntity",
                                    f"node {fault.node!r} not in topology"))
        elif action == "kill_replica":
            fault.service = item.get("service")
            fault.index = item.get("index", 0)
            if fault.service not in service_names:
                issues.append(Issue(f"{path}.service", "UnknownEntity",
                                    f"service {fault.service!r} not declared"))
        elif action == "partition":
            if partitioned:
                issues.append(Issue(path, "InvalidPartitionSequence",
                                    "partition while already partitioned"))
            partitioned = True
            groups = item.get("groups")
            if not isinstance(groups, list) or len(groups) < 2:
                issues.append(Issue(f"{path}.groups", "ParseError",
                                    "partition needs >= 2 groups"))
                groups = []
            seen: set[str] = set()
            for g, group in enumerate(groups):
                for node in group:
                    if node not in node_ids:
                        issues.append(Issue(f"{path}.groups[{g}]", "UnknownEntity",
                                            f"node {node!r} not in topology"))
                    elif node in seen:
                        issues.append(Issue(f"{path}.groups[{g}]", "InvalidPartitionSequence",
                                            f"node {node!r} in two groups"))
                    seen.add(node)
            missing = node_ids - seen
            if groups and missing:
                issues.append(Issue(f"{path}.groups", "InvalidPartitionSequence",
                                    f"groups omit nodes: {sorted(missing)}"))
            fault.groups = [list(g) for g in groups]
        elif action == "heal":
            if not partitioned:
                issues.append(Issue(path, "InvalidPartitionSequence",
                                    "heal while not partitioned"))
            partitioned = False
        elif action == "rolling_update":
            fault.service = item.get("service")
            fault.version = item.get("version", 2)
            fault.viable = bool(item.get("viable", True))
            if fault.service not in service_names:
                issues.append(Issue(f"{path}.service", "UnknownEntity",
                                    f"service {fault.service!r} not declared"))
        faults.append(fault)
    return faults


def _apply_service_overrides(base: PresetDef, overrides: dict,
                             issues: list[Issue]) -> PresetDef:
    by_name = {s.name: s for s in base.specs}
    for name, over in overrides.items():
        spec = by_name.get(name)
        if spec is None:
            issues.append(Issue(f"services.{name}", "UnknownEntity", "unknown service"))
            continue
        if "replicas" in over:
            if spec.pin_nodes is not None:
                issues.append(Issue(f"services.{name}.replicas", "ParseError",
                                    "cannot resize a host-pinned service"))
            else:
                spec.replicas = int(over["replicas"])
        if "processing_time_us" in over:
            spec.processing_time = Dist.from_spec(over["processing_time_us"])
        if "restart_delay_us" in over:
            spec.restart_delay_us = int(over["restart_delay_us"])
        if over.get("never_ack"):
            spec.never_ack = True
    return base


def _custom_preset(data: dict, params: Params, issues: list[Issue]) -> PresetDef:
    topo = data.get("topology")
    if not isinstance(topo, dict):
        issues.append(Issue("topology", "ParseError", "custom preset requires a topology"))
        topo = {"datacenters": [{"id": "dc1", "nodes": ["n1"]}]}
    datacenters: list[Datacenter] = []
    nodes: list[Node] = []
    for d, dc in enumerate(topo.get("datacenters", [])):
        dc_id = dc.get("id", f"dc{d + 1}")
        node_ids = dc.get("nodes", [])
        datacenters.append(Datacenter(id=dc_id, node_ids=list(node_ids)))
        for node_id in node_ids:
            nodes.append(Node(id=node_id, datacenter=dc_id, capacity=params.node_capacity))
    if not nodes:
        issues.append(Issue("topology", "ParseError", "topology has no nodes"))
        nodes = [Node(id="n1", datacenter="dc1", capacity=params.node_capacity)]
        datacenters = [Datacenter(id="dc1", node_ids=["n1"])]
    members = topo.get("broker_members", [nodes[0].id])
    for m, member in enumerate(members):
        if member not in {n.id for n in nodes}:
            issues.append(Issue(f"topology.broker_members[{m}]", "UnknownEntity",
                                f"node {member!r} not in topology"))

    specs: list[ServiceSpec] = []
    queues: list[tuple[str, QueueMode]] = []
    bindings: list[tuple[str, str, str]] = []
    exchanges: list[str] = list(data.get("exchanges", ["fx"]))
    for q, queue in enumerate(data.get("queues", [])):
        try:
            queues.append((queue["name"], QueueMode(queue.get("mode", "LoadBalanced"))))
        except (KeyError, ValueError) as exc:
            issues.append(Issue(f"queues[{q}]", "ParseError", str(exc)))
    for b, binding in enumerate(data.get("bindings", [])):
        exchange, queue, pattern = (binding.get("exchange"), binding.get("queue"),
                                    binding.get("pattern"))
        if exchange not in exchanges:
            issues.append(Issue(f"bindings[{b}].exchange", "UnknownEntity",
                                f"exchange {exchange!r} not declared"))
        if queue not in {name for name, _ in queues}:
            issues.append(Issue(f"bindings[{b}].queue", "UnknownEntity",
                                f"queue {queue!r} not declared"))
        bindings.append((exchange, queue, pattern or ""))
    for s, svc in enumerate(data.get("services", [])):
        path = f"services[{s}]"
        try:
            spec = ServiceSpec(
                name=svc["name"],
                kind=ServiceKind(svc.get("kind", "Business")),
                failover=FailoverMode(svc.get("failover", "ActiveActive")),
                replicas=int(svc.get("replicas", 1)),
                placement=PlacementRule(svc.get("placement", "Spread")),
                processing_time=Dist.from_spec(svc.get("processing_time_us", 1_000)),
                consumes=svc.get("consumes"),
                behavior=svc.get("behavior", "worker"),
                never_ack=bool(svc.get("never_ack", False)),
                active_index=int(svc.get("active_index", 0)))
        except (KeyError, ValueError) as exc:
            issues.append(Issue(path, "ParseError", str(exc)))
            continue
        if spec.consumes is not None and spec.consumes not in {name for name, _ in queues}:
            issues.append(Issue(f"{path}.consumes", "UnknownEntity",
                                f"queue {spec.consumes!r} not declared"))
        if spec.behavior not in ("worker", "sink", "cache"):
            issues.append(Issue(f"{path}.behavior", "ParseError",
                                "custom services support worker, sink or cache behaviors"))
        specs.append(spec)
    if not specs:
        issues.append(Issue("services", "ParseError", "custom preset requires services"))

    return PresetDef(name="custom", datacenters=datacenters, nodes=nodes,
                     broker_members=list(members), specs=specs, exchanges=exchanges,
                     queues=queues, bindings=bindings, request_path_services=[],
                     description="User-declared services only.")


def emit(build: Build) -> dict:
    """Serialize a build back to scenario form; validate(emit(b)) round-trips."""
    resolved = build.resolved_params()
    scenario = {
        "schema": SCHEMA_VERSION,
        "name": build.name,
        "preset": build.preset,
        "seed": build.seed,
        "horizon_us": build.horizon_us,
        "latency": resolved["latency"],
        "broker": {"ack_timeout_us": build.ack_timeout_us,
                   "max_redeliveries": build.max_redeliveries},
        "discovery": {"probe_interval_us": build.probe_config.interval_us,
                      "failure_threshold": build.probe_config.failure_threshold,
                      "recovery_threshold": build.probe_config.recovery_threshold,
                      "policies": {s: p.value for s, p in build.policies.items()}},
        "orchestrator": resolved["orchestrator"],
        "cache": resolved["cache"],
        "params": build.params.to_dict(),
        "workload": _workload_dict(build.workload),
        "faults": [f.to_dict() for f in build.faults],
    }
    if build.preset == "custom":
        scenario["topology"] = {
            "datacenters": [{"id": dc.id, "nodes": list(dc.node_ids)}
                            for dc in build.datacenters],
            "broker_members": list(build.broker_members)}
        scenario["exchanges"] = list(build.exchanges)
        scenario["queues"] = [{"name": name, "mode": mode.value}
                              for name, mode in build.queues]
        scenario["bindings"] = [{"exchange": e, "queue": q, "pattern": p}
                                for e, q, p in build.bindings]
        scenario["services"] = [{
            "name": s.name, "kind": s.kind.value, "failover": s.failover.value,
            "replicas": s.replicas, "placement": s.placement.value,
            "processing_time_us": s.processing_time.to_spec(),
            "consumes": s.consumes, "behavior": s.behavior,
            "never_ack": s.never_ack, "active_index": s.active_index,
        } for s in build.specs]
    return scenario


def _workload_dict(workload: WorkloadSpec) -> dict:
    if workload.kind == "requests":
        out = {"kind": "requests", "pattern": workload.pattern,
               "rate_per_s": workload.rate_per_s, "trade_ratio": workload.trade_ratio}
        if workload.duration_us is not None:
            out["duration_us"] = workload.duration_us
        return out
    return {"kind": "publishes", "exchange": workload.exchange,
            "routing_key": workload.routing_key, "count": workload.count,
            "period_us": workload.period_us, "start_us": workload.start_us,
            "publish_node": workload.publish_node}


def list_presets() -> str:
    """Human-readable inventory of both presets with their defaults."""
    params = Params()
    lines = []
    for name in ("monolith", "microservice"):
        preset = PRESET_BUILDERS[name](params)
        lines.append(f"preset: {name}")
        lines.append(f"  {preset.description}")
        dc_list = ", ".join(f"{dc.id}[{','.join(dc.node_ids)}]" for dc in preset.datacenters)
        lines.append(f"  topology: {dc_list}")
        lines.append(f"  broker members: {', '.join(preset.broker_members)}")
        lines.append("  services:")
        for spec in preset.specs:
            lines.append(f"    {spec.name}: {spec.kind.value}, {spec.failover.value}, "
                         f"replicas={spec.replicas}, placement={spec.placement.value}")
        lines.append("  defaults: intra_dc=500us inter_dc=2000us mainframe=20000us "
                     "ack_timeout=5000000us max_redeliveries=3 probe_interval=1000000us")
        lines.append("")
    lines.append("preset: custom")
    lines.append("  User-declared topology, queues, bindings and services "
                 "(worker/sink/cache behaviors, publishes workload).")
    return "\n".join(lines)

"""FX trading workload: request generation and the two architecture presets.

Monolith preset: three hosts, one per datacenter, the whole system pinned to
every host. External provider APIs run active/passive (one socket per
provider); requests enter through the broker, are translated by the gateway
component and handed to the backend component over direct calls routed by
per-instance static reference tables (co-located instance first, then the
ring of other hosts). A failed call advances the table index - which never
moves back, so after a fail-over the dependant keeps using the remote
instance even when the original recovers. Every request pays the full
mainframe round trip plus a shared-database write.

Microservice preset: five hosts across three datacenters, broker members one
per datacenter, all business traffic choreographed through the bus
(api -> auth -> trading -> linecheck -> response), a datacenter-replicated
cache in front of the mainframe, and broadcast fan-out of completion events
to the foundation services. Business services are stateless between bus
messages, so redelivery can land anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .broker import PayloadKind, QueueMode
from .engine import Dist, SimTime, US_PER_SECOND
from .errors import BrokerUnreachable, NoHealthyInstance
from .orchestrator import (FailoverMode, PlacementRule, Replica, ReplicaState,
                           ServiceKind, ServiceSpec)
from .topology import DROPPED, Datacenter, Node

PROVIDERS = ("provider-1", "provider-2")


@dataclass
class Params:
    """Preset tuning constants; every value can be overridden per scenario."""

    proc_business_us: int = 1_000
    proc_api_us: int = 1_000
    proc_foundation_us: int = 200
    db_write_us: int = 3_000        # monolith shared-database write per request
    node_capacity: int = 8
    monolith_gateway_restart_us: int = 6_000_000
    monolith_backend_restart_us: int = 12_000_000

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CacheConfig:
    hit_ratio: float = 0.8
    hit_latency_us: int = 1_000

    def __post_init__(self):
        if not 0.0 <= self.hit_ratio <= 1.0:
            raise ValueError("cache hit_ratio must be within [0, 1]")


@dataclass
class Request:
    id: str
    kind: str                      # "Trade" | "LineCheck"
    provider: str
    created_at: SimTime
    outcome: str = "Pending"       # Pending | Completed | Failed | ErrorQueued
    completed_at: Optional[SimTime] = None
    hops: list[tuple[str, str, SimTime]] = field(default_factory=list)
    required_services: set[str] = field(default_factory=set)
    mainframe_us: int = 0
    fail_reason: str = ""

    @property
    def latency_us(self) -> Optional[int]:
        if self.completed_at is None:
            return None
        return self.completed_at - self.created_at


@dataclass
class WorkloadSpec:
    kind: str = "requests"          # "requests" | "publishes"
    pattern: str = "constant"       # "constant" | "poisson"
    rate_per_s: float = 20.0
    duration_us: Optional[int] = None
    trade_ratio: float = 0.5
    # publishes-kind fields
    exchange: str = "fx"
    routing_key: str = "job.run"
    count: int = 0
    period_us: int = 1_000_000
    start_us: int = 0
    publish_node: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PresetDef:
    name: str
    datacenters: list[Datacenter]
    nodes: list[Node]
    broker_members: list[str]
    specs: list[ServiceSpec]
    exchanges: list[str]
    queues: list[tuple[str, QueueMode]]
    bindings: list[tuple[str, str, str]]
    request_path_services: list[str]
    description: str


def _api_specs(entry_key: str, pinned: Optional[list[str]], params: Params) -> list[ServiceSpec]:
    specs = []
    for i, provider in enumerate(PROVIDERS):
        name = f"api-{provider}"
        specs.append(ServiceSpec(
            name=name, kind=ServiceKind.EXTERNAL_API, failover=FailoverMode.ACTIVE_PASSIVE,
            replicas=len(pinned) if pinned else 2,
            placement=PlacementRule.SPREAD,
            processing_time=Dist.constant(params.proc_api_us),
            consumes=f"q.api.{provider}", behavior="api",
            behavior_params={"provider": provider, "entry_key": entry_key},
            pin_nodes=list(pinned) if pinned else None,
            active_index=i))
    return specs


def monolith_preset(params: Params) -> PresetDef:
    hosts = ["h1", "h2", "h3"]
    dcs = [Datacenter(id=f"dc{i + 1}", node_ids=[h]) for i, h in enumerate(hosts)]
    nodes = [Node(id=h, datacenter=f"dc{i + 1}", capacity=params.node_capacity)
             for i, h in enumerate(hosts)]
    biz = Dist.constant(params.proc_business_us)
    specs = _api_specs("request", hosts, params)
    specs += [
        ServiceSpec(name="forex-api", kind=ServiceKind.MONOLITH_COMPONENT,
                    failover=FailoverMode.ACTIVE_ACTIVE, replicas=3,
                    placement=PlacementRule.SPREAD, processing_time=biz,
                    consumes="q.requests", behavior="forexapi", pin_nodes=hosts,
                    restart_delay_us=params.monolith_gateway_restart_us),
        ServiceSpec(name="request-service", kind=ServiceKind.MONOLITH_COMPONENT,
                    failover=FailoverMode.ACTIVE_ACTIVE, replicas=3,
                    placement=PlacementRule.SPREAD, processing_time=biz,
                    behavior="backend", pin_nodes=hosts,
                    restart_delay_us=params.monolith_backend_restart_us),
        ServiceSpec(name="push-service", kind=ServiceKind.MONOLITH_COMPONENT,
                    failover=FailoverMode.ACTIVE_ACTIVE, replicas=3,
                    placement=PlacementRule.SPREAD,
                    processing_time=Dist.constant(params.proc_foundation_us),
                    consumes="q.push", behavior="sink", pin_nodes=hosts),
    ]
    queues = [("q.requests", QueueMode.LOAD_BALANCED),
              ("q.api.provider-1", QueueMode.LOAD_BALANCED),
              ("q.api.provider-2", QueueMode.LOAD_BALANCED),
              ("q.push", QueueMode.BROADCAST)]
    bindings = [("fx", "q.requests", "request.*"),
                ("fx", "q.api.provider-1", "response.provider-1"),
                ("fx", "q.api.provider-2", "response.provider-2"),
                ("fx", "q.push", "response.*")]
    return PresetDef(
        name="monolith", datacenters=dcs, nodes=nodes, broker_members=list(hosts),
        specs=specs, exchanges=["fx"], queues=queues, bindings=bindings,
        request_path_services=["api-provider-1", "api-provider-2",
                               "forex-api", "request-service"],
        description=(
            "Three hosts, one per datacenter, whole system replicated on each "
            "(broker clustered across all hosts). Components: external provider "
            "APIs (ForexAPI-facing, active/passive, one socket per provider), "
            "ForexAPI gateway (forex-api), RequestService backend "
            "(request-service, direct calls via static reference tables, no "
            "fall-back after fail-over), PushService (push-service, broadcast "
            "consumer), shared ForexData database (modelled as a per-request "
            "write latency) and the mainframe (single slow dependency, no cache)."))


def microservice_preset(params: Params) -> PresetDef:
    layout = [("h1", "dc1"), ("h2", "dc2"), ("h3", "dc3"), ("h4", "dc1"), ("h5", "dc2")]
    dcs_map: dict[str, list[str]] = {}
    for node_id, dc in layout:
        dcs_map.setdefault(dc, []).append(node_id)
    dcs = [Datacenter(id=dc, node_ids=nodes) for dc, nodes in sorted(dcs_map.items())]
    nodes = [Node(id=n, datacenter=dc, capacity=params.node_capacity) for n, dc in layout]
    biz = Dist.constant(params.proc_business_us)
    foundation = Dist.constant(params.proc_foundation_us)

    specs = _api_specs("auth", None, params)
    for name, behavior, consumes in [("auth", "auth", "q.auth"),
                                     ("trading", "trading", "q.trading"),
                                     ("linecheck", "linecheck", "q.linecheck"),
                                     ("responsibility", "sink", "q.responsibility")]:
        specs.append(ServiceSpec(name=name, kind=ServiceKind.BUSINESS,
                                 failover=FailoverMode.ACTIVE_ACTIVE, replicas=2,
                                 placement=PlacementRule.SPREAD, processing_time=biz,
                                 consumes=consumes, behavior=behavior))
    for name in ["logging", "monitoring", "tracing", "datasync"]:
        specs.append(ServiceSpec(name=name, kind=ServiceKind.FOUNDATION,
                                 failover=FailoverMode.ACTIVE_ACTIVE, replicas=2,
                                 placement=PlacementRule.SPREAD, processing_time=foundation,
                                 consumes="q.events", behavior="sink"))
    for name in ["configuration", "failover-coordinator"]:
        specs.append(ServiceSpec(name=name, kind=ServiceKind.FOUNDATION,
                                 failover=FailoverMode.ACTIVE_ACTIVE, replicas=2,
                                 placement=PlacementRule.SPREAD, processing_time=foundation,
                                 behavior="sink"))
    specs.append(ServiceSpec(name="cache", kind=ServiceKind.INFRASTRUCTURE,
                             failover=FailoverMode.ACTIVE_ACTIVE, replicas=3,
                             placement=PlacementRule.ONE_PER_DATACENTER,
                             processing_time=foundation, behavior="cache"))

    queues = [("q.api.provider-1", QueueMode.LOAD_BALANCED),
              ("q.api.provider-2", QueueMode.LOAD_BALANCED),
              ("q.auth", QueueMode.LOAD_BALANCED),
              ("q.trading", QueueMode.LOAD_BALANCED),
              ("q.linecheck", QueueMode.LOAD_BALANCED),
              ("q.responsibility", QueueMode.LOAD_BALANCED),
              ("q.events", QueueMode.BROADCAST)]
    bindings = [("fx", "q.auth", "auth.*"),
                ("fx", "q.trading", "trade.*"),
                ("fx", "q.linecheck", "linecheck.*"),
                ("fx", "q.responsibility", "responsibility.*"),
                ("fx", "q.api.provider-1", "response.provider-1"),
                ("fx", "q.api.provider-2", "response.provider-2"),
                ("fx", "q.events", "event.*")]
    return PresetDef(
        name="microservice", datacenters=dcs, nodes=nodes,
        broker_members=["h1", "h2", "h3"], specs=specs, exchanges=["fx"],
        queues=queues, bindings=bindings,
        request_path_services=["api-provider-1", "api-provider-2",
                               "auth", "trading", "linecheck"],
        description=(
            "Five hosts spread across three datacenters; broker members on one "
            "host per datacenter. Business services (auth, trading, linecheck, "
            "responsibility) and foundation services (logging, monitoring, "
            "tracing, datasync, configuration, failover-coordinator) integrate "
            "only via message choreography on the bus; external provider APIs "
            "run active/passive. A datacenter-replicated cache fronts the "
            "mainframe for static data."))


PRESET_BUILDERS = {"monolith": monolith_preset, "microservice": microservice_preset}


# --------------------------------------------------------------------------
# runtime behavior
# --------------------------------------------------------------------------

@dataclass
class _StaticRefTable:
    order: list[str]   # dependency replica ids, co-located first then the host ring
    index: int = 0


class FxWorkload:
    """Request lifecycle driver for both presets plus the raw-publish mode."""

    def __init__(self, world):
        self.w = world
        self.requests: dict[str, Request] = {}
        self.generated = 0
        self._req_counter = 0
        self.msg_request: dict[str, str] = {}       # message id -> request id
        self.api_inflight: dict[str, str] = {}      # request id -> api replica id
        self.refs: dict[str, _StaticRefTable] = {}  # caller replica id -> table
        self._rpc_counter = 0
        self.rpc_inflight: dict[int, tuple[str, Callable[[], None]]] = {}
        self.cache_hits = 0
        self.cache_misses = 0

        world.orchestrator.on_spawn.append(self.on_replica_spawned)
        world.orchestrator.on_replica_failed.append(self.on_replica_failed)
        world.broker.on_error.append(self.on_error_entry)

    # -- arrival generation ------------------------------------------------

    def schedule_arrivals(self) -> None:
        from .engine import EventKind
        spec: WorkloadSpec = self.w.build.workload
        engine = self.w.engine
        if spec.kind == "publishes":
            for i in range(spec.count):
                at = spec.start_us + i * spec.period_us
                if at > engine.horizon:
                    break
                engine.schedule(at, EventKind.WORK_ARRIVAL, "publish",
                                {"op": "publish", "key": spec.routing_key})
            return
        if spec.rate_per_s <= 0:
            return
        duration = spec.duration_us if spec.duration_us is not None else engine.horizon
        rng = engine.rng("arrivals")
        times: list[int] = []
        if spec.pattern == "constant":
            i = 0
            while True:
                at = round((i + 1) * US_PER_SECOND / spec.rate_per_s)
                if at > duration:
                    break
                times.append(at)
                i += 1
        else:  # poisson
            t = 0.0
            while True:
                t += rng.expovariate(spec.rate_per_s / US_PER_SECOND)
                if t > duration:
                    break
                times.append(int(round(t)))
        for i, at in enumerate(times):
            provider = PROVIDERS[i % len(PROVIDERS)]
            kind = "Trade" if rng.random() < spec.trade_ratio else "LineCheck"
            engine.schedule(at, EventKind.WORK_ARRIVAL, provider,
                            {"op": "request", "provider": provider, "kind": kind})

    def on_work_arrival(self, event) -> None:
        payload = event.payload
        if payload["op"] == "publish":
            spec = self.w.build.workload
            node = spec.publish_node or self.w.build.nodes[0].id
            try:
                self.w.broker.publish(spec.exchange, payload["key"],
                                      PayloadKind.TRADE_REQUEST, node)
            except BrokerUnreachable:
                self.w.engine.trace("wl", "publish-failed", "broker unreachable")
            return
        self._arrive_request(payload["provider"], payload["kind"])

    def _arrive_request(self, provider: str, kind: str) -> None:
        self._req_counter += 1
        self.generated += 1
        request = Request(id=f"r{self._req_counter}", kind=kind, provider=provider,
                          created_at=self.w.engine.now)
        request.required_services = set(self.w.build.request_path_services) \
            - {f"api-{p}" for p in PROVIDERS if p != provider}
        self.requests[request.id] = request
        self.w.engine.trace("wl", "arrive", f"{request.id} kind={kind} provider={provider}")
        service = f"api-{provider}"
        actives = self.w.orchestrator.active_replicas(service)
        if not actives:
            self._fail(request, "no-active-api")
            return
        api = actives[0]
        api.in_flight += 1
        self.api_inflight[request.id] = api.id
        self._hop(request, service, api.node)
        spec = self.w.orchestrator.specs[service]
        duration = self.w.engine.rand_draw("service", spec.processing_time)

        def done() -> None:
            api.in_flight = max(0, api.in_flight - 1)
            self.w.orchestrator.notify_idle(api.id)
            if not api.alive or request.outcome != "Pending":
                return
            self.api_inflight.pop(request.id, None)
            entry_key = spec.behavior_params["entry_key"]
            key = f"{entry_key}.{'trade' if kind == 'Trade' else 'linecheck'}"
            payload_kind = (PayloadKind.TRADE_REQUEST if kind == "Trade"
                            else PayloadKind.LINE_CHECK_REQUEST)
            self._publish(request, key, payload_kind, api.node,
                          {"request": request.id, "flow": kind})

        self.w.network.submit_work(api.node, duration, done)

    # -- shared helpers ---------------------------------------------------------

    def _hop(self, request: Request, stage: str, node: str) -> None:
        request.hops.append((stage, node, self.w.engine.now))

    def _fail(self, request: Request, reason: str) -> None:
        if request.outcome != "Pending":
            return
        request.outcome = "Failed"
        request.fail_reason = reason
        self.w.engine.trace("wl", "outcome", f"{request.id} Failed reason={reason}")

    def _complete(self, request: Request) -> None:
        if request.outcome != "Pending":
            return
        request.outcome = "Completed"
        request.completed_at = self.w.engine.now
        self.w.engine.trace("wl", "outcome",
                            f"{request.id} Completed us={request.latency_us}")

    def _publish(self, request: Optional[Request], key: str, payload_kind: PayloadKind,
                 node: str, meta: dict) -> bool:
        try:
            matched = self.w.broker.publish("fx", key, payload_kind, node, meta)
        except BrokerUnreachable:
            self.w.engine.trace("wl", "publish-failed", f"{key} from={node}")
            return False
        if request is not None:
            self.msg_request[self.w.broker.last_message_id] = request.id
        return True

    def request_of(self, message) -> Optional[Request]:
        rid = message.meta.get("request")
        return self.requests.get(rid) if rid else None

    def on_error_entry(self, msg_id: str, _queue: str, _reason: str) -> None:
        rid = self.msg_request.get(msg_id)
        request = self.requests.get(rid) if rid else None
        if request is not None and request.outcome == "Pending":
            request.outcome = "ErrorQueued"
            self.w.engine.trace("wl", "outcome", f"{request.id} ErrorQueued")

    def on_replica_failed(self, replica: Replica) -> None:
        for rid, api_id in sorted(self.api_inflight.items()):
            if api_id == replica.id:
                self.api_inflight.pop(rid, None)
                request = self.requests.get(rid)
                if request is not None:
                    self._fail(request, "api-lost")
        for call_id in sorted(self.rpc_inflight):
            target, error_cb = self.rpc_inflight[call_id]
            if target == replica.id:
                self.rpc_inflight.pop(call_id, None)
                error_cb()

    # -- monolith static reference routing -----------------------------------------

    def on_replica_spawned(self, replica: Replica) -> None:
        if self.w.build.preset != "monolith":
            return
        spec = self.w.orchestrator.specs[replica.service]
        if spec.behavior != "forexapi":
            return
        ring = [n.id for n in self.w.build.nodes]
        start = ring.index(replica.node)
        ordered_nodes = ring[start:] + ring[:start]
        backend = [r for r in self.w.orchestrator.by_service["request-service"]]
        order = []
        for node_id in ordered_nodes:
            order.extend(r.id for r in backend if r.home_node == node_id)
        self.refs[replica.id] = _StaticRefTable(order=order)
        self.w.engine.trace("wl", "static-ref-reset", f"{replica.id} -> {','.join(order)}")

    def _advance_ref(self, caller_id: str, table: _StaticRefTable) -> None:
        if table.index < len(table.order) - 1:
            old = table.index
            table.index += 1
            self.w.engine.trace("wl", "static-ref",
                                f"{caller_id} idx={old}->{table.index} "
                                f"now={table.order[table.index]}")

    def direct_call(self, caller: Replica, request: Request,
                    on_ok: Callable[[], None], on_fail: Callable[[], None]) -> None:
        """One call against the current static reference; on failure advance
        the reference (never back) and retry exactly once."""
        table = self.refs[caller.id]

        def attempt(retries_left: int) -> None:
            target_id = table.order[table.index]
            target = self.w.orchestrator.replicas.get(target_id)

            def failed() -> None:
                self._advance_ref(caller.id, table)
                if retries_left > 0:
                    attempt(retries_left - 1)
                else:
                    on_fail()

            if target is None:
                failed()
                return
            self._rpc_counter += 1
            call_id = self._rpc_counter

            def respond_error() -> None:
                # connection error reported back to the caller
                if self.rpc_inflight.pop(call_id, None) is None:
                    return
                if caller.alive:
                    failed()

            def serve() -> None:
                if not (target.alive and target.state == ReplicaState.ACTIVE):
                    self.rpc_inflight.pop(call_id, None)
                    result = self.w.network.deliver(target.node, caller.node,
                                                    f"rpc-err:{request.id}",
                                                    on_arrive=lambda: caller.alive and failed())
                    if result == DROPPED:
                        pass  # caller side learns via its own failure handling
                    return
                self._serve_backend(call_id, caller, target, request, on_ok)

            self.rpc_inflight[call_id] = (target_id, respond_error)
            result = self.w.network.deliver(caller.node, target.node, f"rpc:{request.id}",
                                            on_arrive=serve, on_drop=respond_error)
            if result == DROPPED:
                return  # respond_error already ran synchronously

        attempt(1)

    def _serve_backend(self, call_id: int, caller: Replica, target: Replica,
                       request: Request, on_ok: Callable[[], None]) -> None:
        spec = self.w.orchestrator.specs[target.service]
        self._hop(request, target.service, target.node)
        self._hop(request, "linecheck", target.node)
        mf_us = self.mainframe_call(request, target.node)
        duration = (self.w.engine.rand_draw("service", spec.processing_time)
                    + mf_us + self.w.build.params.db_write_us)
        target.in_flight += 1

        def done() -> None:
            target.in_flight = max(0, target.in_flight - 1)
            self.w.orchestrator.notify_idle(target.id)
            if self.rpc_inflight.pop(call_id, None) is None:
                return  # already errored out (e.g. target declared failed)
            if not target.alive:
                return
            self.w.network.deliver(target.node, caller.node, f"rpc-resp:{request.id}",
                                   on_arrive=lambda: caller.alive and on_ok())

        self.w.network.submit_work(target.node, duration, done)

    # -- mainframe / cache ------------------------------------------------------------

    def mainframe_call(self, request: Request, node: str) -> int:
        """Latency contribution of the mainframe leg, through the cache when
        the preset has one. A zero hit ratio bypasses the cache entirely."""
        build = self.w.build
        if build.preset != "microservice" or build.cache.hit_ratio == 0.0:
            lat = self.w.engine.rand_draw("net", build.latency.mainframe_call)
            request.mainframe_us += lat
            self._hop(request, "mainframe", node)
            return lat
        try:
            cache_replica_id = self.w.registry.resolve("cache", node)
        except NoHealthyInstance:
            self.w.engine.trace("wl", "cache-bypass", f"{request.id} from={node}")
            lat = self.w.engine.rand_draw("net", build.latency.mainframe_call)
            request.mainframe_us += lat
            self._hop(request, "mainframe", node)
            return lat
        cache_node = self.w.orchestrator.replicas[cache_replica_id].node
        hit = self.w.engine.rng("cache").random() < build.cache.hit_ratio
        if hit:
            self.cache_hits += 1
            self._hop(request, "cache", cache_node)
            return self.w.network.count_logical_call(node, cache_node, "cache",
                                                     extra_us=build.cache.hit_latency_us)
        self.cache_misses += 1
        self._hop(request, "cache", cache_node)
        rtt = self.w.network.count_logical_call(node, cache_node, "cache-miss")
        lat = self.w.engine.rand_draw("net", build.latency.mainframe_call)
        request.mainframe_us += lat
        self._hop(request, "mainframe", node)
        return rtt + lat

    # -- per-service message handling ------------------------------------------------

    def plan(self, replica: Replica, queue: str, message) -> tuple[int, Callable[[], None], bool]:
        """Returns (duration, continuation, auto_ack) for a consumed message."""
        spec = self.w.orchestrator.specs[replica.service]
        behavior = spec.behavior
        draw = self.w.engine.rand_draw("service", spec.processing_time)
        request = self.request_of(message)

        if behavior in ("worker", "sink"):
            return draw, lambda: None, True

        if behavior == "api":
            # response leg back to the provider: the request is complete
            if request is not None:
                self._hop(request, replica.service, replica.node)

            def finish() -> None:
                if request is not None:
                    self._complete(request)
                    if self.w.build.preset == "microservice":
                        self._publish(None, "event.completed", PayloadKind.LOG_RECORD,
                                      replica.node, {"request": message.meta.get("request", "")})
            return draw, finish, True

        if behavior == "auth":
            if request is not None:
                self._hop(request, replica.service, replica.node)

            def forward_auth() -> None:
                if request is None or request.outcome != "Pending":
                    return
                flow = message.meta.get("flow")
                key = "trade.validated" if flow == "Trade" else "linecheck.standalone"
                self._publish(request, key, message.payload_kind, replica.node,
                              dict(message.meta))
            return draw, forward_auth, True

        if behavior == "trading":
            if request is not None:
                self._hop(request, replica.service, replica.node)
            stage = message.routing_key

            def trading_step() -> None:
                if request is None or request.outcome != "Pending":
                    return
                if stage == "trade.validated":
                    self._publish(request, "linecheck.fortrade", message.payload_kind,
                                  replica.node, dict(message.meta))
                else:  # trade.checked: registration done, answer the provider
                    self._publish(request, f"response.{request.provider}",
                                  PayloadKind.RESPONSE, replica.node, dict(message.meta))
            return draw, trading_step, True

        if behavior == "linecheck":
            if request is not None:
                self._hop(request, replica.service, replica.node)
            extra = self.mainframe_call(request, replica.node) if request is not None else 0

            def linecheck_step() -> None:
                if request is None or request.outcome != "Pending":
                    return
                if message.routing_key == "linecheck.fortrade":
                    self._publish(request, "trade.checked", message.payload_kind,
                                  replica.node, dict(message.meta))
                else:
                    self._publish(request, f"response.{request.provider}",
                                  PayloadKind.RESPONSE, replica.node, dict(message.meta))
            return draw + extra, linecheck_step, True

        if behavior == "forexapi":
            if request is not None:
                self._hop(request, replica.service, replica.node)

            def gateway_step() -> None:
                if request is None or request.outcome != "Pending":
                    self.w.broker.ack(queue, message.id, replica.id)
                    return

                def backend_ok() -> None:
                    published = self._publish(request, f"response.{request.provider}",
                                              PayloadKind.RESPONSE, replica.node,
                                              dict(message.meta))
                    if published:
                        self.w.broker.ack(queue, message.id, replica.id)

                def backend_fail() -> None:
                    self._fail(request, "backend-unreachable")
                    self.w.broker.ack(queue, message.id, replica.id)

                self.direct_call(replica, request, backend_ok, backend_fail)
            return draw, gateway_step, False

        raise ValueError(f"unknown behavior {behavior!r} for service {replica.service}")

    # -- trace-style probes -----------------------------------------------------------

    def conservation_counts(self) -> dict[str, int]:
        counts = {"generated": self.generated, "Completed": 0, "Failed": 0,
                  "ErrorQueued": 0, "Pending": 0}
        for request in self.requests.values():
            counts[request.outcome] += 1
        return counts


def stage_load(requests, stage: str, start_us: int, end_us: int) -> dict[str, int]:
    """Served-request counts per node for one pipeline stage within a window."""
    counts: dict[str, int] = {}
    for request in requests:
        for hop_stage, node, at in request.hops:
            if hop_stage == stage and start_us <= at <= end_us:
                counts[node] = counts.get(node, 0) + 1
    return counts


def fallback_pathology_probe(requests, stage: str, bucket_us: int,
                             horizon_us: int) -> list[dict[str, int]]:
    """Per-instance served counts over time, bucketed; the last buckets show
    where dependency traffic settles after fail-overs."""
    buckets = []
    t = 0
    while t < horizon_us:
        buckets.append(stage_load(requests, stage, t, min(t + bucket_us, horizon_us) - 1))
        t += bucket_us
    return buckets

"""Wires a materialized scenario into a running world and executes it.

A run is a pure function of (scenario, seed): the world deep-copies the build
so repeated runs from one validation are isolated, every component draws time
and randomness from the engine, and the trace plus the metrics report are the
only outputs. Internal consistency checks abort loudly rather than degrade.
"""

from __future__ import annotations

import copy
from typing import Optional

from .broker import Broker, QueueMode
from .discovery import Health, Registry
from .engine import Engine, EventKind, RunHandle
from .errors import InvariantViolation
from .metrics import AvailabilityTracker, MetricsReport, nearest_rank
from .orchestrator import Orchestrator, ReplicaState
from .scenario import Build, FaultAction, validate
from .topology import Network
from .workload import FxWorkload
from . import scenario as scenario_mod


class World:
    def __init__(self, build: Build):
        self.build = copy.deepcopy(build)
        build = self.build
        self.engine = Engine(seed=build.seed, horizon=build.horizon_us)
        self.network = Network(self.engine, build.datacenters, build.nodes, build.latency)
        self.registry = Registry(
            self.engine, self.network, probe_config=build.probe_config,
            replica_alive=lambda r: self.orchestrator.replica_alive(r),
            in_flight=lambda r: self._replica_in_flight(r))
        self.broker = Broker(
            self.engine, self.network, members=build.broker_members,
            consumer_state=lambda r, g: self.orchestrator.consumer_state(r, g),
            deliver_cb=self._on_consumer_delivery,
            ack_timeout_us=build.ack_timeout_us,
            max_redeliveries=build.max_redeliveries)
        self.orchestrator = Orchestrator(
            self.engine, self.network, self.registry, self.broker,
            on_change=lambda service: self.tracker.update(service),
            takeover_delay_us=build.takeover_delay_us,
            restart_delay_us=build.restart_delay_us,
            update_timeout_us=build.update_timeout_us)
        self.tracker = AvailabilityTracker(self.engine, self._service_available)
        self.workload = FxWorkload(self)

        self.registry.on_transition.append(
            lambda service, _r, _o, _n, _g: self.tracker.update(service))
        self.network.on_node_status.append(lambda _n, _up: self.tracker.update_all())
        self.network.on_partition_change.append(lambda _p: self.tracker.update_all())

        self.engine.handlers.update({
            EventKind.MESSAGE_DELIVERY: self.network.on_delivery_event,
            EventKind.PROCESSING_DONE: self.network.on_processing_done,
            EventKind.ACK_TIMEOUT: self.broker.on_ack_timeout,
            EventKind.HEALTH_PROBE: self.registry.on_probe_tick,
            EventKind.TAKEOVER_TIMER: self.orchestrator._on_timer,
            EventKind.UPDATE_STEP: self.orchestrator.on_update_step,
            EventKind.WORK_ARRIVAL: self.workload.on_work_arrival,
            EventKind.FAULT_ACTION: self._on_fault,
        })
        self.report: Optional[MetricsReport] = None

    # -- wiring helpers ------------------------------------------------------

    def _replica_in_flight(self, replica_id: str) -> int:
        replica = self.orchestrator.replicas.get(replica_id)
        return replica.in_flight if replica else 0

    def _service_available(self, service: str) -> bool:
        group = self.registry.main_group()
        for replica in self.orchestrator.by_service.get(service, []):
            if (replica.state == ReplicaState.ACTIVE
                    and self.network.nodes[replica.node].up
                    and self.registry.health_of(replica.id, group) == Health.HEALTHY):
                return True
        return False

    def _on_consumer_delivery(self, replica_id: str, queue: str, message) -> None:
        replica = self.orchestrator.replicas.get(replica_id)
        if replica is None or not replica.alive:
            return
        if replica.state not in (ReplicaState.ACTIVE, ReplicaState.DRAINING):
            return
        spec = self.orchestrator.specs[replica.service]
        duration, continuation, auto_ack = self.workload.plan(replica, queue, message)
        replica.in_flight += 1
        self.engine.trace(replica.id, "process-start", f"{message.id} {queue}")

        def done() -> None:
            if not replica.alive:
                return
            count = self.broker.note_processed(queue, message.id, replica.id)
            self.engine.trace(replica.id, "process-done", f"{message.id} {queue} n={count}")
            continuation()
            if (auto_ack and not spec.never_ack
                    and self.broker.queue_configs[queue].mode == QueueMode.LOAD_BALANCED):
                self.broker.ack(queue, message.id, replica.id)
            replica.in_flight = max(0, replica.in_flight - 1)
            self.orchestrator.notify_idle(replica.id)

        self.network.submit_work(replica.node, duration, done)

    def _on_fault(self, event) -> None:
        fault: FaultAction = event.payload
        self.engine.trace("engine", "fault", _fault_text(fault))
        if fault.action == "kill_node":
            self.network.set_node_status(fault.node, False)
        elif fault.action == "restore_node":
            self.network.set_node_status(fault.node, True)
        elif fault.action == "kill_replica":
            self.orchestrator.kill_replica(fault.service, fault.index)
        elif fault.action == "partition":
            self.network.apply_partition([set(g) for g in fault.groups])
        elif fault.action == "heal":
            self.network.heal()
        elif fault.action == "rolling_update":
            self.orchestrator.rolling_update(fault.service, fault.version, fault.viable)

    # -- lifecycle ---------------------------------------------------------------

    def setup(self) -> None:
        build = self.build
        self.engine.trace("engine", "start", f"scenario={build.name} seed={build.seed}")
        for exchange in build.exchanges:
            self.broker.declare_exchange(exchange)
        for queue, mode in build.queues:
            self.broker.declare_queue(queue, mode)
        for exchange, queue, pattern in build.bindings:
            self.broker.bind(exchange, queue, pattern)
        for spec in build.specs:
            policy = build.policies.get(spec.name)
            if policy is not None:
                self.registry.declare_service(spec.name, policy)
            self.orchestrator.add_service(spec)
            self.tracker.register(spec.name)
        self.registry.schedule_probes()
        self.workload.schedule_arrivals()
        for fault in build.faults:
            self.engine.schedule(fault.at_us, EventKind.FAULT_ACTION, "fault", fault)

    def run(self) -> None:
        self.setup()
        self.engine.run_loop()
        self.engine.trace("engine", "end", f"fired={self.engine.fired}")
        self.finalize()

    def finalize(self) -> None:
        self.tracker.finalize()
        self.broker.check_no_loss()
        counts = self.workload.conservation_counts()
        total = sum(v for k, v in counts.items() if k != "generated")
        if total != counts["generated"]:
            raise InvariantViolation(f"request conservation broken: {counts}")
        self.report = self._build_report(counts)

    # -- reporting -----------------------------------------------------------------

    def _build_report(self, counts: dict[str, int]) -> MetricsReport:
        build = self.build
        horizon_s = build.horizon_us / 1_000_000
        latencies = sorted(r.latency_us for r in self.workload.requests.values()
                           if r.latency_us is not None)
        completed_requests = [r for r in self.workload.requests.values()
                              if r.outcome == "Completed"]
        total_latency = sum(r.latency_us for r in completed_requests)
        total_mainframe = sum(r.mainframe_us for r in completed_requests)

        path = build.request_path_services or [s.name for s in build.specs]
        per_service: dict[str, dict] = {}
        stage_loads: dict[str, dict[str, int]] = {}
        for request in self.workload.requests.values():
            for stage, node, _at in request.hops:
                stage_loads.setdefault(stage, {})
                stage_loads[stage][node] = stage_loads[stage].get(node, 0) + 1
        for spec in build.specs:
            per_service[spec.name] = {
                "availability": self.tracker.availability(spec.name, build.horizon_us),
                "served": dict(sorted(stage_loads.get(spec.name, {}).items())),
            }
        structural = min((per_service[s]["availability"] for s in path
                          if s in per_service), default=1.0)
        probe = build.probe_config
        slack = probe.interval_us * probe.failure_threshold \
            + 2 * int(build.latency.inter_dc.mean())
        unroutable = sum(1 for _m, _q, reason in self.broker.error_entries
                         if reason == "Unroutable")
        return MetricsReport(
            scenario_name=build.name, preset=build.preset, seed=build.seed,
            horizon_us=build.horizon_us, fingerprint=build.fingerprint(),
            generated=counts["generated"], completed=counts["Completed"],
            failed=counts["Failed"], error_queued=counts["ErrorQueued"],
            pending=counts["Pending"],
            throughput_per_s=counts["Completed"] / horizon_s,
            latency_p50_us=nearest_rank(latencies, 50),
            latency_p95_us=nearest_rank(latencies, 95),
            latency_p99_us=nearest_rank(latencies, 99),
            availability_success=(counts["Completed"] / counts["generated"]
                                  if counts["generated"] else 1.0),
            availability_structural=structural,
            duplicate_deliveries=self.broker.duplicate_deliveries(),
            reenqueued_processed=self.broker.reenqueued_processed,
            error_queue_depth=self.broker.error_queue_depth(),
            unroutable_count=unroutable,
            cross_dc_messages=self.network.cross_dc_messages,
            mainframe_share=(total_mainframe / total_latency if total_latency else 0.0),
            cache_hits=self.workload.cache_hits,
            cache_misses=self.workload.cache_misses,
            detection_slack_us=slack,
            services=per_service, stage_loads=stage_loads,
            params=build.resolved_params())


def _fault_text(fault: FaultAction) -> str:
    parts = [fault.action]
    for key in ("node", "service", "index", "version"):
        value = getattr(fault, key)
        if value is not None:
            parts.append(f"{key}={value}")
    if fault.groups:
        parts.append("groups=" + "|".join(",".join(sorted(g)) for g in fault.groups))
    return " ".join(parts)


def execute(build: Build) -> World:
    world = World(build)
    world.run()
    return world


def run(source, seed: Optional[int] = None) -> tuple[MetricsReport, RunHandle]:
    """Validate (if needed) and run a scenario; returns (report, handle)."""
    build = source if isinstance(source, Build) else validate(source, seed_override=seed)
    if seed is not None and build.seed != seed:
        build = copy.deepcopy(build)
        build.seed = seed
    world = execute(build)
    return world.report, world.engine.handle

"""Replica lifecycle: placement, failover enforcement, rebalancing, rolling updates.

Placement spreads replicas over distinct nodes while maximizing datacenter
diversity (or pins one replica per datacenter for clustered infrastructure).
Failure handling is driven by health detection, not ground truth: a dead
replica keeps its registry entry and queue subscriptions until probes mark it
unhealthy, after which a restart is scheduled (active/active) or a passive
standby is activated after the takeover delay (active/passive). Activation
goes through a lease with at most one holder per service, re-confirmed
against the majority health view, so two replicas of an active/passive
service are never active at once - a partitioned-away active demotes itself
when it can no longer re-confirm, strictly before the majority side promotes
a successor.

Rolling updates replace one replica at a time, spawning the new version and
waiting for it to pass health checks before draining the old one; if the new
version never becomes healthy the update aborts with the old replicas
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .engine import Dist, Engine, EventKind
from .errors import InsufficientNodes, InvariantViolation
from .discovery import Health, Registry
from .topology import Network

DEFAULT_TAKEOVER_DELAY_US = 2_000_000
DEFAULT_RESTART_DELAY_US = 10_000_000
DEFAULT_UPDATE_TIMEOUT_US = 5_000_000
RETRY_PLACEMENT_US = 1_000_000


class ServiceKind(Enum):
    BUSINESS = "Business"
    FOUNDATION = "Foundation"
    INFRASTRUCTURE = "Infrastructure"
    EXTERNAL_API = "ExternalAPI"
    MONOLITH_COMPONENT = "MonolithComponent"


class FailoverMode(Enum):
    ACTIVE_ACTIVE = "ActiveActive"
    ACTIVE_PASSIVE = "ActivePassive"


class PlacementRule(Enum):
    SPREAD = "Spread"
    ONE_PER_DATACENTER = "OnePerDatacenter"


class ReplicaState(Enum):
    STARTING = "Starting"
    ACTIVE = "Active"
    PASSIVE = "Passive"
    DRAINING = "Draining"
    FAILED = "Failed"

ALIVE_STATES = {ReplicaState.STARTING, ReplicaState.ACTIVE,
                ReplicaState.PASSIVE, ReplicaState.DRAINING}


@dataclass
class ServiceSpec:
    name: str
    kind: ServiceKind
    failover: FailoverMode
    replicas: int
    placement: PlacementRule
    processing_time: Dist
    version: int = 1
    consumes: Optional[str] = None        # queue this service's actives subscribe to
    behavior: str = "worker"              # workload role key
    behavior_params: dict = field(default_factory=dict)
    pin_nodes: Optional[list[str]] = None # replica i is bound to pin_nodes[i]
    active_index: int = 0                 # initial active replica for ActivePassive
    restart_delay_us: Optional[int] = None
    never_ack: bool = False               # fault-injection knob: consume but never ack

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError(f"{self.name}: replicas must be >= 1")
        if self.kind == ServiceKind.INFRASTRUCTURE and self.placement != PlacementRule.ONE_PER_DATACENTER:
            raise ValueError(f"{self.name}: infrastructure services require OnePerDatacenter placement")
        if self.kind == ServiceKind.EXTERNAL_API and self.failover != FailoverMode.ACTIVE_PASSIVE:
            raise ValueError(f"{self.name}: external API services require ActivePassive failover")
        if self.pin_nodes is not None and len(self.pin_nodes) != self.replicas:
            raise ValueError(f"{self.name}: pin_nodes length must equal replicas")


@dataclass
class Replica:
    service: str
    index: int
    node: str
    state: ReplicaState
    version: int
    home_node: Optional[str] = None   # set for pinned replicas
    in_flight: int = 0
    failure_handled: bool = False
    probe_fail: bool = False          # injected: replica never answers probes
    drain_reason: str = ""
    was_active: bool = False          # held the active role when it failed

    @property
    def id(self) -> str:
        return f"{self.service}#{self.index}"

    @property
    def alive(self) -> bool:
        return self.state in ALIVE_STATES


def place(spec: ServiceSpec, up_nodes: list[str], dc_of: dict[str, str],
          load: dict[str, int]) -> list[str]:
    """Deterministic placement. Returns one node id per replica.

    Spread: each pick minimizes (replicas of this service already on the node,
    datacenters of this service already used, total node load, node id), which
    puts replicas on distinct nodes across distinct datacenters while they
    fit, then wraps. OnePerDatacenter: the least-loaded node of every
    datacenter that has at least one up node.
    """
    if spec.pin_nodes is not None:
        return list(spec.pin_nodes)
    if not up_nodes:
        raise InsufficientNodes(f"{spec.name}: no up nodes")

    if spec.placement == PlacementRule.ONE_PER_DATACENTER:
        chosen = []
        for dc in sorted({dc_of[n] for n in up_nodes}):
            nodes = [n for n in up_nodes if dc_of[n] == dc]
            chosen.append(min(nodes, key=lambda n: (load.get(n, 0), n)))
        return chosen

    chosen = []
    mine: dict[str, int] = {}
    my_dcs: dict[str, int] = {}
    for _ in range(spec.replicas):
        node = min(up_nodes, key=lambda n: (mine.get(n, 0), my_dcs.get(dc_of[n], 0),
                                            load.get(n, 0) + mine.get(n, 0), n))
        chosen.append(node)
        mine[node] = mine.get(node, 0) + 1
        my_dcs[dc_of[node]] = my_dcs.get(dc_of[node], 0) + 1
    return chosen


@dataclass
class _UpdatePlan:
    service: str
    version: int
    viable: bool
    old_ids: list[str]
    step: int = 0
    new_replica: Optional[str] = None
    timeout_event: Optional[int] = None


class Orchestrator:
    def __init__(self, engine: Engine, network: Network, registry: Registry,
                 broker, on_change: Callable[[str], None] = lambda _s: None,
                 takeover_delay_us: int = DEFAULT_TAKEOVER_DELAY_US,
                 restart_delay_us: int = DEFAULT_RESTART_DELAY_US,
                 update_timeout_us: int = DEFAULT_UPDATE_TIMEOUT_US):
        self.engine = engine
        self.network = network
        self.registry = registry
        self.broker = broker
        self.on_change = on_change
        self.takeover_delay_us = takeover_delay_us
        self.restart_delay_us = restart_delay_us
        self.update_timeout_us = update_timeout_us

        self.specs: dict[str, ServiceSpec] = {}
        self.replicas: dict[str, Replica] = {}
        self.by_service: dict[str, list[Replica]] = {}
        self._next_index: dict[str, int] = {}
        self._lease: dict[str, Optional[str]] = {}
        self._wants_active: set[str] = set()
        self._updates: dict[str, _UpdatePlan] = {}
        self.migrations = 0
        self.update_aborts: list[str] = []
        self.on_spawn: list[Callable[[Replica], None]] = []
        self.on_replica_failed: list[Callable[[Replica], None]] = []

        registry.on_transition.append(self._on_health_transition)
        network.on_node_status.append(self._on_node_status)
        network.on_partition_change.append(self._on_partition_change)

    # -- setup ------------------------------------------------------------

    def _load(self) -> dict[str, int]:
        load: dict[str, int] = {}
        for replica in self.replicas.values():
            if replica.alive:
                load[replica.node] = load.get(replica.node, 0) + 1
        return load

    def dc_of(self) -> dict[str, str]:
        return {n.id: n.datacenter for n in self.network.nodes.values()}

    def add_service(self, spec: ServiceSpec) -> None:
        """Materialize a service: place replicas pre-warmed (the system is
        already running when the scenario starts)."""
        self.specs[spec.name] = spec
        self.registry.declare_service(spec.name)
        nodes = place(spec, self.network.up_nodes(), self.dc_of(), self._load())
        self.engine.trace("orch", "place", f"{spec.name} -> {','.join(nodes)}")
        self.by_service[spec.name] = []
        self._next_index[spec.name] = 0
        self._lease[spec.name] = None
        for i, node in enumerate(nodes):
            replica = Replica(service=spec.name, index=i, node=node,
                              state=ReplicaState.PASSIVE, version=spec.version,
                              home_node=node if spec.pin_nodes else None)
            self._next_index[spec.name] = i + 1
            self.replicas[replica.id] = replica
            self.by_service[spec.name].append(replica)
            self.registry.register(spec.name, replica.id, node, initial_healthy=True)
            for callback in self.on_spawn:
                callback(replica)
            if spec.failover == FailoverMode.ACTIVE_ACTIVE or i == spec.active_index % len(nodes):
                self._set_state(replica, ReplicaState.ACTIVE, "init")
            else:
                self._set_state(replica, ReplicaState.PASSIVE, "init")

    # -- state transitions ---------------------------------------------------

    def _set_state(self, replica: Replica, state: ReplicaState, reason: str) -> None:
        spec = self.specs[replica.service]
        if replica.state == ReplicaState.ACTIVE and state == ReplicaState.FAILED:
            replica.was_active = True
        if state == ReplicaState.ACTIVE:
            if spec.failover == FailoverMode.ACTIVE_PASSIVE:
                holder = self._lease[replica.service]
                if holder is not None and holder != replica.id:
                    raise InvariantViolation(
                        f"{replica.service}: activation of {replica.id} while lease held by {holder}")
                others = [r for r in self.by_service[replica.service]
                          if r.state == ReplicaState.ACTIVE and r.id != replica.id]
                if others:
                    raise InvariantViolation(
                        f"{replica.service}: {replica.id} and {others[0].id} active together")
                self._lease[replica.service] = replica.id
            if spec.consumes:
                self.broker.subscribe(spec.consumes, replica.id)
        else:
            if self._lease.get(replica.service) == replica.id:
                self._lease[replica.service] = None
            if spec.consumes and state in (ReplicaState.DRAINING, ReplicaState.PASSIVE):
                self.broker.unsubscribe(spec.consumes, replica.id)
        replica.state = state
        self.engine.trace("orch", "state", f"{replica.id} -> {state.value} reason={reason}")
        if state == ReplicaState.FAILED:
            for callback in self.on_replica_failed:
                callback(replica)
        self.on_change(replica.service)
        self.broker.sweep()

    # -- failure handling ------------------------------------------------------

    def kill_replica(self, service: str, index: int) -> None:
        replica = self.replicas.get(f"{service}#{index}")
        if replica is None or not replica.alive:
            self.engine.trace("orch", "state", f"{service}#{index} kill ignored (not alive)")
            return
        replica.in_flight = 0
        self._set_state(replica, ReplicaState.FAILED, "killed")

    def _on_node_status(self, node_id: str, up: bool) -> None:
        if not up:
            for replica in list(self.replicas.values()):
                if replica.node == node_id and replica.alive:
                    replica.in_flight = 0
                    self._set_state(replica, ReplicaState.FAILED, "node-down")
        else:
            self.rebalance(node_id)

    def _on_health_transition(self, service: str, replica_id: str,
                              _old: Health, new: Health, group: frozenset) -> None:
        if service not in self.specs:
            return
        if not self.registry.is_main_group(group):
            return
        replica = self.replicas.get(replica_id)
        if replica is None:
            return
        if new == Health.UNHEALTHY:
            self._handle_replica_down(replica)
        elif new == Health.HEALTHY:
            self._on_became_healthy(replica)

    def _handle_replica_down(self, replica: Replica) -> None:
        """Recovery actions, taken once per incarnation after detection."""
        if replica.failure_handled:
            return
        replica.failure_handled = True
        spec = self.specs[replica.service]
        # the active role may be held by a dead replica (was_active), a live
        # but partitioned-away one (state still Active; it demotes itself via
        # the lease path), or recorded in the lease
        was_active = (replica.was_active or replica.state == ReplicaState.ACTIVE
                      or self._lease.get(replica.service) == replica.id)
        if self._lease.get(replica.service) == replica.id:
            self._lease[replica.service] = None
        if spec.failover == FailoverMode.ACTIVE_PASSIVE and was_active:
            self.engine.trace("orch", "takeover-armed",
                              f"{replica.service} at={self.engine.now + self.takeover_delay_us}")
            self.engine.after(self.takeover_delay_us, EventKind.TAKEOVER_TIMER, replica.service,
                              {"op": "takeover", "service": replica.service})
        if replica.state == ReplicaState.FAILED:
            self._schedule_restart(replica)

    def _restart_delay(self, spec: ServiceSpec) -> int:
        return spec.restart_delay_us if spec.restart_delay_us is not None else self.restart_delay_us

    def _schedule_restart(self, replica: Replica) -> None:
        spec = self.specs[replica.service]
        if replica.home_node is not None and not self.network.nodes[replica.home_node].up:
            # pinned replica waits for its host; rebalance restarts it on restore
            self.engine.trace("orch", "restart-deferred", f"{replica.id} home={replica.home_node}")
            return
        delay = self._restart_delay(spec)
        self.engine.trace("orch", "restart-armed", f"{replica.id} at={self.engine.now + delay}")
        self.engine.after(delay, EventKind.TAKEOVER_TIMER, replica.service,
                          {"op": "restart", "service": replica.service, "index": replica.index,
                           "version": replica.version})

    def _restart_node(self, replica: Replica, spec: ServiceSpec) -> Optional[str]:
        if replica.home_node is not None:
            return replica.home_node if self.network.nodes[replica.home_node].up else None
        up = self.network.up_nodes()
        if not up:
            return None
        if spec.placement == PlacementRule.ONE_PER_DATACENTER:
            dc_of = self.dc_of()
            alive_dcs = [dc_of[r.node] for r in self.by_service[spec.name] if r.alive]
            empty = sorted({dc_of[n] for n in up} - set(alive_dcs))
            pool = [n for n in up if dc_of[n] in empty] or up
        else:
            pool = up
        load = self._load()
        return min(pool, key=lambda n: (load.get(n, 0), n))

    def _on_timer(self, event) -> None:
        payload = event.payload
        op = payload["op"]
        if op == "takeover":
            self._takeover(payload["service"])
        elif op == "restart":
            self._do_restart(payload["service"], payload["index"], payload["version"])
        elif op == "lease-demote":
            self._lease_demote(payload["replica"])
        elif op == "drain-start":
            replica = self.replicas.get(payload["replica"])
            if replica is not None and replica.alive and replica.state != ReplicaState.DRAINING:
                self._begin_drain(replica, payload["reason"])

    def _do_restart(self, service: str, index: int, version: int) -> None:
        replica = self.replicas.get(f"{service}#{index}")
        if replica is None or replica.alive:
            return  # already back some other way
        spec = self.specs[service]
        alive = [r for r in self.by_service[service] if r.alive]
        if len(alive) >= spec.replicas:
            return  # capacity already restored (e.g. by rebalance)
        node = self._restart_node(replica, spec)
        if node is None:
            self.engine.after(RETRY_PLACEMENT_US, EventKind.TAKEOVER_TIMER, service,
                              {"op": "restart", "service": service, "index": index,
                               "version": version})
            return
        self._spawn(spec, index, node, version)

    def _spawn(self, spec: ServiceSpec, index: int, node: str, version: int) -> Replica:
        replica = Replica(service=spec.name, index=index, node=node,
                          state=ReplicaState.STARTING, version=version,
                          home_node=node if spec.pin_nodes else None)
        old = self.replicas.get(replica.id)
        if old is not None and old in self.by_service[spec.name]:
            self.by_service[spec.name][self.by_service[spec.name].index(old)] = replica
        else:
            self.by_service[spec.name].append(replica)
        self.replicas[replica.id] = replica
        self.engine.trace("orch", "spawn", f"{replica.id} node={node} version={version}")
        self.registry.register(spec.name, replica.id, node)
        for callback in self.on_spawn:
            callback(replica)
        self.on_change(spec.name)
        return replica

    def _on_became_healthy(self, replica: Replica) -> None:
        spec = self.specs[replica.service]
        plan = self._updates.get(replica.service)
        if plan is not None and plan.new_replica == replica.id:
            self._update_new_healthy(plan)
            return
        if replica.state == ReplicaState.STARTING:
            if spec.failover == FailoverMode.ACTIVE_ACTIVE:
                self._set_state(replica, ReplicaState.ACTIVE, "healthy")
            else:
                self._set_state(replica, ReplicaState.PASSIVE, "healthy")
        self._activate_if_wanted(replica.service)
        self.on_change(replica.service)
        self.broker.sweep()

    def _activate_if_wanted(self, service: str) -> None:
        if service not in self._wants_active:
            return
        if any(r.state == ReplicaState.ACTIVE for r in self.by_service[service]):
            self._wants_active.discard(service)
            return
        group = self.registry.main_group()
        candidates = [r for r in self.by_service[service]
                      if r.state == ReplicaState.PASSIVE and r.node in group
                      and self.network.nodes[r.node].up
                      and self.registry.health_of(r.id, group) == Health.HEALTHY]
        if candidates:
            self._wants_active.discard(service)
            self._set_state(min(candidates, key=lambda r: r.index),
                            ReplicaState.ACTIVE, "takeover")

    def _takeover(self, service: str) -> None:
        spec = self.specs[service]
        if any(r.state == ReplicaState.ACTIVE for r in self.by_service[service]):
            return
        group = self.registry.main_group()
        candidates = [r for r in self.by_service[service]
                      if r.state == ReplicaState.PASSIVE and r.node in group
                      and self.network.nodes[r.node].up
                      and self.registry.health_of(r.id, group) == Health.HEALTHY]
        if not candidates:
            self._wants_active.add(service)
            self.engine.trace("orch", "takeover-waiting", service)
            return
        chosen = min(candidates, key=lambda r: r.index)
        self._set_state(chosen, ReplicaState.ACTIVE, "takeover")

    def _lease_demote(self, replica_id: str) -> None:
        replica = self.replicas.get(replica_id)
        if replica is None or replica.state != ReplicaState.ACTIVE:
            return
        if replica.node in self.registry.main_group():
            return  # reachable again; lease re-confirmed
        self._set_state(replica, ReplicaState.PASSIVE, "lease-lost")

    def _on_partition_change(self, partition) -> None:
        if not partition.partitioned:
            self._prune_excess()
            return
        main = self.registry.main_group()
        for service, spec in self.specs.items():
            if spec.failover != FailoverMode.ACTIVE_PASSIVE:
                continue
            for replica in self.by_service[service]:
                if replica.state == ReplicaState.ACTIVE and replica.node not in main:
                    # cannot re-confirm its lease from the minority side
                    self.engine.after(self.registry.config.interval_us,
                                      EventKind.TAKEOVER_TIMER, service,
                                      {"op": "lease-demote", "replica": replica.id})

    def _prune_excess(self) -> None:
        for service, spec in self.specs.items():
            alive = [r for r in self.by_service[service] if r.alive]
            excess = len(alive) - spec.replicas
            if excess <= 0:
                continue
            removable = sorted((r for r in alive if r.state != ReplicaState.ACTIVE),
                               key=lambda r: -r.index)
            for replica in removable[:excess]:
                self._begin_drain(replica, "excess")

    # -- draining ---------------------------------------------------------------

    def _begin_drain(self, replica: Replica, reason: str) -> None:
        replica.drain_reason = reason
        self._set_state(replica, ReplicaState.DRAINING, reason)
        if replica.in_flight == 0:
            self._drained(replica)

    def notify_idle(self, replica_id: str) -> None:
        replica = self.replicas.get(replica_id)
        if replica is not None and replica.state == ReplicaState.DRAINING and replica.in_flight == 0:
            self._drained(replica)

    def _drained(self, replica: Replica) -> None:
        spec = self.specs[replica.service]
        self.registry.deregister(replica.service, replica.id)
        if spec.consumes:
            self.broker.unsubscribe(spec.consumes, replica.id)
        self._set_state(replica, ReplicaState.FAILED, f"drained-{replica.drain_reason}")
        if replica in self.by_service[replica.service]:
            self.by_service[replica.service].remove(replica)
        self.replicas.pop(replica.id, None)
        plan = self._updates.get(replica.service)
        if plan is not None and replica.id in plan.old_ids:
            plan.old_ids.remove(replica.id)
            self._update_next_step(plan)
        elif replica.drain_reason == "migrate":
            self._migrate_spawn(spec)
        self._activate_if_wanted(replica.service)

    # -- rolling updates -----------------------------------------------------------

    def rolling_update(self, service: str, version: int, viable: bool = True) -> None:
        spec = self.specs[service]
        if service in self._updates:
            self.engine.trace("orch", "update-ignored", f"{service} already updating")
            return
        old_ids = [r.id for r in self.by_service[service] if r.alive]
        if not old_ids:
            self.engine.trace("orch", "update-ignored", f"{service} has no replicas")
            return
        self.engine.trace("orch", "update", f"{service} -> v{version} begin")
        plan = _UpdatePlan(service=service, version=version, viable=viable, old_ids=old_ids)
        self._updates[service] = plan
        self._update_spawn_next(plan)

    def _update_spawn_next(self, plan: _UpdatePlan) -> None:
        spec = self.specs[plan.service]
        old = self.replicas[plan.old_ids[plan.step]]
        index = self._next_index[plan.service]
        self._next_index[plan.service] += 1
        node = old.node if self.network.nodes[old.node].up else self._restart_node(old, spec)
        replica = self._spawn(spec, index, node or old.node, plan.version)
        replica.probe_fail = not plan.viable
        plan.new_replica = replica.id
        self.engine.trace("orch", "update-step",
                          f"{plan.service} old={plan.old_ids[plan.step]} new={replica.id}")
        plan.timeout_event = self.engine.after(
            self.update_timeout_us, EventKind.UPDATE_STEP, plan.service,
            {"op": "update-timeout", "service": plan.service, "new": replica.id})

    def _update_new_healthy(self, plan: _UpdatePlan) -> None:
        spec = self.specs[plan.service]
        new = self.replicas[plan.new_replica]
        if plan.timeout_event is not None:
            self.engine.cancel(plan.timeout_event)
            plan.timeout_event = None
        old = self.replicas.get(plan.old_ids[plan.step])
        if spec.failover == FailoverMode.ACTIVE_ACTIVE:
            self._set_state(new, ReplicaState.ACTIVE, "update")
        else:
            self._set_state(new, ReplicaState.PASSIVE, "update")
            if old is not None and old.state == ReplicaState.ACTIVE:
                self._wants_active.add(plan.service)
        if old is not None and old.alive:
            self._begin_drain(old, "replaced")
        else:
            plan.old_ids.remove(plan.old_ids[plan.step])
            self._update_next_step(plan)

    def _update_next_step(self, plan: _UpdatePlan) -> None:
        if plan.step >= len(plan.old_ids):
            self.specs[plan.service].version = plan.version
            self._updates.pop(plan.service, None)
            self.engine.trace("orch", "update-done", f"{plan.service} v{plan.version}")
            return
        self._update_spawn_next(plan)

    def on_update_step(self, event) -> None:
        payload = event.payload
        if payload["op"] != "update-timeout":
            return
        plan = self._updates.get(payload["service"])
        if plan is None or plan.new_replica != payload["new"]:
            return
        group = self.registry.main_group()
        if self.registry.health_of(plan.new_replica, group) == Health.HEALTHY:
            return
        # the new version never became healthy: abort, old replicas untouched
        new = self.replicas.get(plan.new_replica)
        if new is not None:
            self.registry.deregister(plan.service, new.id)
            self._set_state(new, ReplicaState.FAILED, "update-aborted")
            if new in self.by_service[plan.service]:
                self.by_service[plan.service].remove(new)
            self.replicas.pop(new.id, None)
        self._updates.pop(plan.service, None)
        self.update_aborts.append(plan.service)
        self.engine.trace("orch", "update-aborted", f"{plan.service} new={payload['new']}")

    # -- rebalancing ------------------------------------------------------------------

    def rebalance(self, node_id: str) -> None:
        """Restore placement rules after a node (re)joins; minimal moves."""
        moves = 0
        dc_of = self.dc_of()
        for service, spec in self.specs.items():
            # pinned replicas restart on their restored home
            for replica in self.by_service[service]:
                if (replica.home_node == node_id and not replica.alive):
                    self._schedule_restart(replica)
                    moves += 1
        for service, spec in self.specs.items():
            if spec.pin_nodes is not None:
                continue
            alive = [r for r in self.by_service[service] if r.alive]
            if spec.placement == PlacementRule.ONE_PER_DATACENTER:
                covered = {dc_of[r.node] for r in alive}
                up_dcs = {dc_of[n] for n in self.network.up_nodes()}
                if dc_of[node_id] in up_dcs - covered and len(alive) >= spec.replicas:
                    donor_dcs: dict[str, list[Replica]] = {}
                    for replica in alive:
                        donor_dcs.setdefault(dc_of[replica.node], []).append(replica)
                    crowded = max(donor_dcs.values(), key=len)
                    if len(crowded) > 1:
                        donor = max(crowded, key=lambda r: r.index)
                        self._begin_drain(donor, "migrate")
                        moves += 1
            else:
                per_node: dict[str, list[Replica]] = {}
                for replica in alive:
                    per_node.setdefault(replica.node, []).append(replica)
                if len(alive) <= len(self.network.up_nodes()):
                    crowded = [rs for rs in per_node.values() if len(rs) > 1]
                    for rs in crowded:
                        donor = max(rs, key=lambda r: r.index)
                        self._begin_drain(donor, "migrate")
                        moves += 1
        if moves:
            self.migrations += moves
            self.engine.trace("orch", "rebalance", f"node={node_id} moves={moves}")

    def _migrate_spawn(self, spec: ServiceSpec) -> None:
        index = self._next_index[spec.name]
        self._next_index[spec.name] += 1
        fake = Replica(service=spec.name, index=index, node="", state=ReplicaState.FAILED,
                       version=spec.version)
        node = self._restart_node(fake, spec)
        if node is None:
            return
        self._spawn(spec, index, node, spec.version)

    # -- helpers -----------------------------------------------------------------------

    def active_replicas(self, service: str) -> list[Replica]:
        return [r for r in self.by_service.get(service, []) if r.state == ReplicaState.ACTIVE]

    def replica_alive(self, replica_id: str) -> bool:
        replica = self.replicas.get(replica_id)
        return replica is not None and replica.alive and not replica.probe_fail \
            and self.network.nodes[replica.node].up

    def consumer_state(self, replica_id: str, group: frozenset) -> tuple[str, bool]:
        replica = self.replicas.get(replica_id)
        if replica is None:
            return ("", False)
        if not group:
            return (replica.node, False)
        healthy = self.registry.health_of(replica_id, group) != Health.UNHEALTHY
        return (replica.node, healthy)

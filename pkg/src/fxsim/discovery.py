"""Service registry with health probing and pluggable name resolution.

Instances are probed once per interval with a real network round-trip from a
registry anchor node; consecutive misses demote them (Healthy -> Suspect ->
Unhealthy at failure_threshold) and consecutive successes promote them back
(recovery_threshold, or immediately on an instance's first-ever success so
that freshly started replicas become resolvable as soon as they respond).
Unhealthy instances are never returned by resolve.

During a network partition each group keeps its own consistent health view of
every instance: instances on the far side miss probes and go Unhealthy in
that view. On heal the view of the group with the most up nodes wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .engine import Engine, EventKind
from .errors import NoHealthyInstance, UnknownService
from .topology import DROPPED, Network

DEFAULT_PROBE_INTERVAL_US = 1_000_000
DEFAULT_FAILURE_THRESHOLD = 2
DEFAULT_RECOVERY_THRESHOLD = 2


class Health(Enum):
    HEALTHY = "Healthy"
    SUSPECT = "Suspect"
    UNHEALTHY = "Unhealthy"


class Policy(Enum):
    ROUND_ROBIN = "RoundRobin"
    PROXIMITY = "Proximity"
    LEAST_BUSY = "LeastBusy"


@dataclass
class HealthProbeConfig:
    interval_us: int = DEFAULT_PROBE_INTERVAL_US
    failure_threshold: int = DEFAULT_FAILURE_THRESHOLD
    recovery_threshold: int = DEFAULT_RECOVERY_THRESHOLD

    def __post_init__(self):
        if self.failure_threshold < 1 or self.recovery_threshold < 1:
            raise ValueError("health thresholds must be >= 1")


@dataclass
class _Instance:
    replica_id: str
    node_id: str


@dataclass
class _HealthState:
    health: Health
    consecutive_ok: int = 0
    consecutive_fail: int = 0
    never_succeeded: bool = True

    def copy(self) -> "_HealthState":
        return _HealthState(self.health, self.consecutive_ok,
                            self.consecutive_fail, self.never_succeeded)


@dataclass
class RegistryEntry:
    name: str
    policy: Policy
    instances: list[_Instance] = field(default_factory=list)


class Registry:
    def __init__(self, engine: Engine, network: Network,
                 probe_config: Optional[HealthProbeConfig] = None,
                 replica_alive: Callable[[str], bool] = lambda _r: True,
                 in_flight: Callable[[str], int] = lambda _r: 0):
        self.engine = engine
        self.network = network
        self.config = probe_config or HealthProbeConfig()
        self.replica_alive = replica_alive
        self.in_flight = in_flight
        self.services: dict[str, RegistryEntry] = {}
        whole = frozenset(network.nodes)
        # health views: partition group -> replica id -> health state
        self.views: dict[frozenset, dict[str, _HealthState]] = {whole: {}}
        self._cursors: dict[tuple[str, frozenset], int] = {}
        # fn(service, replica, old, new, group) on every health transition
        self.on_transition: list[Callable[[str, str, Health, Health, frozenset], None]] = []
        network.on_partition_change.append(self._on_partition_change)

    # -- registration -----------------------------------------------------

    def declare_service(self, name: str, policy: Policy = Policy.ROUND_ROBIN) -> None:
        if name not in self.services:
            self.services[name] = RegistryEntry(name=name, policy=policy)

    def entry(self, service: str) -> RegistryEntry:
        try:
            return self.services[service]
        except KeyError:
            raise UnknownService(service) from None

    def register(self, service: str, replica_id: str, node_id: str,
                 initial_healthy: bool = False) -> None:
        entry = self.entry(service)
        if any(i.replica_id == replica_id for i in entry.instances):
            return  # idempotent
        entry.instances.append(_Instance(replica_id=replica_id, node_id=node_id))
        for states in self.views.values():
            if initial_healthy:
                states[replica_id] = _HealthState(Health.HEALTHY, never_succeeded=False)
            else:
                states[replica_id] = _HealthState(Health.SUSPECT)

    def deregister(self, service: str, replica_id: str) -> None:
        entry = self.entry(service)
        entry.instances = [i for i in entry.instances if i.replica_id != replica_id]
        for states in self.views.values():
            states.pop(replica_id, None)

    # -- health probing ------------------------------------------------------

    def schedule_probes(self) -> None:
        for name in self.services:
            self.engine.schedule(self.engine.now, EventKind.HEALTH_PROBE, name)

    def on_probe_tick(self, event) -> None:
        service = event.target
        if service not in self.services:
            return
        self.probe_tick(service)
        self.engine.after(self.config.interval_us, EventKind.HEALTH_PROBE, service)

    def probe_tick(self, service: str) -> None:
        entry = self.entry(service)
        for group in list(self.views):
            anchor = self._anchor(group)
            for instance in list(entry.instances):
                self._probe_instance(service, group, anchor, instance)

    def _anchor(self, group: frozenset) -> Optional[str]:
        candidates = sorted(n for n in group if self.network.nodes[n].up)
        return candidates[0] if candidates else None

    def _probe_instance(self, service: str, group: frozenset,
                        anchor: Optional[str], instance: _Instance) -> None:
        replica, node = instance.replica_id, instance.node_id
        if anchor is None or node not in group or not self.network.nodes[node].up:
            self._record(service, group, replica, ok=False)
            return

        def misses() -> None:
            self._record(service, group, replica, ok=False)

        def request_arrived() -> None:
            if not self.replica_alive(replica):
                self._record(service, group, replica, ok=False)
                return
            self.network.deliver(node, anchor, f"probe-echo:{replica}",
                                 on_arrive=lambda: self._record(service, group, replica, ok=True),
                                 on_drop=misses)

        result = self.network.deliver(anchor, node, f"probe:{replica}",
                                      on_arrive=request_arrived, on_drop=None)
        if result == DROPPED:
            misses()

    def _record(self, service: str, group: frozenset, replica: str, ok: bool) -> None:
        states = self.views.get(group)
        if states is None or replica not in states:
            return  # view replaced or instance deregistered while probe in flight
        state = states[replica]
        old = state.health
        if ok:
            state.consecutive_fail = 0
            state.consecutive_ok += 1
            promote = state.never_succeeded or state.consecutive_ok >= self.config.recovery_threshold
            state.never_succeeded = False
            if state.health != Health.HEALTHY and promote:
                state.health = Health.HEALTHY
        else:
            state.consecutive_ok = 0
            state.consecutive_fail += 1
            if state.health == Health.HEALTHY:
                state.health = Health.SUSPECT
            if state.consecutive_fail >= self.config.failure_threshold:
                state.health = Health.UNHEALTHY
        if state.health != old:
            self.engine.trace("registry", "health", f"{replica} -> {state.health.value}")
            for callback in self.on_transition:
                callback(service, replica, old, state.health, group)

    # -- resolution -------------------------------------------------------------

    def health_of(self, replica_id: str, group: Optional[frozenset] = None) -> Health:
        states = self.views.get(group) if group is not None else None
        if states is None:
            states = self.views[self.main_group()]
        state = states.get(replica_id)
        return state.health if state else Health.UNHEALTHY

    def main_group(self) -> frozenset:
        best = None
        for group in self.views:
            ups = sum(1 for n in group if self.network.nodes[n].up)
            key = (ups, len(group))
            if best is None or key > best[0]:
                best = (key, group)
        return best[1]

    def is_main_group(self, group: frozenset) -> bool:
        return group == self.main_group()

    def _group_of(self, node_id: str) -> Optional[frozenset]:
        for group in self.views:
            if node_id in group:
                return group
        return None

    def healthy_instances(self, service: str, group: frozenset) -> list[_Instance]:
        entry = self.entry(service)
        states = self.views.get(group, {})
        result = []
        for instance in entry.instances:
            state = states.get(instance.replica_id)
            if (state is not None and state.health == Health.HEALTHY
                    and instance.node_id in group
                    and self.network.nodes[instance.node_id].up):
                result.append(instance)
        return result

    def resolve(self, service: str, requester_node: str) -> str:
        """Pick a healthy instance reachable from the requester per the service policy."""
        entry = self.entry(service)
        group = self._group_of(requester_node)
        if group is None:
            raise NoHealthyInstance(f"{service}: requester {requester_node} is isolated")
        candidates = self.healthy_instances(service, group)
        if not candidates:
            raise NoHealthyInstance(service)

        if entry.policy == Policy.PROXIMITY:
            requester_dc = self.network.nodes[requester_node].datacenter

            def rank(instance: _Instance) -> int:
                if instance.node_id == requester_node:
                    return 0
                if self.network.nodes[instance.node_id].datacenter == requester_dc:
                    return 1
                return 2

            best = min(rank(i) for i in candidates)
            candidates = [i for i in candidates if rank(i) == best]
        elif entry.policy == Policy.LEAST_BUSY:
            busiest = {i.replica_id: self.in_flight(i.replica_id) for i in candidates}
            least = min(busiest.values())
            candidates = [i for i in candidates if busiest[i.replica_id] == least]

        cursor_key = (service, group)
        cursor = self._cursors.get(cursor_key, 0)
        chosen = candidates[cursor % len(candidates)]
        self._cursors[cursor_key] = cursor + 1
        self.engine.trace("registry", "resolve",
                          f"{service} from={requester_node} -> {chosen.replica_id} "
                          f"policy={entry.policy.value}")
        return chosen.replica_id

    # -- partitions ---------------------------------------------------------------

    def _on_partition_change(self, partition) -> None:
        if partition.partitioned:
            source = self.views[self.main_group()]
            old_cursors = dict(self._cursors)
            self.views = {group: {r: s.copy() for r, s in source.items()}
                          for group in partition.groups}
            self._cursors = {}
            for (service, _old_group), value in old_cursors.items():
                for group in partition.groups:
                    self._cursors.setdefault((service, group), value)
        else:
            survivor = self.views[self.main_group()]
            old_cursors = dict(self._cursors)
            whole = frozenset(self.network.nodes)
            self.views = {whole: survivor}
            merged: dict[tuple[str, frozenset], int] = {}
            for (service, _group), value in old_cursors.items():
                key = (service, whole)
                merged[key] = max(merged.get(key, 0), value)
            self._cursors = merged


def single_service_illusion_check(requests, service: str) -> bool:
    """True iff every request that entered the system and needed the service
    got a response, no matter which replica served any leg of it."""
    for request in requests:
        if not request.hops:
            continue  # never entered the system
        if service in request.required_services and request.outcome != "Completed":
            return False
    return True

"""Datacenters, hosts, link latencies, work slots and network partitions.

The network is the substrate every other component talks through. Deliveries
draw their latency from the intra-DC or inter-DC distribution depending on
the endpoints' datacenters; a delivery between nodes in different partition
groups, or touching a down node, is dropped and recorded in the trace.
Messages already in flight when a partition starts (or when a node dies) are
dropped rather than delayed; at-least-once delivery upstream recovers them.

Each node also exposes a bounded pool of work slots: processing submitted to
a busy node waits FIFO until a slot frees up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .engine import Dist, Engine, EventKind, SimTime
from .errors import InvalidPartition, UnknownNode

DROPPED = "dropped"  # sentinel returned by deliver() when the message cannot cross


@dataclass
class Datacenter:
    id: str
    node_ids: list[str] = field(default_factory=list)


@dataclass
class Node:
    id: str
    datacenter: str
    capacity: int = 8
    up: bool = True
    # work-slot state
    in_use: int = 0
    waiting: list[tuple[int, Any]] = field(default_factory=list)  # FIFO of (duration, on_done)
    running: set[int] = field(default_factory=set)  # pending ProcessingDone event ids


@dataclass
class LatencyModel:
    intra_dc: Dist
    inter_dc: Dist
    mainframe_call: Dist

    def validate(self) -> None:
        if self.inter_dc.mean() < self.intra_dc.mean():
            raise ValueError("inter-DC latency mean must be >= intra-DC latency mean")


@dataclass
class PartitionState:
    groups: list[frozenset[str]]

    @property
    def partitioned(self) -> bool:
        return len(self.groups) > 1

    def group_of(self, node_id: str) -> Optional[frozenset[str]]:
        for group in self.groups:
            if node_id in group:
                return group
        return None


class Network:
    """Topology state machine: node status, partitions, deliveries, work slots."""

    def __init__(self, engine: Engine, datacenters: list[Datacenter],
                 nodes: list[Node], latency: LatencyModel):
        self.engine = engine
        self.datacenters = {dc.id: dc for dc in datacenters}
        self.nodes = {n.id: n for n in nodes}
        latency.validate()
        self.latency = latency
        self.partition = PartitionState(groups=[frozenset(self.nodes)])
        self.cross_dc_messages = 0
        # in-flight deliveries: event id -> (src, dst, tag, on_drop)
        self._inflight: dict[int, tuple[str, str, str, Optional[Callable[[], None]]]] = {}
        self.on_partition_change: list[Callable[[PartitionState], None]] = []
        self.on_node_status: list[Callable[[str, bool], None]] = []

    # -- lookups ---------------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def up_nodes(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.up]

    def reachable(self, a: str, b: str) -> bool:
        """Deliverability is symmetric: same partition group and both nodes up."""
        na, nb = self.node(a), self.node(b)
        if not (na.up and nb.up):
            return False
        return self.partition.group_of(a) == self.partition.group_of(b)

    def latency_between(self, a: str, b: str) -> int:
        if a == b:
            return 0
        same_dc = self.node(a).datacenter == self.node(b).datacenter
        dist = self.latency.intra_dc if same_dc else self.latency.inter_dc
        return self.engine.rand_draw("net", dist)

    def is_cross_dc(self, a: str, b: str) -> bool:
        return self.node(a).datacenter != self.node(b).datacenter

    # -- delivery ----------------------------------------------------------

    def deliver(self, src: str, dst: str, tag: str,
                on_arrive: Callable[[], None],
                on_drop: Optional[Callable[[], None]] = None):
        """Schedule an arrival at dst, or drop if unreachable.

        Returns the scheduled event id, or DROPPED (after tracing the drop and
        invoking on_drop synchronously).
        """
        self.node(src), self.node(dst)  # raise UnknownNode early
        if not self.reachable(src, dst):
            reason = "partition" if (self.node(src).up and self.node(dst).up) else "node-down"
            self.engine.trace("net", "drop", f"{src}->{dst} {tag} reason={reason}")
            if on_drop is not None:
                on_drop()
            return DROPPED
        lat = self.latency_between(src, dst)
        if self.is_cross_dc(src, dst):
            self.cross_dc_messages += 1
        self.engine.trace("net", "deliver", f"{src}->{dst} {tag} us={lat}")
        payload = {"on_arrive": on_arrive, "tag": tag}
        event_id = self.engine.after(lat, EventKind.MESSAGE_DELIVERY, dst, payload)
        self._inflight[event_id] = (src, dst, tag, on_drop)
        return event_id

    def count_logical_call(self, src: str, dst: str, tag: str, extra_us: int = 0) -> int:
        """Account for a request/response pair modelled as inline latency.

        Used for infrastructure calls whose processing is folded into the
        caller's stage duration. Counts two messages against cross-DC traffic
        when the endpoints sit in different datacenters and returns the
        round-trip latency.
        """
        rtt = self.latency_between(src, dst) + self.latency_between(dst, src)
        if self.is_cross_dc(src, dst):
            self.cross_dc_messages += 2
        self.engine.trace("net", "call", f"{src}->{dst} {tag} us={rtt + extra_us}")
        return rtt + extra_us

    def on_delivery_event(self, event) -> None:
        """MESSAGE_DELIVERY handler: hand the payload to its arrival callback."""
        self._inflight.pop(event.seq, None)
        event.payload["on_arrive"]()

    def _drop_inflight(self, predicate: Callable[[str, str], bool], reason: str) -> None:
        doomed = [eid for eid, (src, dst, _tag, _cb) in self._inflight.items()
                  if predicate(src, dst)]
        for eid in doomed:
            src, dst, tag, on_drop = self._inflight.pop(eid)
            self.engine.cancel(eid)
            self.engine.trace("net", "drop", f"{src}->{dst} {tag} reason={reason}")
            if on_drop is not None:
                on_drop()

    # -- partitions --------------------------------------------------------

    def apply_partition(self, groups: list[set[str]]) -> PartitionState:
        if self.partition.partitioned:
            raise InvalidPartition("already partitioned; heal first")
        seen: set[str] = set()
        for group in groups:
            for node_id in group:
                self.node(node_id)
                if node_id in seen:
                    raise InvalidPartition(f"node {node_id} appears in two groups")
                seen.add(node_id)
        missing = [n for n in self.up_nodes() if n not in seen]
        if missing:
            raise InvalidPartition(f"groups omit up nodes: {sorted(missing)}")
        self.partition = PartitionState(groups=[frozenset(g) for g in groups])
        self.engine.trace("net", "partition",
                          " ".join("{" + ",".join(sorted(g)) + "}" for g in self.partition.groups))
        self._drop_inflight(lambda s, d: self.partition.group_of(s) != self.partition.group_of(d),
                            "partition")
        for callback in self.on_partition_change:
            callback(self.partition)
        return self.partition

    def heal(self) -> PartitionState:
        if not self.partition.partitioned:
            raise InvalidPartition("not partitioned")
        self.partition = PartitionState(groups=[frozenset(self.nodes)])
        self.engine.trace("net", "heal", "single group restored")
        for callback in self.on_partition_change:
            callback(self.partition)
        return self.partition

    # -- node status ---------------------------------------------------------

    def set_node_status(self, node_id: str, up: bool) -> None:
        node = self.node(node_id)
        if node.up == up:
            self.engine.trace("net", "node", f"{node_id} already {'Up' if up else 'Down'}")
            return
        node.up = up
        self.engine.trace("net", "node", f"{node_id} -> {'Up' if up else 'Down'}")
        if not up:
            # in-flight work on the node is lost
            for eid in sorted(node.running):
                self.engine.cancel(eid)
            node.running.clear()
            node.waiting.clear()
            node.in_use = 0
            self._drop_inflight(lambda s, d: s == node_id or d == node_id, "node-down")
        for callback in self.on_node_status:
            callback(node_id, up)

    # -- work slots ------------------------------------------------------------

    def submit_work(self, node_id: str, duration: int, on_done: Callable[[], None]) -> None:
        """Run on_done after duration on the node, honouring its slot capacity."""
        node = self.node(node_id)
        if not node.up:
            return  # silently lost; recovery is the caller's concern
        if node.in_use < node.capacity:
            self._start_work(node, duration, on_done)
        else:
            node.waiting.append((duration, on_done))

    def _start_work(self, node: Node, duration: int, on_done: Callable[[], None]) -> None:
        node.in_use += 1

        def complete() -> None:
            node.running.discard(eid)
            node.in_use -= 1
            on_done()
            if node.waiting and node.in_use < node.capacity:
                next_duration, next_done = node.waiting.pop(0)
                self._start_work(node, next_duration, next_done)

        eid = self.engine.after(duration, EventKind.PROCESSING_DONE, node.id,
                                {"on_arrive": complete})
        node.running.add(eid)

    def on_processing_done(self, event) -> None:
        event.payload["on_arrive"]()

"""Clustered message broker state machine.

Implements exchange/queue/binding routing, round-robin dispatch to the live
consumers of a queue, acknowledgement deadlines with bounded redelivery, a
terminal error queue, broadcast fan-out, and an availability-preferring
partition mode: while the network is split, every partition group that holds
at least one cluster member keeps accepting publishes and dispatching to the
consumers it can reach, and on heal the minority groups' queue contents are
re-enqueued into the merged queues. Duplicates are possible, loss is not.

Consumer liveness is judged through the health registry, not ground truth:
a consumer that just died keeps receiving messages until health detection
marks it unhealthy; those deliveries are recovered by the ack-timeout path.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

from .engine import Engine, EventKind, SimTime
from .errors import BrokerUnreachable, DeclarationConflict, InvariantViolation, UnknownEntity
from .topology import Network

DEFAULT_ACK_TIMEOUT_US = 5_000_000
DEFAULT_MAX_REDELIVERIES = 3

ERROR_QUEUE = "errors"


class PayloadKind(Enum):
    TRADE_REQUEST = "TradeRequest"
    LINE_CHECK_REQUEST = "LineCheckRequest"
    RESPONSE = "Response"
    LOG_RECORD = "LogRecord"
    METRIC_SAMPLE = "MetricSample"


class QueueMode(Enum):
    LOAD_BALANCED = "LoadBalanced"
    BROADCAST = "Broadcast"


@dataclass
class Message:
    id: str
    routing_key: str
    payload_kind: PayloadKind
    published_at: SimTime
    delivery_count: int = 0
    meta: dict = field(default_factory=dict)
    last_consumer: Optional[str] = None


@dataclass(frozen=True)
class Binding:
    exchange: str
    queue: str
    pattern: str  # literal key, or "prefix.*" matching keys that start with "prefix."

    def matches(self, key: str) -> bool:
        if self.pattern.endswith(".*"):
            return key.startswith(self.pattern[:-1])
        return key == self.pattern


@dataclass
class QueueConfig:
    name: str
    mode: QueueMode


@dataclass
class _QueueState:
    pending: deque = field(default_factory=deque)
    # msg id -> (consumer replica id, deadline event id, message copy)
    unacked: dict = field(default_factory=dict)
    cursor: int = 0


@dataclass
class Island:
    """Runtime broker state visible to one partition group."""

    group: frozenset
    queues: dict[str, _QueueState] = field(default_factory=dict)

    def queue(self, name: str) -> _QueueState:
        if name not in self.queues:
            self.queues[name] = _QueueState()
        return self.queues[name]


# consumer_state(replica_id, group) -> (node_id, live) judged by the health registry
ConsumerStateFn = Callable[[str, frozenset], tuple[str, bool]]
# deliver_cb(replica_id, queue, message) invoked when a dispatched message arrives
DeliverFn = Callable[[str, str, Message], None]


class Broker:
    def __init__(self, engine: Engine, network: Network, members: list[str],
                 consumer_state: ConsumerStateFn, deliver_cb: DeliverFn,
                 ack_timeout_us: int = DEFAULT_ACK_TIMEOUT_US,
                 max_redeliveries: int = DEFAULT_MAX_REDELIVERIES):
        self.engine = engine
        self.network = network
        self.members = list(members)
        self.consumer_state = consumer_state
        self.deliver_cb = deliver_cb
        self.ack_timeout_us = ack_timeout_us
        self.max_redeliveries = max_redeliveries

        self.exchanges: dict[str, list[Binding]] = {}
        self.queue_configs: dict[str, QueueConfig] = {}
        self.consumers: dict[str, list[str]] = {}  # queue -> ordered replica ids

        self.islands: list[Island] = [Island(group=frozenset(network.nodes))]

        # run-global delivery ledger
        self._msg_counter = 0
        self.last_message_id = ""
        self.published: set[str] = set()
        self.acked: set[str] = set()
        self.process_counts: Counter = Counter()  # (msg id, queue) -> completions
        self.error_entries: list[tuple[str, str, str]] = []  # (msg id, queue, reason)
        self.reenqueued_processed = 0
        self.on_error: list[Callable[[str, str, str], None]] = []

        network.on_partition_change.append(self._on_partition_change)

    # -- declarations -----------------------------------------------------

    def declare_exchange(self, name: str) -> None:
        self.exchanges.setdefault(name, [])

    def declare_queue(self, name: str, mode: QueueMode = QueueMode.LOAD_BALANCED) -> None:
        existing = self.queue_configs.get(name)
        if existing is not None:
            if existing.mode != mode:
                raise DeclarationConflict(f"queue {name} already declared with mode {existing.mode.value}")
            return
        self.queue_configs[name] = QueueConfig(name=name, mode=mode)
        self.consumers[name] = []

    def bind(self, exchange: str, queue: str, pattern: str) -> None:
        if exchange not in self.exchanges:
            raise UnknownEntity(f"exchange {exchange}")
        if queue not in self.queue_configs:
            raise UnknownEntity(f"queue {queue}")
        binding = Binding(exchange=exchange, queue=queue, pattern=pattern)
        if binding not in self.exchanges[exchange]:
            self.exchanges[exchange].append(binding)

    def subscribe(self, queue: str, replica_id: str) -> None:
        if queue not in self.queue_configs:
            raise UnknownEntity(f"queue {queue}")
        if replica_id not in self.consumers[queue]:
            self.consumers[queue].append(replica_id)
        self._try_dispatch_queue_everywhere(queue)

    def unsubscribe(self, queue: str, replica_id: str) -> None:
        if replica_id in self.consumers.get(queue, []):
            self.consumers[queue].remove(replica_id)

    # -- publish ------------------------------------------------------------

    def _island_of_node(self, node_id: str) -> Optional[Island]:
        for island in self.islands:
            if node_id in island.group:
                return island
        return None

    def _up_members(self, island: Island) -> list[str]:
        return [m for m in self.members
                if m in island.group and self.network.nodes[m].up]

    def publish(self, exchange: str, routing_key: str, payload_kind: PayloadKind,
                publisher_node: str, meta: Optional[dict] = None) -> list[str]:
        """Route a message; returns the queue names it matched."""
        if exchange not in self.exchanges:
            raise UnknownEntity(f"exchange {exchange}")
        island = self._island_of_node(publisher_node)
        if island is None or not self._up_members(island):
            raise BrokerUnreachable(f"no broker member reachable from {publisher_node}")

        self._msg_counter += 1
        message = Message(id=f"m{self._msg_counter}", routing_key=routing_key,
                          payload_kind=payload_kind, published_at=self.engine.now,
                          meta=dict(meta or {}))
        self.last_message_id = message.id
        matched = list(dict.fromkeys(
            b.queue for b in self.exchanges[exchange] if b.matches(routing_key)))
        self.published.add(message.id)

        if not matched:
            self._to_error_queue(message.id, "-", "Unroutable")
            self.engine.trace("broker", "publish",
                              f"{message.id} key={routing_key} -> error-queue reason=Unroutable")
            return []

        self.engine.trace("broker", "publish",
                          f"{message.id} key={routing_key} -> {','.join(matched)}")
        for queue_name in matched:
            copy = replace(message, meta=dict(message.meta))
            if self.queue_configs[queue_name].mode == QueueMode.BROADCAST:
                self._fan_out(island, queue_name, copy)
            else:
                island.queue(queue_name).pending.append(copy)
                self._try_dispatch(island, queue_name)
        return matched

    def _fan_out(self, island: Island, queue_name: str, message: Message) -> None:
        # broadcast is fire-and-forget: auto-acked at publish, no redelivery
        self.acked.add(message.id)
        for replica_id in self._live_consumers(island, queue_name):
            node_id, _ = self.consumer_state(replica_id, island.group)
            anchor = self._anchor_for(island, node_id)
            if anchor is None:
                continue
            copy = replace(message, meta=dict(message.meta), delivery_count=1)
            self.engine.trace("broker", "fanout", f"{queue_name} {message.id} -> {replica_id}")
            self.network.deliver(
                anchor, node_id, f"msg:{message.id}",
                on_arrive=self._make_arrival(replica_id, queue_name, copy))

    # -- dispatch ----------------------------------------------------------

    def _live_consumers(self, island: Island, queue_name: str) -> list[str]:
        live = []
        for replica_id in self.consumers.get(queue_name, []):
            node_id, healthy = self.consumer_state(replica_id, island.group)
            if healthy and node_id in island.group:
                live.append(replica_id)
        return live

    def _anchor_for(self, island: Island, consumer_node: str) -> Optional[str]:
        """Closest up cluster member to the consumer within the island."""
        candidates = self._up_members(island)
        if not candidates:
            return None
        consumer_dc = self.network.nodes[consumer_node].datacenter

        def rank(member: str) -> tuple[int, str]:
            if member == consumer_node:
                return (0, member)
            if self.network.nodes[member].datacenter == consumer_dc:
                return (1, member)
            return (2, member)

        return min(candidates, key=rank)

    def _make_arrival(self, replica_id: str, queue_name: str, message: Message):
        def arrive() -> None:
            self.deliver_cb(replica_id, queue_name, message)
        return arrive

    def _try_dispatch(self, island: Island, queue_name: str) -> None:
        if self.queue_configs[queue_name].mode != QueueMode.LOAD_BALANCED:
            return
        state = island.queue(queue_name)
        while state.pending:
            live = self._live_consumers(island, queue_name)
            if not live:
                return
            message: Message = state.pending[0]
            chosen = live[state.cursor % len(live)]
            state.cursor += 1
            if chosen == message.last_consumer and len(live) > 1:
                chosen = live[state.cursor % len(live)]
                state.cursor += 1
            node_id, _ = self.consumer_state(chosen, island.group)
            anchor = self._anchor_for(island, node_id)
            if anchor is None:
                return  # no up member to serve from; wait
            state.pending.popleft()
            message.delivery_count += 1
            message.last_consumer = chosen
            deadline = self.engine.after(self.ack_timeout_us, EventKind.ACK_TIMEOUT, queue_name,
                                         {"queue": queue_name, "msg": message.id})
            state.unacked[message.id] = (chosen, deadline, message)
            self.engine.trace("broker", "dispatch",
                              f"{queue_name} {message.id} -> {chosen} attempt={message.delivery_count}")
            self.network.deliver(anchor, node_id, f"msg:{message.id}",
                                 on_arrive=self._make_arrival(chosen, queue_name, message))

    def _try_dispatch_queue_everywhere(self, queue_name: str) -> None:
        for island in self.islands:
            self._try_dispatch(island, queue_name)

    def sweep(self) -> None:
        """Re-attempt dispatch on every queue (consumer liveness may have changed)."""
        for island in self.islands:
            for queue_name in self.queue_configs:
                self._try_dispatch(island, queue_name)

    # -- acknowledgement -----------------------------------------------------

    def note_processed(self, queue_name: str, msg_id: str, consumer: str) -> int:
        """Record one completed consumer processing; returns the total so far.

        Broadcast deliveries are intentional fan-out, one per consumer, so they
        are keyed per consumer and never count as duplicates; load-balanced
        processings share a key so redeliveries show up as counts above one.
        """
        if self.queue_configs[queue_name].mode == QueueMode.BROADCAST:
            key = (msg_id, queue_name, consumer)
        else:
            key = (msg_id, queue_name)
        self.process_counts[key] += 1
        return self.process_counts[key]

    def ack(self, queue_name: str, msg_id: str, consumer: str) -> None:
        for island in self.islands:
            state = island.queues.get(queue_name)
            if state is None or msg_id not in state.unacked:
                continue
            assigned, deadline, _message = state.unacked[msg_id]
            if assigned != consumer:
                self.engine.trace("broker", "ack-anomaly",
                                  f"{msg_id} by={consumer} assigned={assigned}")
                return
            del state.unacked[msg_id]
            self.engine.cancel(deadline)
            self.acked.add(msg_id)
            self.engine.trace("broker", "ack", f"{msg_id} by={consumer}")
            return
        # unknown or already-acked message: duplicate / late ack, ignored
        self.engine.trace("broker", "ack-ignored", f"{msg_id} by={consumer}")

    def on_ack_timeout(self, event) -> None:
        queue_name = event.payload["queue"]
        msg_id = event.payload["msg"]
        for island in self.islands:
            state = island.queues.get(queue_name)
            if state is None or msg_id not in state.unacked:
                continue
            _consumer, _deadline, message = state.unacked.pop(msg_id)
            self.engine.trace("broker", "ack-timeout",
                              f"{queue_name} {msg_id} count={message.delivery_count}")
            if message.delivery_count <= self.max_redeliveries:
                # retry before fresh work; rotation avoids the consumer that failed
                state.pending.appendleft(message)
                self._try_dispatch(island, queue_name)
            else:
                self._to_error_queue(msg_id, queue_name, "Exhausted")
                self.engine.trace("broker", "error-queue", f"{msg_id} reason=Exhausted")
            return

    def _to_error_queue(self, msg_id: str, queue_name: str, reason: str) -> None:
        self.error_entries.append((msg_id, queue_name, reason))
        for callback in self.on_error:
            callback(msg_id, queue_name, reason)

    # -- partitions ------------------------------------------------------------

    def _on_partition_change(self, partition) -> None:
        if partition.partitioned:
            self._split(partition)
        else:
            self._heal()

    def _split(self, partition) -> None:
        member_groups = [g for g in partition.groups if any(m in g for m in self.members)]
        if not member_groups:
            # nobody can reach the cluster; park the state on the largest group
            biggest = max(partition.groups, key=lambda g: (len(g), min(g)))
            for island in self.islands:
                island.group = biggest
            return
        old_islands = self.islands
        new_islands = [Island(group=g) for g in
                       sorted(member_groups, key=lambda g: min(g))]

        for old in old_islands:
            for queue_name, state in old.queues.items():
                # split-time contents are copied to every side so no side loses them
                for target in new_islands:
                    tq = target.queue(queue_name)
                    for message in state.pending:
                        tq.pending.append(replace(message, meta=dict(message.meta)))
                for msg_id, (consumer, deadline, message) in state.unacked.items():
                    node_id, _ = self.consumer_state(consumer, frozenset())
                    kept = False
                    for target in new_islands:
                        if node_id in target.group:
                            target.queue(queue_name).unacked[msg_id] = (consumer, deadline, message)
                            kept = True
                        else:
                            target.queue(queue_name).pending.append(
                                replace(message, meta=dict(message.meta)))
                    if not kept:
                        self.engine.cancel(deadline)
        self.islands = new_islands
        self.sweep()

    def _heal(self) -> None:
        whole = frozenset(self.network.nodes)
        if len(self.islands) == 1:
            self.islands[0].group = whole
            self.engine.trace("broker", "resync", "reenqueued=0 already-processed=0")
            self.sweep()
            return

        def up_member_count(island: Island) -> int:
            return len(self._up_members(island))

        ordered = sorted(self.islands, key=lambda i: min(i.group) if i.group else "")
        main = ordered[0]
        for island in ordered[1:]:
            if (up_member_count(island), len(island.group)) > (up_member_count(main), len(main.group)):
                main = island
        minorities = [i for i in ordered if i is not main]
        reenqueued = 0
        already_processed = 0
        for minority in minorities:
            for queue_name, state in minority.queues.items():
                tq = main.queue(queue_name)
                for message in state.pending:
                    reenqueued += 1
                    if message.id in self.acked:
                        already_processed += 1
                    tq.pending.append(message)
                for msg_id, (consumer, deadline, message) in state.unacked.items():
                    self.engine.cancel(deadline)
                    reenqueued += 1
                    if msg_id in self.acked:
                        already_processed += 1
                    tq.pending.append(message)
        main.group = whole
        self.islands = [main]
        self.reenqueued_processed += already_processed
        self.engine.trace("broker", "resync",
                          f"reenqueued={reenqueued} already-processed={already_processed}")
        self.sweep()

    # -- introspection ---------------------------------------------------------

    def pending_ids(self) -> set[str]:
        ids: set[str] = set()
        for island in self.islands:
            for state in island.queues.values():
                ids.update(m.id for m in state.pending)
                ids.update(state.unacked)
        return ids

    def error_ids(self) -> set[str]:
        return {msg_id for msg_id, _q, _r in self.error_entries}

    def error_queue_depth(self) -> int:
        return len(self.error_entries)

    def duplicate_deliveries(self) -> int:
        return sum(count - 1 for count in self.process_counts.values() if count > 1)

    def check_no_loss(self) -> None:
        covered = self.acked | self.error_ids() | self.pending_ids()
        if self.published - covered:
            raise InvariantViolation(
                f"messages neither acked, errored nor pending: {sorted(self.published - covered)}")

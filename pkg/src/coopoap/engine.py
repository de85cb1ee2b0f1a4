"""Deterministic discrete-event core.

Time is an integer number of abstract time units.  Events dequeue in
(fire_time, sequence) order, sequence being a counter handed out at
`schedule` time, so events at the same time fire in insertion order.

`Engine` is generic, it knows nothing about nodes or protocols.  Handlers
are registered per `EventKind` and get the event passed.  The wiring for
dissemination runs lives in `Simulation`.

Random streams are derived, never shared:

    derive_rng(seed, 'channel')
    derive_rng(seed, 'node:N3')

seeds a fresh `numpy.random.Generator` from (seed, crc32(label)), so a
stream's draws depend on nothing but the seed and its label.

"""
import heapq
import itertools
import logging
import zlib

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import tinyecs as ecs

from coopoap.compsys import SlotContext, protocol_system
from coopoap.netmodel import Transmission, broadcast, header_bits
from coopoap.utils import node_entity_factory

log = logging.getLogger(__name__)

__all__ = ['EventKind', 'Event', 'SimClock', 'SimOutcome', 'Engine',
           'Simulation', 'SchedulingError', 'derive_rng']


class SchedulingError(ValueError):
    pass


class EventKind(Enum):
    SLOT_BOUNDARY = 'slot-boundary'
    PACKET_DELIVERY = 'packet-delivery'
    TIMER_EXPIRY = 'timer-expiry'
    PROTOCOL_WAKE = 'protocol-wake'


@dataclass(frozen=True, order=True)
class Event:
    fire_time: int
    sequence: int
    target: str | None = field(default=None, compare=False)
    kind: EventKind = field(default=EventKind.PROTOCOL_WAKE, compare=False)
    payload: object = field(default=None, compare=False)


@dataclass
class SimClock:
    now: int = 0
    slot_duration: int = 1

    @property
    def slot_index(self):
        return self.now // self.slot_duration

    def advance(self, t):
        if t < self.now:
            raise SchedulingError(f'clock cannot move back from {self.now} to {t}')
        self.now = t


@dataclass(kw_only=True)
class SimOutcome:
    """Result of a run.

    Attributes
    ----------
    completion_time: int | None
        Time the termination predicate became true, None if the run timed
        out.

    timed_out: bool
        The next event lay beyond `max_time` before the predicate held.

    nodes: list[NodeRuntime]
        Per node state and counters at the end of the run, empty for bare
        `Engine` runs.

    """
    completion_time: int | None
    timed_out: bool = False
    nodes: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    events: int = 0

    @property
    def tx_total(self):
        return sum(node.tx for node in self.nodes)

    @property
    def rx_total(self):
        return sum(node.rx for node in self.nodes)

    @property
    def redundant_rx(self):
        return sum(node.redundant_rx for node in self.nodes)

    @property
    def nacks(self):
        return sum(node.nacks_sent for node in self.nodes)

    @property
    def decoder_row_ops(self):
        return sum(node.decoder.row_ops for node in self.nodes
                   if node.decoder is not None and node.role != 'source')

    @property
    def header_bits(self):
        return sum(node.header_bits for node in self.nodes)

    def node(self, node_id):
        return next(node for node in self.nodes if node.node_id == node_id)


def derive_rng(seed, label):
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


class Engine:
    def __init__(self, slot_duration=1):
        self.clock = SimClock(slot_duration=slot_duration)
        self.handlers = {}
        self._queue = []
        self._sequence = itertools.count()
        self.processed = 0

    def __len__(self):
        return len(self._queue)

    def schedule(self, fire_time, kind, target=None, payload=None):
        if fire_time < self.clock.now:
            raise SchedulingError(f'event {kind.value} at {fire_time} is in the past (now {self.clock.now})')
        ev = Event(fire_time, next(self._sequence), target, kind, payload)
        heapq.heappush(self._queue, ev)
        return ev

    def pop(self):
        ev = heapq.heappop(self._queue)
        self.clock.advance(ev.fire_time)
        self.processed += 1
        return ev

    def run_until(self, predicate, max_time):
        """Dispatch events until `predicate()` holds or time passes `max_time`.

        The predicate is checked before the first and after every event.  An
        empty queue ends the run at the current time.

        """
        while True:
            if predicate():
                return SimOutcome(completion_time=self.clock.now, events=self.processed)
            if not self._queue:
                log.debug('event queue drained at t=%d', self.clock.now)
                return SimOutcome(completion_time=self.clock.now, events=self.processed)
            if self._queue[0].fire_time > max_time:
                log.debug('max_time %d reached', max_time)
                return SimOutcome(completion_time=None, timed_out=True, events=self.processed)

            ev = self.pop()
            self.handlers[ev.kind](ev)


class Simulation:
    """One dissemination run: topology, channel, protocol and seed.

    Nodes are ECS entities with a `node` (`NodeRuntime`) and an `fsm`
    (protocol state) component.  Each slot boundary runs the protocol's
    `protocol_system` over all of them, then arbitrates and broadcasts what
    the nodes want to send.  Deliveries land in the receivers' inboxes one
    slot later and are consumed by the next system run.

    Parameters
    ----------
    topology: Topology
    channel: ChannelConfig
    protocol: coopoap.protocols.Protocol
    page: Page
        The page the source disseminates.

    seed: int
        Replicate seed, see `derive_rng`.

    record_trace: bool = False
        Keep one text line per transmission in `SimOutcome.trace`.

    The ECS registry is process global.  `run` resets it and creates the
    entities, so a simulation owns the registry only while it runs and any
    number of them may be set up beforehand.

    A run in which no node sends, no event is pending and the protocol
    reports every node idle can never complete, it ends right there and is
    reported as timed out.  Protocols with `drain` set keep sending after
    the last node completed until every node is idle, the completion time
    stays the moment the last node completed.

    """
    def __init__(self, *, topology, channel, protocol, page, seed, record_trace=False):
        self.topology = topology
        self.channel = channel
        self.protocol = protocol
        self.page = page
        self.seed = seed
        self.record_trace = record_trace

    def _setup(self):
        self.trace = []
        self.completed_at = None

        self.engine = Engine(slot_duration=self.channel.slot_duration)
        self.engine.handlers = {
            EventKind.PROTOCOL_WAKE: self._on_wake,
            EventKind.SLOT_BOUNDARY: self._on_slot,
            EventKind.PACKET_DELIVERY: self._on_delivery,
            EventKind.TIMER_EXPIRY: self._on_timer,
        }
        self.channel_rng = derive_rng(self.seed, 'channel')
        self.ctx = SlotContext(topology=self.topology, cfg=self.protocol.cfg, page=self.page,
                               set_timer=self.set_timer,
                               mac_rng=derive_rng(self.seed, 'mac'))

        ecs.reset()
        self.eids = {}
        self.nodes = {}
        for node_id in self.topology.nodes:
            eid = node_entity_factory(node_id, self.topology, self.protocol.cfg,
                                      rng=derive_rng(self.seed, f'node:{node_id}'))
            self.eids[node_id] = eid
            self.nodes[node_id] = ecs.comp_of_eid(eid, 'node')
            self.engine.schedule(0, EventKind.PROTOCOL_WAKE, target=node_id)
        self.engine.schedule(0, EventKind.SLOT_BOUNDARY)

    def set_timer(self, node_id, name, delay):
        if delay < 1:
            raise SchedulingError(f'timer {name} for {node_id} needs a positive delay, got {delay}')
        self.engine.schedule(self.engine.clock.now + delay * self.channel.slot_duration,
                             EventKind.TIMER_EXPIRY, target=node_id, payload=name)

    def _sync_ctx(self):
        self.ctx.now = self.engine.clock.now
        self.ctx.slot = self.engine.clock.slot_index

    def _on_wake(self, ev):
        self._sync_ctx()
        node = self.nodes[ev.target]
        ecs.add_component(self.eids[ev.target], 'fsm', self.protocol.setup(node, self.ctx))

    def _on_delivery(self, ev):
        node = self.nodes[ev.target]
        node.rx += 1
        node.inbox.append(ev.payload)

    def _on_timer(self, ev):
        self._sync_ctx()
        eid = self.eids[ev.target]
        self.protocol.on_timer(ecs.comp_of_eid(eid, 'node'), ecs.comp_of_eid(eid, 'fsm'),
                               ev.payload, self.ctx)

    def _on_slot(self, ev):
        self._sync_ctx()
        now, slot = self.ctx.now, self.ctx.slot
        dt = self.channel.slot_duration

        outbox = []
        ecs.run_system(dt, protocol_system, 'node', 'fsm',
                       protocol=self.protocol, ctx=self.ctx, outbox=outbox)
        if self.all_complete() and not self.protocol.drain:
            return

        outbox.sort(key=lambda intent: self.topology.index[intent.node.node_id])
        sent = []
        for intent in self.protocol.arbitrate(outbox, self.ctx):
            message = self.protocol.transmit(intent.node, intent.fsm, intent, self.ctx)
            if message is not None:
                sent.append(Transmission(intent.node.node_id, message, slot))

        senders = [tx.sender for tx in sent]
        for tx in sent:
            receivers = broadcast(self.topology, self.channel, tx, self.channel_rng, concurrent=senders)
            node = self.nodes[tx.sender]
            node.tx += 1
            node.header_bits += header_bits(tx.packet)
            if self.record_trace:
                self.trace.append(f'{slot} {tx.sender} {tx.packet.describe()} -> {" ".join(receivers) or "-"}')
            for receiver in receivers:
                self.engine.schedule(now + dt, EventKind.PACKET_DELIVERY, target=receiver, payload=tx.packet)

        if not sent and not self.engine and self.all_idle():
            log.debug('no node can act any more at t=%d', now)
            return
        self.engine.schedule(now + dt, EventKind.SLOT_BOUNDARY)

    def all_complete(self):
        return all(node.complete for node in self.nodes.values())

    def all_idle(self):
        return all(self.protocol.idle(node, ecs.comp_of_eid(self.eids[node_id], 'fsm'))
                   for node_id, node in self.nodes.items())

    def finished(self):
        """Termination predicate: every node complete and, for draining
        protocols, nothing left to send."""
        if not self.all_complete():
            return False
        if self.completed_at is None:
            self.completed_at = self.engine.clock.now
        return not self.protocol.drain or self.all_idle()

    def run(self, max_slots):
        self._setup()
        log.debug('simulating %s on %s, k=%d, seed %d', self.protocol.name,
                  self.topology.name, self.page.k, self.seed)
        outcome = self.engine.run_until(self.finished, max_slots * self.channel.slot_duration)
        if self.completed_at is not None:
            outcome.completion_time, outcome.timed_out = self.completed_at, False
        else:
            outcome.completion_time, outcome.timed_out = None, True
        outcome.nodes = list(self.nodes.values())
        outcome.trace = self.trace
        return outcome

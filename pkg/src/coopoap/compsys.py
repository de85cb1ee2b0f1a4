"""Node components and the protocol system.

Every node of a simulation is an ECS entity with two components:

    'node'  a `NodeRuntime`, the protocol independent part: identity,
            decoder or packet bitmap, counters, inbox.

    'fsm'   whatever the protocol's `setup` returns, its private state.

`protocol_system` is run over all entities having both once per slot.  It
hands the inbox to the protocol's `step` and collects the `Intent`s, the
transmissions the nodes would like to make in this slot.  The engine then
decides who actually transmits.

"""
import logging

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from coopoap.codec import Page

log = logging.getLogger(__name__)

__all__ = ['NodeRuntime', 'SlotContext', 'Intent', 'protocol_system', 'complete_node']


@dataclass(kw_only=True, eq=False)
class NodeRuntime:
    """Protocol independent per node state.

    Parameters
    ----------
    node_id: str
    hop: int
        BFS distance from the source.

    index: int
        Position in the topology's node order.

    role: str
        'source' or 'relay_or_sink'.

    rng: numpy.random.Generator
        The node's private random stream.

    Attributes
    ----------
    decoder: DecoderState | None
        Set up by coded protocols.

    have: int
        Bitmap of held packet indices, uncoded protocols only.

    packets: dict[int, np.ndarray]
        Held packets by index, uncoded protocols only.

    page: Page | None
        The reconstructed page, set on completion.

    completed_at: int | None
        Time the node completed.

    tx, rx, nacks_sent, redundant_rx, header_bits: int
        Counters, monotone.

    innovative_from: Counter
        Innovative receptions by sender.

    inbox: list
        Messages delivered since the last slot.

    """
    node_id: str
    hop: int
    index: int
    role: str = 'relay_or_sink'
    rng: np.random.Generator
    k: int

    decoder: object = None
    have: int = 0
    packets: dict = field(default_factory=dict)
    page: Page | None = None
    completed_at: int | None = None

    tx: int = 0
    rx: int = 0
    nacks_sent: int = 0
    redundant_rx: int = 0
    header_bits: int = 0
    innovative_from: Counter = field(default_factory=Counter)
    inbox: list = field(default_factory=list, repr=False)

    @property
    def is_source(self):
        return self.role == 'source'

    @property
    def complete(self):
        return self.completed_at is not None

    @property
    def rank(self):
        if self.decoder is not None:
            return self.decoder.rank
        return self.have.bit_count()

    @property
    def missing(self):
        """Bitmap of packet indices not yet held."""
        return ((1 << self.k) - 1) & ~self.have

    def store(self, index, payload):
        """Keep an uncoded packet, returns False for a duplicate."""
        if self.have >> index & 1:
            self.redundant_rx += 1
            return False
        self.have |= 1 << index
        self.packets[index] = payload
        return True

    def assemble(self, page_id=0):
        return Page(page_id=page_id, packets=np.stack([self.packets[i] for i in range(self.k)]))


@dataclass(kw_only=True)
class SlotContext:
    """What a protocol gets to see besides its own node.

    `now` and `slot` are kept current by the engine.  `set_timer(node_id,
    name, delay)` schedules a `TIMER_EXPIRY` for `node_id` `delay` slots
    from now, delivered to the protocol's `on_timer`.

    """
    topology: object
    cfg: object
    page: Page
    set_timer: callable
    mac_rng: np.random.Generator
    now: int = 0
    slot: int = 0


@dataclass(kw_only=True, eq=False)
class Intent:
    """A transmission a node would like to make in the current slot.

    `kind` is protocol defined, e.g. 'ADV', 'NACK', 'DATA' or 'round'.

    """
    node: NodeRuntime
    fsm: object
    kind: str
    target: str | None = None


def protocol_system(dt, eid, node, fsm, *, protocol, ctx, outbox):
    """Run one slot of `protocol` for one node.

    Consumes the node's inbox and appends the node's `Intent`, if any, to
    `outbox`.

    """
    incoming, node.inbox = node.inbox, []
    intent = protocol.step(node, fsm, incoming, ctx)
    if intent is not None:
        outbox.append(intent)


def complete_node(node, now, page):
    node.completed_at = now
    node.page = page
    log.debug('%s complete at t=%d', node.node_id, now)

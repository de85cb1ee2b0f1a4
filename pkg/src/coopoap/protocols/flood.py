"""Plain flooding.

The source sends its k packets, one per slot.  Every other node rebroadcasts
each packet the first time it receives it, one per slot in order of
arrival, and ignores duplicates.  There is no feedback, so whatever the
channel loses on the way is lost for good.

A run goes on after the last node completed until every queued packet has
been rebroadcast.

"""
from collections import deque
from dataclasses import dataclass, field

from coopoap.compsys import Intent, complete_node
from coopoap.protocols import Data, DisseminationProtocol, IndexedPacket

__all__ = ['Protocol', 'FloodState', 'flood_step']


@dataclass
class FloodState:
    queue: deque = field(default_factory=deque)


def flood_step(node, fsm, incoming, now):
    """Store new packets and queue them for rebroadcast.

    Returns True if the node has a packet to send.

    """
    for msg in incoming:
        if not isinstance(msg, Data):
            continue
        pkt = msg.payload
        if node.store(pkt.index, pkt.payload):
            fsm.queue.append(pkt.index)

    if not node.complete and node.missing == 0:
        complete_node(node, now, node.assemble())

    return bool(fsm.queue)


@dataclass(kw_only=True)
class Protocol(DisseminationProtocol):
    name = 'flood'
    drain = True

    def setup(self, node, ctx):
        fsm = FloodState()
        if node.is_source:
            for i in range(self.cfg.k):
                node.store(i, ctx.page.packets[i])
                fsm.queue.append(i)
            complete_node(node, ctx.now, ctx.page)
        return fsm

    def step(self, node, fsm, incoming, ctx):
        if flood_step(node, fsm, incoming, ctx.now):
            return Intent(node=node, fsm=fsm, kind='DATA')
        return None

    def transmit(self, node, fsm, intent, ctx):
        index = fsm.queue.popleft()
        return Data(sender=node.node_id, page_id=ctx.page.page_id, hop=node.hop,
                    sender_rank=node.rank,
                    payload=IndexedPacket(index=index, k=self.cfg.k, payload=node.packets[index]))

    def idle(self, node, fsm):
        return not fsm.queue

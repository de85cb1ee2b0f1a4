"""Deluge style dissemination, and the base of its coded variants.

Three messages drive it:

    ADV   A complete node advertises every `adv_period` slots, as long as
          it doesn't know all its neighbors to be complete.  Pending DATA
          goes first.

    REQ   An incomplete node hearing an ADV requests from the advertiser,
          0..`req_jitter` slots later, unless it heard DATA within the last
          `req_timeout` slots.  Uncoded requests carry the bitmap of missing
          packets, coded ones the count k - rank plus the code's expected
          overhead (`nack_count`).

    DATA  A complete node merges the requests addressed to it (bitmap union
          or count maximum) and serves them, one packet per slot.

Only complete nodes send DATA, so a page crosses the network strictly hop by
hop.  Two DATA transmissions share a slot only if their senders are at least
`spatial_reuse` hops apart.  Everybody overhears all DATA.

Coded nodes become complete only after decoding, `decode_delay` slots after
reaching full rank.

"""
import logging

from dataclasses import dataclass, field

from coopoap.codec import Reception, encode
from coopoap.compsys import Intent, complete_node
from coopoap.protocols import (Adv, Data, DisseminationProtocol, IndexedPacket,
                               Nack, nack_count)

log = logging.getLogger(__name__)

__all__ = ['Protocol', 'DelugeState', 'deluge_step']

NEVER = -(1 << 30)


@dataclass
class DelugeState:
    """Per node deluge state.

    Attributes
    ----------
    pending: int
        Requested packets as bitmap (uncoded) or count (coded).

    req_at, req_target:
        Slot and addressee of a scheduled REQ.

    last_activity: int
        Slot of the last DATA heard or REQ sent.

    decoded: Page | None
        Set while a coded node waits for its decode timer.

    """
    known_complete: set = field(default_factory=set)
    next_adv: int = 0
    pending: int = 0
    req_at: int | None = None
    req_target: str | None = None
    last_activity: int = NEVER
    decoded: object = None


def deluge_step(node, fsm, incoming, ctx, protocol):
    """Process one slot's messages, returns the intent kind or None."""
    cfg = protocol.cfg
    slot = ctx.slot

    for msg in incoming:
        match msg:
            case Adv():
                fsm.known_complete.add(msg.sender)
                if (not node.complete and fsm.decoded is None and fsm.req_at is None
                        and slot - fsm.last_activity >= cfg.req_timeout):
                    fsm.req_at = slot + int(node.rng.integers(0, cfg.req_jitter + 1))
                    fsm.req_target = msg.sender
            case Nack() if msg.target == node.node_id and node.complete:
                fsm.known_complete.discard(msg.sender)
                if msg.missing is not None:
                    fsm.pending |= msg.missing
                else:
                    fsm.pending = max(fsm.pending, msg.count)
            case Data():
                fsm.last_activity = slot
                protocol.receive_data(node, fsm, msg, ctx)

    if node.complete:
        if fsm.pending:
            return 'DATA'
        neighbors = ctx.topology.neighbors(node.node_id)
        if slot >= fsm.next_adv and not fsm.known_complete.issuperset(neighbors):
            return 'ADV'
        return None

    if fsm.decoded is None and fsm.req_at is not None and slot >= fsm.req_at:
        return 'NACK'
    return None


@dataclass(kw_only=True)
class Protocol(DisseminationProtocol):
    name = 'deluge'
    fsm_step = staticmethod(deluge_step)

    _distances: dict = field(default_factory=dict, init=False, repr=False)

    def setup(self, node, ctx):
        if self.cfg.coded:
            self.coded_setup(node, ctx)
        elif node.is_source:
            for i in range(self.cfg.k):
                node.store(i, ctx.page.packets[i])
            complete_node(node, ctx.now, ctx.page)
        return DelugeState()

    def step(self, node, fsm, incoming, ctx):
        kind = self.fsm_step(node, fsm, incoming, ctx, self)
        if kind is None:
            return None
        return Intent(node=node, fsm=fsm, kind=kind, target=fsm.req_target if kind == 'NACK' else None)

    def receive_data(self, node, fsm, msg, ctx):
        if not self.cfg.coded:
            pkt = msg.payload
            if node.store(pkt.index, pkt.payload) and node.missing == 0:
                complete_node(node, ctx.now, node.assemble(ctx.page.page_id))
            return

        if node.complete or fsm.decoded is not None:
            node.redundant_rx += 1
            return
        if node.decoder.absorb(msg.codeword) is Reception.REDUNDANT:
            node.redundant_rx += 1
            return
        node.innovative_from[msg.sender] += 1
        if node.decoder.complete:
            fsm.decoded = self.start_decode(node, ctx)

    def on_timer(self, node, fsm, name, ctx):
        if name == 'decoded':
            complete_node(node, ctx.now, fsm.decoded)
            fsm.decoded = None

    def transmit(self, node, fsm, intent, ctx):
        cfg = self.cfg
        page_id = ctx.page.page_id

        match intent.kind:
            case 'ADV':
                fsm.next_adv = ctx.slot + cfg.adv_period
                return Adv(sender=node.node_id, page_id=page_id, rank=node.rank)

            case 'NACK':
                fsm.req_at = None
                fsm.last_activity = ctx.slot
                node.nacks_sent += 1
                if cfg.coded:
                    missing = {'count': nack_count(cfg.k - node.rank, cfg)}
                else:
                    missing = {'missing': node.missing}
                log.debug('%s requests from %s at slot %d: %s',
                          node.node_id, intent.target, ctx.slot, missing)
                return Nack(sender=node.node_id, page_id=page_id, hop=node.hop, k=cfg.k,
                            target=intent.target, **missing)

            case 'DATA':
                if cfg.coded:
                    fsm.pending -= 1
                    payload = encode(node.page, node.rng, cfg.dist, cfg.field)
                else:
                    index = (fsm.pending & -fsm.pending).bit_length() - 1
                    fsm.pending &= ~(1 << index)
                    payload = IndexedPacket(index=index, k=cfg.k, payload=node.packets[index])
                return Data(sender=node.node_id, page_id=page_id, hop=node.hop,
                            sender_rank=node.rank, payload=payload)

    def far_apart(self, u, v, topology):
        if (u, v) not in self._distances:
            self._distances[(u, v)] = topology.distance(u, v)
        return self._distances[(u, v)] >= self.cfg.spatial_reuse

    def arbitrate(self, intents, ctx):
        """Let DATA senders through only `spatial_reuse` hops apart.

        Candidates are tried in node order, rotated by the slot number.

        """
        data = [intent for intent in intents if intent.kind == 'DATA']
        if len(data) < 2:
            return intents

        start = ctx.slot % len(data)
        granted = []
        for intent in data[start:] + data[:start]:
            if all(self.far_apart(intent.node.node_id, g.node.node_id, ctx.topology) for g in granted):
                granted.append(intent)
        granted = set(map(id, granted))
        return [intent for intent in intents if intent.kind != 'DATA' or id(intent) in granted]

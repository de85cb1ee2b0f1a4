"""Cooperative coded dissemination.

Nodes of the same hop cooperate instead of waiting for one of them to hold
the whole page.  Every hop h gets a round window (`round_window`) in which
its nodes take turns to broadcast recoded codewords:

  - The previous hop's round is what a node mostly receives.
  - In its own round a node transmits recodings of everything it holds,
    triangularized first.  A transmission must be innovative with respect to
    the round basis, the span of all round transmissions of the hop heard
    so far, own ones included.  Peers overhear and absorb them, so the hop's
    nodes pool what they got.
  - The next hop's round is overheard too.

Pipelined, the window of hop h is [h, h + k + 1), so the rounds of all hops
overlap and a relay passes on what it gets one slot later.

One node per hop transmits per slot.  The turn starts at index
(slot - h) % hop size of the hop's turn order (a seeded permutation, or
node order with `mac='fixed'`) and passes on to the next node with
something to send.  Relays send at most ceil(k / hop size) + budget_margin
codewords per round.  The source sends its k native packets as unit vector
codewords.

A node still short of rank k at `request_slot`, after its three rounds and
the decode estimate, broadcasts a NACK counting the missing codewords plus
the expected GF(2) overhead.  Every previous hop node answers with recoded
repairs.  The NACK is repeated after count + req_timeout slots.  After
max_nack_retries NACKs without progress a node gives up, until it receives
something innovative again.

"""
import logging
import math

from dataclasses import dataclass, field

import numpy as np

from coopoap.codec import Codeword, DecoderState, Reception, encode, encode_unit
from coopoap.compsys import Intent, complete_node
from coopoap.protocols import (Data, DisseminationProtocol, Nack, nack_count,
                               request_slot, round_window)

log = logging.getLogger(__name__)

__all__ = ['Protocol', 'CoopState', 'coop_step']

_NO_PAYLOAD = np.zeros(0, dtype=np.uint8)


@dataclass(kw_only=True)
class CoopState:
    """Per node coop state.

    Attributes
    ----------
    basis: DecoderState
        Coefficients of the hop's round transmissions heard so far.

    window: tuple[int, int]
        First and last + 1 slot of the node's round.

    budget: int
        Round transmissions left.

    pending: int
        Repairs requested by the next hop.

    gave_up: bool
        Set after max_nack_retries NACKs without progress.

    """
    basis: DecoderState
    window: tuple
    budget: int
    pending: int = 0
    next_native: int = 0
    nack_due: bool = False
    nack_retries: int = 0
    rank_at_nack: int = 0
    gave_up: bool = False
    decoded: object = None


def _coefficients_only(cw):
    return Codeword(cw.page_id, cw.coefficients, _NO_PAYLOAD)


def wants_round(node, fsm, slot):
    start, end = fsm.window
    return start <= slot < end and fsm.budget > 0 and node.rank > fsm.basis.rank


def coop_step(node, fsm, incoming, ctx, protocol):
    """Process one slot's messages, returns the intent kind or None.

    NACKs go before round transmissions, which go before repairs.

    """
    for msg in incoming:
        match msg:
            case Data():
                if msg.hop == node.hop and msg.role == 'round':
                    fsm.basis.absorb(_coefficients_only(msg.codeword))
                protocol.receive_codeword(node, fsm, msg, ctx)
            case Nack() if msg.hop == node.hop + 1:
                fsm.pending = max(fsm.pending, msg.count)

    if fsm.nack_due:
        if node.complete or fsm.decoded is not None:
            fsm.nack_due = False
        else:
            return 'NACK'
    if wants_round(node, fsm, ctx.slot):
        return 'round'
    if fsm.pending and node.rank > 0:
        return 'repair'
    return None


@dataclass(kw_only=True)
class Protocol(DisseminationProtocol):
    name = 'coop'

    _turn_order: dict = field(default_factory=dict, init=False, repr=False)

    def setup(self, node, ctx):
        cfg = self.cfg
        self.coded_setup(node, ctx)
        if node.is_source:
            budget = cfg.k
        else:
            hop_size = len(ctx.topology.hop_members(node.hop))
            budget = math.ceil(cfg.k / hop_size) + cfg.budget_margin
            due = request_slot(node.hop, ctx.topology.max_hop, cfg)
            ctx.set_timer(node.node_id, 'nack', due - ctx.slot)
        basis = DecoderState(field=cfg.field, k=cfg.k, L=0, page_id=ctx.page.page_id)
        return CoopState(basis=basis, window=round_window(node.hop, cfg), budget=budget)

    def step(self, node, fsm, incoming, ctx):
        kind = coop_step(node, fsm, incoming, ctx, self)
        if kind is None:
            return None
        return Intent(node=node, fsm=fsm, kind=kind)

    def receive_codeword(self, node, fsm, msg, ctx):
        if node.complete or fsm.decoded is not None:
            node.redundant_rx += 1
            return
        if node.decoder.absorb(msg.codeword) is Reception.REDUNDANT:
            node.redundant_rx += 1
            return
        node.innovative_from[msg.sender] += 1
        if node.decoder.complete:
            fsm.decoded = self.start_decode(node, ctx)
        elif fsm.gave_up:
            log.debug('%s resumes at rank %d', node.node_id, node.rank)
            fsm.gave_up = False
            fsm.nack_retries = 0
            ctx.set_timer(node.node_id, 'nack', self.cfg.req_timeout)

    def on_timer(self, node, fsm, name, ctx):
        match name:
            case 'decoded':
                complete_node(node, ctx.now, fsm.decoded)
                fsm.decoded = None
            case 'nack' if not node.complete and fsm.decoded is None:
                if fsm.nack_retries >= self.cfg.max_nack_retries:
                    fsm.gave_up = True
                    log.info('%s gives up at rank %d after %d NACKs without progress',
                             node.node_id, node.rank, fsm.nack_retries)
                    return
                fsm.nack_due = True

    def idle(self, node, fsm):
        """Complete or given up, with no repairs left to send."""
        return (node.complete or fsm.gave_up) and not (fsm.pending and node.rank > 0)

    def transmit(self, node, fsm, intent, ctx):
        cfg = self.cfg
        header = dict(sender=node.node_id, page_id=ctx.page.page_id, hop=node.hop)

        match intent.kind:
            case 'NACK':
                fsm.nack_due = False
                if node.rank > fsm.rank_at_nack:
                    fsm.nack_retries = 0
                fsm.nack_retries += 1
                fsm.rank_at_nack = node.rank
                count = nack_count(cfg.k - node.rank, cfg)
                node.nacks_sent += 1
                ctx.set_timer(node.node_id, 'nack', count + cfg.req_timeout)
                log.debug('%s NACKs %d at slot %d', node.node_id, count, ctx.slot)
                return Nack(**header, k=cfg.k, count=count)

            case 'round':
                if node.is_source:
                    cw = encode_unit(ctx.page, fsm.next_native, cfg.field)
                    fsm.next_native += 1
                else:
                    cw = node.decoder.recode(node.rng, avoid=fsm.basis)
                    if cw is None:
                        return None
                fsm.basis.absorb(_coefficients_only(cw))
                fsm.budget -= 1
                return Data(**header, sender_rank=node.rank, role='round', payload=cw)

            case 'repair':
                fsm.pending -= 1
                if node.complete:
                    cw = encode(node.page, node.rng, cfg.dist, cfg.field)
                else:
                    cw = node.decoder.recode(node.rng)
                return Data(**header, sender_rank=node.rank, role='repair', payload=cw)

    def turn_order(self, hop, ctx):
        if hop not in self._turn_order:
            members = ctx.topology.hop_members(hop)
            if self.cfg.mac == 'shuffle':
                members = [members[i] for i in ctx.mac_rng.permutation(len(members))]
            self._turn_order[hop] = members
        return self._turn_order[hop]

    def arbitrate(self, intents, ctx):
        """One transmitter per hop, the first in turn order having an intent."""
        by_node = {intent.node.node_id: intent for intent in intents}
        granted = []
        for hop in sorted({intent.node.hop for intent in intents}):
            order = self.turn_order(hop, ctx)
            start = (ctx.slot - hop) % len(order)
            for node_id in order[start:] + order[:start]:
                if node_id in by_node:
                    granted.append(by_node[node_id])
                    break
        return sorted(granted, key=lambda intent: intent.node.index)

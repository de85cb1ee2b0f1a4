"""Dissemination protocols.

Every module in this package is one protocol, named after the module and
implementing a class `Protocol` derived from `DisseminationProtocol`:

    flood            every node rebroadcasts every new packet once
    deluge           ADV / REQ / DATA, uncoded, hop by hop
    rateless_deluge  deluge with dense GF(2^8) codewords and count NACKs
    synapse          deluge with sparse GF(2) LT-like codewords
    coop             hop-wise cooperative recoding over GF(2)

`load_protocol(name)` imports the module and returns its class.

Messages
--------

All messages are frozen dataclasses carrying their `sender` and a
`describe()` for the slot trace.  Only DATA has a header charged to the
airtime accounting:

    ADV   {page_id, rank}
    NACK  {page_id, missing bitmap | missing count}, optionally addressed
    DATA  {Codeword | IndexedPacket}, plus the sender's hop and rank

"""
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass
from importlib import import_module
from importlib.resources import files
from typing import ClassVar

from coopoap.codec import (Codeword, ConfigError, DecoderState,
                           DegreeDistribution, encode_unit, expected_overhead)
from coopoap.compsys import complete_node
from coopoap.galois import GF2, GF256, FieldSpec

log = logging.getLogger(__name__)

__all__ = ['ProtocolConfig', 'DisseminationProtocol', 'Adv', 'Nack', 'Data',
           'IndexedPacket', 'compute_tau', 'decode_estimate', 'decode_delay',
           'nack_count', 'round_window', 'request_slot',
           'load_protocol', 'available_protocols', 'bitmap_str']

# field, degree distribution
PROTOCOL_DEFAULTS = {
    'flood': (None, None),
    'deluge': (None, None),
    'rateless_deluge': (GF256, DegreeDistribution(kind='uniform_rlc')),
    'synapse': (GF2, DegreeDistribution(kind='sparse_lt')),
    'coop': (GF2, DegreeDistribution(kind='uniform_rlc')),
}


@dataclass(kw_only=True)
class ProtocolConfig:
    """Protocol tunables.

    Parameters
    ----------
    protocol: str
        One of the protocol module names.

    k, L: int
        Packets per page and bytes per packet.

    field: FieldSpec | None = None
    dist: DegreeDistribution | None = None
        Coding field and degree distribution.  None takes the protocol's
        default, uncoded protocols keep both None.

    slots_per_codeword: int = 1
    decode_estimate: int | None = None
        Slots per round transmission and decode time charged before a
        coop NACK, see `request_slot`.  decode_estimate defaults to
        ceil(log2 k), at least 1.

    adv_period: int = 2
        Slots between two ADVs of a complete node.

    req_jitter: int = 1
        A REQ goes out 0..req_jitter slots after the ADV triggering it.

    req_timeout: int = 4
        Slots without DATA before a node may request again.

    nack_batch: int | None = None
        Cap on the count of a count NACK, defaults to k.

    max_nack_retries: int = 8
        NACKs a coop node sends without making progress before giving up.

    budget_margin: int = 1
        Coop relays send at most ceil(k / hop size) + budget_margin
        codewords in their round.

    pipeline: bool = True
        Coop round windows of consecutive hops start one slot apart.  Off,
        they follow each other, see `round_window`.

    decode_speed: int = 1024
    gf256_weight: int = 4
        Decoding takes max(1, ceil(weight * ops / decode_speed)) slots, ops
        being the back substitution row operations and weight 1 for GF(2).

    mac: str = 'shuffle'
        Turn order of a coop hop, 'shuffle' (a seeded permutation) or
        'fixed' (node order).

    spatial_reuse: int = 3
        Hop distance needed between two concurrent deluge DATA senders.

    """
    protocol: str
    k: int
    L: int = 20
    field: FieldSpec | None = None
    dist: DegreeDistribution | None = None
    slots_per_codeword: int = 1
    decode_estimate: int | None = None
    adv_period: int = 2
    req_jitter: int = 1
    req_timeout: int = 4
    nack_batch: int | None = None
    max_nack_retries: int = 8
    budget_margin: int = 1
    pipeline: bool = True
    decode_speed: int = 1024
    gf256_weight: int = 4
    mac: str = 'shuffle'
    spatial_reuse: int = 3

    def __post_init__(self):
        if self.protocol not in PROTOCOL_DEFAULTS:
            raise ConfigError(f'unknown protocol {self.protocol!r}')
        if self.k < 1:
            raise ConfigError(f'k must be at least 1, got {self.k}')
        if self.L < 1:
            raise ConfigError(f'L must be at least 1, got {self.L}')
        for name in ('slots_per_codeword', 'adv_period', 'req_timeout', 'decode_speed', 'gf256_weight'):
            if getattr(self, name) <= 0:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.decode_estimate is not None and self.decode_estimate <= 0:
            raise ConfigError(f'decode_estimate must be positive, got {self.decode_estimate}')
        if self.req_jitter < 0 or self.max_nack_retries < 0 or self.budget_margin < 0:
            raise ConfigError('req_jitter, max_nack_retries and budget_margin must not be negative')
        if self.mac not in ('shuffle', 'fixed'):
            raise ConfigError(f'unknown mac {self.mac!r}, expected shuffle or fixed')

        field, dist = PROTOCOL_DEFAULTS[self.protocol]
        if field is None:
            self.field = self.dist = None
        else:
            self.field = self.field or field
            self.dist = self.dist or dist
        self.nack_batch = self.nack_batch or self.k
        self.pipeline = bool(self.pipeline)
        if self.nack_batch < 1:
            raise ConfigError(f'nack_batch must be positive, got {self.nack_batch}')

    @property
    def coded(self):
        return self.field is not None


def bitmap_str(bitmap, k):
    """Packet 0 first: 0b0010 over k=4 reads '0100'."""
    return ''.join('1' if bitmap >> i & 1 else '0' for i in range(k))


@dataclass(frozen=True, kw_only=True)
class Adv:
    kind: ClassVar[str] = 'ADV'

    sender: str
    page_id: int = 0
    rank: int

    def describe(self):
        return f'ADV page={self.page_id} rank={self.rank}'


@dataclass(frozen=True, kw_only=True)
class Nack:
    """A request for more data.

    Carries either a `missing` bitmap (uncoded) or a `count` of codewords.
    `target` None addresses every node of the previous hop.

    """
    kind: ClassVar[str] = 'NACK'

    sender: str
    page_id: int = 0
    hop: int
    k: int
    target: str | None = None
    missing: int | None = None
    count: int | None = None

    def describe(self):
        to = f' to={self.target}' if self.target is not None else ''
        what = (f'missing={bitmap_str(self.missing, self.k)}' if self.missing is not None
                else f'count={self.count}')
        return f'NACK page={self.page_id}{to} {what}'


@dataclass(frozen=True, kw_only=True, eq=False)
class IndexedPacket:
    index: int
    k: int
    payload: object

    @property
    def header_bits(self):
        return max(1, (self.k - 1).bit_length())


@dataclass(frozen=True, kw_only=True, eq=False)
class Data:
    """A data packet.

    `role` is 'data' for deluge style responses, 'round' and 'repair' for
    coop's round transmissions and NACK responses.

    """
    kind: ClassVar[str] = 'DATA'

    sender: str
    page_id: int = 0
    hop: int
    sender_rank: int
    role: str = 'data'
    payload: Codeword | IndexedPacket

    @property
    def header_bits(self):
        return self.payload.header_bits

    @property
    def codeword(self):
        return self.payload if isinstance(self.payload, Codeword) else None

    def describe(self):
        if isinstance(self.payload, IndexedPacket):
            return f'DATA page={self.page_id} index={self.payload.index}'
        return f'DATA page={self.page_id} rank={self.sender_rank} {self.role}'


def decode_estimate(k, cfg):
    if cfg.decode_estimate is not None:
        return cfg.decode_estimate
    return max(1, math.ceil(math.log2(k)))


def compute_tau(k, cfg):
    """Slots a coop node waits for the three transmission rounds and the
    decoding before it NACKs.
    """
    if k < 1:
        raise ConfigError(f'k must be at least 1, got {k}')
    return 3 * k * cfg.slots_per_codeword + decode_estimate(k, cfg)


def decode_delay(ops, cfg):
    weight = cfg.gf256_weight if cfg.field is not None and cfg.field.order == 256 else 1
    return max(1, math.ceil(weight * ops / cfg.decode_speed))


def nack_count(missing, cfg):
    """Codewords to ask for when `missing` ranks short.

    The deficit plus the expected overhead of the configured code, rounded,
    at most `nack_batch`.  GF(2) dense codes add 2 from k = 8 on, GF(2^8)
    adds nothing.

    """
    extra = round(expected_overhead(cfg.k, cfg.field, cfg.dist))
    return min(missing + extra, cfg.nack_batch)


def round_window(hop, cfg):
    """First and last + 1 slot of the coop round of `hop`.

    Pipelined, a round is k + 1 slots and the round of hop h starts at slot
    h, one slot after its previous hop's.  Otherwise every round takes
    k * slots_per_codeword slots and starts when the previous one ends.

    """
    if cfg.pipeline:
        return hop, hop + cfg.k + 1
    length = cfg.k * cfg.slots_per_codeword
    return hop * length, (hop + 1) * length


def request_slot(hop, last_hop, cfg):
    """Slot at which a coop node of `hop` still short of rank k NACKs.

    That is after its three rounds, the previous hop's, its own and the next
    hop's, plus the decode estimate.  The last hop has no next hop and
    stops counting after its own round.  With consecutive rounds the
    request timer is `compute_tau` slots, started with the previous hop's
    round.

    """
    if hop < 1:
        raise ConfigError(f'hop {hop} has no previous hop to request from')
    if not cfg.pipeline:
        return round_window(hop - 1, cfg)[0] + compute_tau(cfg.k, cfg)
    _, end = round_window(min(hop + 1, last_hop), cfg)
    return end + decode_estimate(cfg.k, cfg)


@dataclass(kw_only=True)
class DisseminationProtocol(ABC):
    """Derive from this to implement a protocol.

    One instance serves one simulation run.  The engine calls, per slot,
    `step` for every node, then `arbitrate` over the resulting intents, then
    `transmit` for every intent allowed through.  Only `transmit` should
    change state for the transmission itself, a node losing arbitration
    simply asks again next slot.

    """
    name: ClassVar[str] = 'abstract'

    # keep running after the last completion until every node is idle
    drain: ClassVar[bool] = False

    cfg: ProtocolConfig

    @abstractmethod
    def setup(self, node, ctx):
        """Prepare `node` at wake up, returns the protocol's 'fsm' component."""
        raise NotImplementedError

    @abstractmethod
    def step(self, node, fsm, incoming, ctx):
        """Consume `incoming` messages, returns an `Intent` or None."""
        raise NotImplementedError

    @abstractmethod
    def transmit(self, node, fsm, intent, ctx):
        """Build the message for a granted `intent`, None to stay silent."""
        raise NotImplementedError

    def on_timer(self, node, fsm, name, ctx):
        pass

    def arbitrate(self, intents, ctx):
        return intents

    def idle(self, node, fsm):
        """True if `node` will not act again unless it receives something."""
        return False

    # Shared by the coded protocols

    def coded_setup(self, node, ctx):
        cfg = self.cfg
        node.decoder = DecoderState(field=cfg.field, k=cfg.k, L=cfg.L, page_id=ctx.page.page_id)
        if node.is_source:
            for i in range(cfg.k):
                node.decoder.absorb(encode_unit(ctx.page, i, cfg.field))
            complete_node(node, ctx.now, ctx.page)

    def start_decode(self, node, ctx):
        """Back substitute and schedule the 'decoded' timer.  Returns the page."""
        before = node.decoder.row_ops
        page = node.decoder.decode()
        delay = decode_delay(node.decoder.row_ops - before, self.cfg)
        log.debug('%s reached rank %d at t=%d, decoding for %d slots',
                  node.node_id, node.decoder.rank, ctx.now, delay)
        ctx.set_timer(node.node_id, 'decoded', delay)
        return page


def available_protocols():
    return sorted(f.name.removesuffix('.py') for f in files('coopoap.protocols').iterdir()
                  if f.name.endswith('.py') and not f.name.startswith('__'))


def load_protocol(name):
    """The `Protocol` class of protocol module `name`."""
    if name not in PROTOCOL_DEFAULTS:
        raise ConfigError(f'unknown protocol {name!r}, available: {", ".join(available_protocols())}')
    return getattr(import_module(f'coopoap.protocols.{name}'), 'Protocol')

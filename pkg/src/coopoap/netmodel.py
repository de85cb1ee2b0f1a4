"""Topology graph, erasure channels and broadcast delivery.

A `Topology` is a directed graph of node ids with a designated source.  Links
may carry their own erasure probability, links without one use the channel's
`default_erasure`.

Topology documents are plain text, one directive per line, `#` starts a
comment:

    source N1
    node N2
    link N1 N2 erasure=0.1      # both directions
    arc N2 N3                   # one direction only
    default_erasure 0.2

Nodes named in `source`, `link` or `arc` lines are declared implicitly.  A
later line for the same pair overrides the earlier one.  Instead of a
document, `load_topology` also accepts the name of a built-in generator, see
`coopoap.topologies`.

"""
import logging
import math

from collections import deque
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

__all__ = ['Topology', 'ChannelConfig', 'Transmission', 'TopologyError',
           'load_topology', 'parse_topology', 'broadcast', 'effective_erasure',
           'erasure_failure_threshold', 'header_bits']


class TopologyError(ValueError):
    def __init__(self, msg, lineno=None):
        super().__init__(f'line {lineno}: {msg}' if lineno is not None else msg)
        self.lineno = lineno


def _check_probability(value, what, lineno=None):
    if not 0 <= value <= 1:
        raise TopologyError(f'{what} must be in [0, 1], got {value}', lineno)
    return value


@dataclass(kw_only=True)
class Topology:
    """The network graph.

    Parameters
    ----------
    nodes: list[str]
        Node ids in declaration order.  This order is used wherever a
        deterministic iteration over nodes is needed.

    source: str
        The node holding the page at the start.

    links: dict[tuple[str, str], float | None]
        Directed links (u, v) meaning v hears u, with an optional per link
        erasure probability.

    default_erasure: float | None = None
        Erasure probability suggested by the topology document, used by
        scenarios that don't sweep one themselves.

    Attributes
    ----------
    hop_of: dict[str, int]
        BFS hop distance from the source.

    """
    name: str = 'custom'
    nodes: list
    source: str
    links: dict
    default_erasure: float | None = None
    hop_of: dict = field(init=False)

    def __post_init__(self):
        if self.source not in self.nodes:
            raise TopologyError(f'source {self.source!r} is not a node')
        self.index = {node: i for i, node in enumerate(self.nodes)}
        for (u, v), erasure in self.links.items():
            if u not in self.index or v not in self.index:
                raise TopologyError(f'link {u} -> {v} names an unknown node')
            if u == v:
                raise TopologyError(f'self link on {u}')
            if erasure is not None:
                _check_probability(erasure, f'erasure of {u} -> {v}')

        self._out = {node: [] for node in self.nodes}
        self._in = {node: [] for node in self.nodes}
        for u, v in sorted(self.links, key=lambda uv: (self.index[uv[0]], self.index[uv[1]])):
            self._out[u].append(v)
            self._in[v].append(u)

        self.hop_of = self._bfs(self.source)
        unreachable = [node for node in self.nodes if node not in self.hop_of]
        if unreachable:
            raise TopologyError(f'unreachable from {self.source}: {", ".join(unreachable)}')

    def _bfs(self, start):
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in self._out[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def neighbors(self, u):
        """Nodes hearing `u`, in node order."""
        return self._out[u]

    def hearers_of(self, v):
        """Nodes `v` hears, in node order."""
        return self._in[v]

    def distance(self, u, v):
        """Hop count from u to v, `math.inf` if there is no path."""
        return self._bfs(u).get(v, math.inf)

    def erasure(self, u, v, default):
        erasure = self.links[(u, v)]
        return default if erasure is None else erasure

    @property
    def max_hop(self):
        return max(self.hop_of.values())

    def hop_members(self, hop):
        return [node for node in self.nodes if self.hop_of[node] == hop]

    def __len__(self):
        return len(self.nodes)


def parse_topology(text, name='custom'):
    nodes = []
    links = {}
    source = None
    default_erasure = None

    def declare(node):
        if node not in nodes:
            nodes.append(node)

    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split('#', 1)[0].split()
        if not tokens:
            continue
        directive, args = tokens[0], tokens[1:]

        match directive:
            case 'node' if len(args) == 1:
                declare(args[0])
            case 'source' if len(args) == 1:
                if source is not None:
                    raise TopologyError(f'second source {args[0]!r}, already have {source!r}', lineno)
                source = args[0]
                declare(source)
            case 'default_erasure' if len(args) == 1:
                default_erasure = _check_probability(_float(args[0], lineno), 'default_erasure', lineno)
            case 'link' | 'arc' if len(args) in (2, 3):
                u, v = args[:2]
                if u == v:
                    raise TopologyError(f'self link on {u}', lineno)
                erasure = None
                if len(args) == 3:
                    key, _, value = args[2].partition('=')
                    if key != 'erasure' or not value:
                        raise TopologyError(f'expected erasure=<float>, got {args[2]!r}', lineno)
                    erasure = _check_probability(_float(value, lineno), 'erasure', lineno)
                declare(u)
                declare(v)
                links[(u, v)] = erasure
                if directive == 'link':
                    links[(v, u)] = erasure
            case 'node' | 'source' | 'default_erasure' | 'link' | 'arc':
                raise TopologyError(f'wrong number of arguments for {directive!r}', lineno)
            case _:
                raise TopologyError(f'unknown directive {directive!r}', lineno)

    if source is None:
        raise TopologyError('no source declared')

    return Topology(name=name, nodes=nodes, source=source, links=links,
                    default_erasure=default_erasure)


def _float(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise TopologyError(f'not a number: {token!r}', lineno) from None


def load_topology(description):
    """Build a topology from a built-in name (`fig1`, `line(5)`, `grid(10x10)`)
    or from the text of a topology document.
    """
    from coopoap.topologies import builtin

    topo = builtin(description.strip())
    if topo is None:
        topo = parse_topology(description)
    log.debug('topology %s: %d nodes, %d links, %d hops', topo.name, len(topo), len(topo.links), topo.max_hop)
    return topo


@dataclass(frozen=True, kw_only=True)
class ChannelConfig:
    """Channel parameters shared by all links.

    Parameters
    ----------
    default_erasure: float = 0
        Erasure probability of links without their own.

    collision: str = 'none'
        'none' or 'bernoulli'.  With 'bernoulli', a receiver hearing n
        transmitters in the same slot additionally loses each of them with
        probability `p_c` per concurrent pair, so the effective erasure is
        1 - (1 - erasure) * (1 - p_c) ** (n - 1).

    p_c: float = 0
        Collision probability, see above.

    slot_duration: int = 1
        Abstract time units per transmission.

    drops: frozenset[tuple[str, str, int]]
        Scripted losses as (sender, receiver, slot).  A scripted drop still
        consumes its random draw.

    """
    default_erasure: float = 0.0
    collision: str = 'none'
    p_c: float = 0.0
    slot_duration: int = 1
    drops: frozenset = frozenset()

    def __post_init__(self):
        _check_probability(self.default_erasure, 'default_erasure')
        _check_probability(self.p_c, 'collision probability')
        if self.collision not in ('none', 'bernoulli'):
            raise ValueError(f'unknown collision model {self.collision!r}')
        if not (isinstance(self.slot_duration, int) and self.slot_duration > 0):
            raise ValueError(f'slot_duration must be a positive integer, got {self.slot_duration!r}')


@dataclass(frozen=True)
class Transmission:
    sender: str
    packet: object
    slot: int


def effective_erasure(erasure, cfg, n_concurrent):
    if cfg.collision == 'none' or n_concurrent < 2:
        return erasure
    return 1 - (1 - erasure) * (1 - cfg.p_c) ** (n_concurrent - 1)


def broadcast(topo, cfg, tx, rng, concurrent=()):
    """Deliver `tx` over the erasure channel.

    Parameters
    ----------
    concurrent: iterable[str]
        All senders of the same slot, `tx.sender` included.  Only used by the
        bernoulli collision model.

    Returns
    -------
    list[str]
        The receiving neighbors, in node order.  One uniform draw is taken
        per neighbor, always, so the stream position depends only on who
        transmitted.

    """
    concurrent = set(concurrent)
    received = []
    for v in topo.neighbors(tx.sender):
        draw = rng.random()
        if (tx.sender, v, tx.slot) in cfg.drops:
            continue
        n = sum(1 for u in topo.hearers_of(v) if u in concurrent) if concurrent else 1
        if draw >= effective_erasure(topo.erasure(tx.sender, v, cfg.default_erasure), cfg, n):
            received.append(v)
    return received


def erasure_failure_threshold(rounds):
    """Erasure rate above which `rounds` offerings of k codewords are expected
    to deliver fewer than k of them, 1 - 1/rounds.
    """
    if rounds < 1:
        raise ValueError(f'rounds must be at least 1, got {rounds}')
    return 1 - 1 / rounds


def header_bits(packet):
    """Header bits charged to `packet`, 0 for control messages."""
    return getattr(packet, 'header_bits', 0)

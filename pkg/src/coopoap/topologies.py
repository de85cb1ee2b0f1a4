"""Built-in topology generators.

Derive from `TopologyBuilder` and implement `edges` to add one.  Node ids are
N1..Nn, N1 is the source.

    >>> Grid(n=3).build().hop_of['N9']
    4

"""
import re

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import partial

from coopoap.netmodel import Topology, TopologyError

__all__ = ['TopologyBuilder', 'Fig1', 'Line', 'Grid', 'builtin', 'BUILTINS']


@dataclass(kw_only=True)
class TopologyBuilder(ABC):
    """Base class of all topology generators.

    Parameters
    ----------
    erasure: float | None = None
        Per link erasure for every generated link.  None leaves it to the
        channel.

    """
    erasure: float | None = None

    @property
    @abstractmethod
    def n_nodes(self):
        raise NotImplementedError

    @abstractmethod
    def edges(self):
        """Undirected edges as pairs of 1-based node numbers.

        Returns
        -------
        list[tuple[int, int]]

        """
        raise NotImplementedError

    @property
    def name(self):
        return type(self).__name__.lower()

    def build(self):
        nodes = [f'N{i}' for i in range(1, self.n_nodes + 1)]
        links = {}
        for a, b in self.edges():
            links[(f'N{a}', f'N{b}')] = self.erasure
            links[(f'N{b}', f'N{a}')] = self.erasure
        return Topology(name=self.name, nodes=nodes, source='N1', links=links)


@dataclass(kw_only=True)
class Fig1(TopologyBuilder):
    """The 5 node, two hop example.

    N1 reaches N2 and N3, which overhear each other and both reach N4 and
    N5.  N4 and N5 overhear each other too.

    """
    @property
    def n_nodes(self):
        return 5

    def edges(self):
        return [(1, 2), (1, 3), (2, 3),
                (2, 4), (2, 5), (3, 4), (3, 5),
                (4, 5)]


@dataclass(kw_only=True)
class Line(TopologyBuilder):
    n: int = 2

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f'line needs at least one node, got {self.n}')

    @property
    def name(self):
        return f'line({self.n})'

    @property
    def n_nodes(self):
        return self.n

    def edges(self):
        return [(i, i + 1) for i in range(1, self.n)]


@dataclass(kw_only=True)
class Grid(TopologyBuilder):
    """n x n nodes, row major, each linked to its 4-neighborhood.  The source
    sits in a corner.
    """
    n: int = 10

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f'grid needs at least one node, got {self.n}')

    @property
    def name(self):
        return f'grid({self.n}x{self.n})'

    @property
    def n_nodes(self):
        return self.n * self.n

    def edges(self):
        num = lambda row, col: row * self.n + col + 1
        edges = []
        for row in range(self.n):
            for col in range(self.n):
                if col + 1 < self.n:
                    edges.append((num(row, col), num(row, col + 1)))
                if row + 1 < self.n:
                    edges.append((num(row, col), num(row + 1, col)))
        return edges


BUILTINS = {
    'fig1': Fig1,
    'line': Line,
    'grid': Grid,
    'grid100': partial(Grid, n=10),
}

_BUILTIN_RE = re.compile(r'^(?P<kind>[a-z][a-z0-9]*)(?:\((?P<n>\d+)(?:x(?P<m>\d+))?\))?$')


def builtin(description):
    """Topology for a built-in name, or None if `description` isn't one."""
    m = _BUILTIN_RE.match(description)
    if m is None or m['kind'] not in BUILTINS:
        return None

    kind, n, other = m['kind'], m['n'], m['m']
    if other is not None and (kind != 'grid' or other != n):
        raise TopologyError(f'only square grids are supported, got {description!r}')
    if n is None:
        return BUILTINS[kind]().build()
    if kind not in ('line', 'grid'):
        raise TopologyError(f'{kind} takes no size argument')
    return BUILTINS[kind](n=int(n)).build()

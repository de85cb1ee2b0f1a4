"""coopoap - Cooperative over-the-air programming, simulated

A page of k packets has to get from a source node to every node of a lossy
multi-hop wireless network.  This library simulates a handful of ways to do
that, slot by slot, and compares how long they take.

The following parts are involved:

    1. Coding, `coopoap.galois` and `coopoap.codec`.

        Packets are combined into codewords with random coefficients over
        GF(2) or GF(2^8).  A receiver collecting k linearly independent ones
        can solve for the page.  A node holding only some of them can still
        produce new combinations of what it has, that's recoding.

            >>> rng = np.random.default_rng(1)
            >>> page = Page.random(4, 20, rng)
            >>> state = DecoderState(k=4, L=20)
            >>> while not state.complete:
            ...     _ = absorb(state, encode(page, rng))
            >>> decode(state) == page
            True

    2. The network, `coopoap.netmodel` and `coopoap.topologies`.

        A topology is nodes, a source and links with erasure probabilities.
        Every transmission is a broadcast, each neighbor receives it
        independently.  Topologies are either built in ('fig1', 'line(5)',
        'grid(10x10)') or small text documents.

    3. The simulator, `coopoap.engine`.

        A deterministic discrete-event loop.  Nodes are `tinyecs` entities
        with a 'node' and an 'fsm' component, once per slot the protocol's
        system runs over all of them.  Everything random comes from streams
        derived from the replicate seed, a run is a pure function of its
        inputs.

    4. The protocols, `coopoap.protocols`.

            flood, deluge, rateless_deluge, synapse and coop

        each a plugin module with a `Protocol` class.

    5. Experiments, `coopoap.scenario` and `coopoap.expcli`.

        A scenario names a topology, the protocols to compare and what to
        sweep.  `coopoap run --scenario fig2` runs it and writes CSV files
        and SVG plots.

"""
# flake8: noqa
from .galois import GF2, GF256, FieldSpec
from .codec import (Codeword, DecoderState, DegreeDistribution, Page, Reception,
                    absorb, decode, encode, recode)
from .netmodel import ChannelConfig, Topology, broadcast, load_topology, parse_topology
from .engine import Engine, Simulation, SimOutcome, derive_rng
from .protocols import ProtocolConfig, load_protocol
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = ['GF2', 'GF256', 'FieldSpec',
           'Codeword', 'DecoderState', 'DegreeDistribution', 'Page', 'Reception',
           'absorb', 'decode', 'encode', 'recode',
           'ChannelConfig', 'Topology', 'broadcast', 'load_topology', 'parse_topology',
           'Engine', 'Simulation', 'SimOutcome', 'derive_rng',
           'ProtocolConfig', 'load_protocol',
           'Scenario', 'load_scenario', 'parse_scenario']

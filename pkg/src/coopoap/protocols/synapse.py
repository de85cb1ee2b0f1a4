"""SYNAPSE++ style dissemination.

The same request/response abstraction as rateless Deluge, but codewords are
GF(2) combinations with a sparse, LT-like degree distribution (robust
soliton by default).  Receivers decode with the shared triangularizing
decoder, so XOR row operations replace GF(2^8) multiplications at the price
of some extra codewords.

"""
from dataclasses import dataclass

from coopoap.protocols import deluge, rateless_deluge

__all__ = ['Protocol', 'synapse_step']


def synapse_step(node, fsm, incoming, ctx, protocol):
    return deluge.deluge_step(node, fsm, incoming, ctx, protocol)


@dataclass(kw_only=True)
class Protocol(rateless_deluge.Protocol):
    name = 'synapse'
    fsm_step = staticmethod(synapse_step)


"""Rateless Deluge: the deluge state machine over dense GF(2^8) codewords.

Complete nodes answer requests with fresh random linear combinations of the
whole page instead of specific packets, so any k independent codewords
complete a receiver and one codeword can fill different gaps at different
receivers.  Requests carry the count k - rank.

"""
from dataclasses import dataclass

from coopoap.codec import ConfigError
from coopoap.protocols import deluge

__all__ = ['Protocol', 'rateless_deluge_step']


def rateless_deluge_step(node, fsm, incoming, ctx, protocol):
    return deluge.deluge_step(node, fsm, incoming, ctx, protocol)


@dataclass(kw_only=True)
class Protocol(deluge.Protocol):
    name = 'rateless_deluge'
    fsm_step = staticmethod(rateless_deluge_step)

    def __post_init__(self):
        if not self.cfg.coded:
            raise ConfigError(f'{self.name} needs a coding field')


import logging

import numpy as np
import pytest

from coopoap.codec import ConfigError, Page, encode_unit
from coopoap.compsys import Intent, NodeRuntime, SlotContext
from coopoap.engine import Simulation, derive_rng
from coopoap.galois import GF2, GF256
from coopoap.netmodel import ChannelConfig, load_topology
from coopoap.protocols import (Adv, Data, Nack, ProtocolConfig, available_protocols,
                               bitmap_str, compute_tau, decode_delay, load_protocol,
                               nack_count, request_slot, round_window)
from coopoap.protocols.coop import coop_step

FIG1_DROPS = frozenset({('N1', 'N2', 1), ('N1', 'N3', 0), ('N1', 'N3', 3)})


def run(protocol, topology='fig1', k=4, erasure=0.0, drops=frozenset(), seed=0, max_slots=2000, **kwargs):
    cfg = ProtocolConfig(protocol=protocol, k=k, L=8, **kwargs)
    sim = Simulation(topology=load_topology(topology),
                     channel=ChannelConfig(default_erasure=erasure, drops=drops),
                     protocol=load_protocol(protocol)(cfg=cfg),
                     page=Page.random(k, 8, derive_rng(seed, 'page')),
                     seed=seed, record_trace=True)
    return sim.run(max_slots)


def lines_at(outcome, slot):
    return [line for line in outcome.trace if line.split()[0] == str(slot)]


def test_available_protocols():
    assert available_protocols() == ['coop', 'deluge', 'flood', 'rateless_deluge', 'synapse']
    assert load_protocol('coop').name == 'coop'
    with pytest.raises(ConfigError) as e:
        load_protocol('trickle')
    assert 'unknown protocol' in str(e.value)


def test_config_defaults():
    assert ProtocolConfig(protocol='rateless_deluge', k=8).field == GF256
    assert ProtocolConfig(protocol='coop', k=8).field == GF2
    assert ProtocolConfig(protocol='synapse', k=8).dist.kind == 'sparse_lt'
    assert ProtocolConfig(protocol='rateless_deluge', k=8).dist.kind == 'uniform_rlc'
    flood = ProtocolConfig(protocol='flood', k=8, field=GF256)
    assert flood.field is None and not flood.coded
    assert ProtocolConfig(protocol='coop', k=8).nack_batch == 8


@pytest.mark.parametrize('kw', [
    dict(protocol='gossip'),
    dict(k=0),
    dict(L=0),
    dict(adv_period=0),
    dict(req_jitter=-1),
    dict(decode_estimate=0),
    dict(mac='csma'),
])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        ProtocolConfig(**{'protocol': 'coop', 'k': 4} | kw)


def test_rateless_needs_field():
    with pytest.raises(ConfigError):
        load_protocol('rateless_deluge')(cfg=ProtocolConfig(protocol='deluge', k=4))


@pytest.mark.parametrize('k, tau', [(1, 4), (4, 14), (16, 52), (48, 150)])
def test_compute_tau(k, tau):
    assert compute_tau(k, ProtocolConfig(protocol='coop', k=k)) == tau


def test_compute_tau_overrides():
    cfg = ProtocolConfig(protocol='coop', k=4, slots_per_codeword=2, decode_estimate=5)
    assert compute_tau(4, cfg) == 29
    with pytest.raises(ConfigError):
        compute_tau(0, cfg)


def test_round_windows():
    cfg = ProtocolConfig(protocol='coop', k=4)
    assert [round_window(hop, cfg) for hop in range(3)] == [(0, 5), (1, 6), (2, 7)]
    assert request_slot(1, 2, cfg) == request_slot(2, 2, cfg) == 9
    assert request_slot(1, 1, cfg) == 8

    sequential = ProtocolConfig(protocol='coop', k=4, pipeline=False)
    assert [round_window(hop, sequential) for hop in range(3)] == [(0, 4), (4, 8), (8, 12)]
    assert request_slot(1, 2, sequential) == compute_tau(4, sequential) == 14
    assert request_slot(2, 2, sequential) == 18

    with pytest.raises(ConfigError) as e:
        request_slot(0, 2, cfg)
    assert 'no previous hop' in str(e.value)


def test_pipelined_request_comes_before_tau():
    cfg = ProtocolConfig(protocol='coop', k=48)
    assert request_slot(1, 2, cfg) == 57
    assert request_slot(1, 2, cfg) < compute_tau(48, cfg)


def test_nack_count():
    assert nack_count(1, ProtocolConfig(protocol='coop', k=4)) == 2
    assert nack_count(4, ProtocolConfig(protocol='coop', k=4)) == 4
    assert nack_count(3, ProtocolConfig(protocol='coop', k=8)) == 5
    assert nack_count(3, ProtocolConfig(protocol='coop', k=8, nack_batch=4)) == 4
    assert nack_count(3, ProtocolConfig(protocol='rateless_deluge', k=8)) == 3


def test_synapse_nack_covers_overhead():
    dense = nack_count(1, ProtocolConfig(protocol='coop', k=32))
    assert dense == 3
    assert nack_count(1, ProtocolConfig(protocol='synapse', k=32)) >= dense


def test_decode_delay():
    gf2 = ProtocolConfig(protocol='coop', k=4)
    gf256 = ProtocolConfig(protocol='rateless_deluge', k=4)
    assert decode_delay(0, gf2) == 1
    assert decode_delay(1024, gf2) == 1
    assert decode_delay(1024, gf256) == 4
    assert decode_delay(1025, gf2) == 2


def test_messages():
    assert bitmap_str(0b0010, 4) == '0100'
    assert Adv(sender='N1', rank=4).describe() == 'ADV page=0 rank=4'
    nack = Nack(sender='N2', hop=1, k=4, target='N1', missing=0b0010)
    assert nack.describe() == 'NACK page=0 to=N1 missing=0100'
    assert Nack(sender='N4', hop=2, k=4, count=3).describe() == 'NACK page=0 count=3'


# flood

def test_flood_lossless():
    outcome = run('flood')
    assert outcome.completion_time == 5
    # every node rebroadcasts every packet once
    assert outcome.tx_total == 20
    assert all(node.tx == 4 for node in outcome.nodes)
    assert outcome.nacks == 0
    assert lines_at(outcome, 0) == ['0 N1 DATA page=0 index=0 -> N2 N3']


def test_flood_never_recovers():
    outcome = run('flood', drops=frozenset({('N1', 'N2', 1), ('N1', 'N3', 1)}))
    assert outcome.timed_out
    assert not outcome.node('N4').complete


# deluge

def test_deluge_two_nodes():
    outcome = run('deluge', topology='line(2)', req_jitter=0)
    assert outcome.trace == [
        '0 N1 ADV page=0 rank=4 -> N2',
        '1 N2 NACK page=0 to=N1 missing=1111 -> N1',
        '2 N1 DATA page=0 index=0 -> N2',
        '3 N1 DATA page=0 index=1 -> N2',
        '4 N1 DATA page=0 index=2 -> N2',
        '5 N1 DATA page=0 index=3 -> N2',
    ]
    assert outcome.completion_time == 6


def test_deluge_retransmits_only_missing():
    outcome = run('deluge', topology='line(2)', req_jitter=0, drops=frozenset({('N1', 'N2', 3)}))
    assert '11 N2 NACK page=0 to=N1 missing=0100 -> N1' in outcome.trace
    assert lines_at(outcome, 12) == ['12 N1 DATA page=0 index=1 -> N2']
    assert outcome.completion_time == 13
    assert outcome.nacks == 2


def test_deluge_serves_union_of_requests():
    drops = frozenset({('N1', 'N2', 3), ('N1', 'N3', 2), ('N1', 'N3', 5)})
    outcome = run('deluge', req_jitter=0, req_timeout=5, drops=drops)

    assert lines_at(outcome, 11) == ['11 N2 NACK page=0 to=N1 missing=0100 -> N1 N3 N4 N5',
                                     '11 N3 NACK page=0 to=N1 missing=1001 -> N1 N2 N4 N5']
    sent = [line.split()[4] for slot in (12, 13, 14) for line in lines_at(outcome, slot)
            if line.startswith(f'{slot} N1 ')]
    assert sent == ['index=0', 'index=1', 'index=3']
    assert not outcome.timed_out


def test_deluge_spatial_reuse():
    topo = load_topology('line(5)')
    cfg = ProtocolConfig(protocol='deluge', k=4)
    protocol = load_protocol('deluge')(cfg=cfg)
    ctx = SlotContext(topology=topo, cfg=cfg, page=None, set_timer=None, mac_rng=None)

    def intent(node_id, kind='DATA'):
        node = NodeRuntime(node_id=node_id, hop=topo.hop_of[node_id], index=topo.index[node_id],
                           rng=np.random.default_rng(0), k=4)
        return Intent(node=node, fsm=None, kind=kind)

    far = [intent('N1'), intent('N2', 'ADV'), intent('N4')]
    assert [i.node.node_id for i in protocol.arbitrate(far, ctx)] == ['N1', 'N2', 'N4']

    near = [intent('N1'), intent('N3')]
    ctx.slot = 0
    assert [i.node.node_id for i in protocol.arbitrate(near, ctx)] == ['N1']
    ctx.slot = 1
    assert [i.node.node_id for i in protocol.arbitrate(near, ctx)] == ['N3']


@pytest.mark.parametrize('protocol', ['rateless_deluge', 'synapse'])
def test_coded_deluge_two_nodes(protocol):
    outcome = run(protocol, topology='line(2)', req_jitter=0)
    assert outcome.trace[:2] == ['0 N1 ADV page=0 rank=4 -> N2',
                                 '1 N2 NACK page=0 to=N1 count=4 -> N1']
    assert outcome.trace[2] == '2 N1 DATA page=0 rank=4 data -> N2'
    assert not outcome.timed_out
    # four codewords plus at least one slot of decoding
    assert outcome.completion_time >= 7
    if protocol == 'rateless_deluge' and outcome.node('N2').redundant_rx == 0:
        assert outcome.completion_time == 7


@pytest.mark.parametrize('protocol', ['flood', 'deluge', 'rateless_deluge', 'synapse', 'coop'])
def test_pages_arrive_intact(protocol):
    outcome = run(protocol, k=8, erasure=0.2 if protocol != 'flood' else 0.0, seed=5, max_slots=5000,
                  max_nack_retries=50)
    assert not outcome.timed_out
    source = outcome.node('N1').page
    for node in outcome.nodes:
        assert node.page == source


def test_synapse_decodes_cheaper():
    rateless, synapse = [], []
    for seed in range(10):
        rateless.append(run('rateless_deluge', k=32, erasure=0.1, seed=seed).decoder_row_ops)
        synapse.append(run('synapse', k=32, erasure=0.1, seed=seed).decoder_row_ops)
    assert np.mean(synapse) < np.mean(rateless)


# coop

def test_coop_lossless():
    outcome = run('coop', mac='fixed')
    assert outcome.completion_time == 6
    assert outcome.tx_total == 12
    assert outcome.nacks == 0
    assert [line.split()[1] for line in outcome.trace] == [
        'N1', 'N1', 'N2', 'N1', 'N3', 'N4', 'N1', 'N2', 'N5', 'N3', 'N4', 'N5']


def test_coop_motivating_example():
    outcome = run('coop', mac='fixed', drops=FIG1_DROPS)
    assert outcome.completion_time == 6
    assert outcome.nacks == 0
    # N2 and N3 fill each other's gaps by overhearing
    assert outcome.node('N2').innovative_from['N3'] >= 1
    assert outcome.node('N3').innovative_from['N2'] >= 1
    assert all(node.page == outcome.node('N1').page for node in outcome.nodes)


def test_coop_nack():
    outcome = run('coop', topology='line(2)', mac='fixed', max_nack_retries=50,
                  drops=frozenset({('N1', 'N2', 1)}))
    # due after N2's own round and the decode estimate, one short plus one overhead
    assert '8 N2 NACK page=0 count=2 -> N1' in outcome.trace
    assert not [line for line in outcome.trace if 'NACK' in line and int(line.split()[0]) < 8]
    assert outcome.node('N2').nacks_sent >= 1
    assert not outcome.timed_out
    assert outcome.completion_time > 10


def test_coop_repairs_follow_request():
    outcome = run('coop', topology='line(2)', mac='fixed', max_nack_retries=50,
                  drops=frozenset({('N1', 'N2', 1)}))
    repairs = [int(line.split()[0]) for line in outcome.trace if ' repair ' in line]
    assert repairs and min(repairs) == 9


def test_coop_gives_up_and_stalls(caplog):
    with caplog.at_level(logging.INFO, logger='coopoap.protocols.coop'):
        outcome = run('coop', topology='line(2)', erasure=1.0, max_nack_retries=2, max_slots=10_000)
    assert outcome.timed_out
    assert outcome.node('N2').nacks_sent == 2
    assert outcome.events < 200
    assert 'N2 gives up at rank 0 after 2 NACKs' in caplog.text


def coop_node(protocol, node_id, topology, page):
    timers = []
    ctx = SlotContext(topology=topology, cfg=protocol.cfg, page=page, mac_rng=None,
                      set_timer=lambda *args: timers.append(args))
    node = NodeRuntime(node_id=node_id, hop=topology.hop_of[node_id], index=topology.index[node_id],
                       rng=np.random.default_rng(0), k=protocol.cfg.k)
    return node, protocol.setup(node, ctx), ctx, timers


def test_coop_resumes_after_giving_up():
    cfg = ProtocolConfig(protocol='coop', k=4, L=8, max_nack_retries=0)
    protocol = load_protocol('coop')(cfg=cfg)
    page = Page.random(4, 8, np.random.default_rng(0))
    node, fsm, ctx, timers = coop_node(protocol, 'N2', load_topology('line(2)'), page)
    assert timers == [('N2', 'nack', 8)]

    protocol.on_timer(node, fsm, 'nack', ctx)
    assert fsm.gave_up and not fsm.nack_due
    assert protocol.idle(node, fsm)

    msg = Data(sender='N1', hop=0, sender_rank=4, role='round', payload=encode_unit(page, 0, GF2))
    protocol.receive_codeword(node, fsm, msg, ctx)
    assert node.rank == 1
    assert not fsm.gave_up
    assert not protocol.idle(node, fsm)
    assert timers[-1] == ('N2', 'nack', cfg.req_timeout)


def test_coop_overheard_repair_keeps_request():
    cfg = ProtocolConfig(protocol='coop', k=4, L=8)
    protocol = load_protocol('coop')(cfg=cfg)
    topo = load_topology('fig1')
    page = Page.random(4, 8, np.random.default_rng(0))
    node, fsm, ctx, _ = coop_node(protocol, 'N2', topo, page)
    node.decoder.absorb(encode_unit(page, 0, GF2))
    ctx.slot = 20

    nack = Nack(sender='N4', hop=2, k=4, count=3)
    assert coop_step(node, fsm, [nack], ctx, protocol) == 'repair'
    assert fsm.pending == 3

    # a peer's repair serves the same request but does not answer it for N2
    repair = Data(sender='N3', hop=1, sender_rank=4, role='repair', payload=encode_unit(page, 1, GF2))
    assert coop_step(node, fsm, [repair], ctx, protocol) == 'repair'
    assert fsm.pending == 3


def test_coop_one_sender_per_hop():
    outcome = run('coop', topology='grid(4)', k=8, erasure=0.2, seed=3, max_slots=5000)
    topo = load_topology('grid(4)')
    per_slot = {}
    for line in outcome.trace:
        slot, sender, kind = line.split()[:3]
        if kind == 'DATA':
            per_slot.setdefault(slot, []).append(topo.hop_of[sender])
    for hops in per_slot.values():
        assert len(hops) == len(set(hops))


def test_coop_turn_order():
    topo = load_topology('fig1')
    cfg = ProtocolConfig(protocol='coop', k=4, mac='fixed')
    protocol = load_protocol('coop')(cfg=cfg)
    ctx = SlotContext(topology=topo, cfg=cfg, page=None, set_timer=None,
                      mac_rng=np.random.default_rng(0))

    def intent(node_id):
        node = NodeRuntime(node_id=node_id, hop=topo.hop_of[node_id], index=topo.index[node_id],
                           rng=np.random.default_rng(0), k=4)
        return Intent(node=node, fsm=None, kind='round')

    intents = [intent('N2'), intent('N3'), intent('N5')]
    ctx.slot = 1
    assert [i.node.node_id for i in protocol.arbitrate(intents, ctx)] == ['N2', 'N5']
    ctx.slot = 2
    assert [i.node.node_id for i in protocol.arbitrate(intents, ctx)] == ['N3', 'N5']
    ctx.slot = 3
    assert [i.node.node_id for i in protocol.arbitrate(intents[:1], ctx)] == ['N2']


def test_coop_fewer_transmissions_than_flood():
    assert run('coop', mac='fixed').tx_total < run('flood').tx_total


def test_coop_sequential_rounds():
    outcome = run('coop', mac='fixed', pipeline=False)
    assert not outcome.timed_out
    assert [line.split()[:2] for line in outcome.trace[:4]] == [[str(s), 'N1'] for s in range(4)]
    # hop 1 takes over once the source's round is over
    for slot in range(4, 8):
        (line,) = lines_at(outcome, slot)
        assert line.split()[1] in ('N2', 'N3')
    assert outcome.completion_time > 8


@pytest.mark.parametrize('protocol', ['flood', 'deluge', 'rateless_deluge', 'synapse', 'coop'])
def test_source_sends_at_least_k(protocol):
    outcome = run(protocol, k=8, erasure=0.3 if protocol != 'flood' else 0.0, seed=2, max_slots=5000,
                  max_nack_retries=50)
    assert not outcome.timed_out
    data = [line for line in outcome.trace if line.split()[1:3] == ['N1', 'DATA']]
    assert len(data) >= 8
    assert outcome.tx_total >= 8


@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('protocol', ['deluge', 'rateless_deluge', 'synapse'])
def test_deluge_family_data_answers_requests(protocol, seed):
    outcome = run(protocol, topology='grid(4)', k=8, erasure=0.3, seed=seed, max_slots=5000)
    first_request = {}
    for line in outcome.trace:
        words = line.split()
        slot, sender, kind = int(words[0]), words[1], words[2]
        if kind == 'NACK':
            for receiver in words[words.index('->') + 1:]:
                first_request.setdefault(receiver, slot)
        elif kind == 'DATA':
            assert first_request.get(sender, slot) < slot, line


@pytest.mark.slow
def test_synapse_decodes_cheaper_k48():
    rateless, synapse = [], []
    for seed in range(100):
        rateless.append(run('rateless_deluge', k=48, erasure=0.1, seed=seed, max_slots=20000).decoder_row_ops)
        synapse.append(run('synapse', k=48, erasure=0.1, seed=seed, max_slots=20000).decoder_row_ops)
    assert np.mean(synapse) < np.mean(rateless)


@pytest.mark.slow
def test_coop_completes_at_high_erasure():
    for seed in range(30):
        outcome = run('coop', k=48, erasure=0.3, seed=seed, max_slots=20000)
        assert not outcome.timed_out, seed
        assert all(node.complete for node in outcome.nodes)

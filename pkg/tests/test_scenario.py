import pytest

from coopoap.codec import ConfigError
from coopoap.scenario import (Scenario, ScenarioError, bundled_scenarios,
                              load_scenario, parse_scenario,
                              serialize_scenario)

TEXT = """\
# a small sweep
name        smoke
topology    line(3)
erasure     0.1 0.25
collision   bernoulli 0.01
protocols   deluge coop
k           4 8
replicates  3
root_seed   17
mac         fixed
option      req_jitter 0
option      nack_batch 2
drop        N1 N2 0     # first packet
"""


def test_parse():
    s = parse_scenario(TEXT)
    assert s.name == 'smoke'
    assert s.topology == 'line(3)'
    assert s.erasure == (0.1, 0.25)
    assert (s.collision, s.p_c) == ('bernoulli', 0.01)
    assert s.protocols == ('deluge', 'coop')
    assert s.k == (4, 8)
    assert s.replicates == 3 and s.root_seed == 17
    assert s.options == (('req_jitter', 0), ('nack_batch', 2))
    assert s.drops == (('N1', 'N2', 0),)
    assert s.L == 20 and s.max_slots == 20000


def test_defaults():
    s = parse_scenario('topology fig1\n')
    assert s.name == 'unnamed'
    assert s.protocols == ('flood', 'deluge', 'rateless_deluge', 'synapse', 'coop')
    assert s.erasure == (0.0,)
    assert s.mac == 'shuffle'
    assert s.base_dir is None


def test_serialize_parses_back():
    s = parse_scenario(TEXT)
    assert parse_scenario(serialize_scenario(s)) == s
    s = s.replace(slot_seconds=0.05, collision='none', p_c=0.0)
    assert parse_scenario(serialize_scenario(s)) == s


@pytest.mark.parametrize('text, msg', [
    ('name x\n', 'no topology given'),
    ('topology fig1\nspeed 3\n', 'x.scenario:2: unknown key'),
    ('topology fig1\nk 4 eight\n', "x.scenario:2: bad value 'eight' for k"),
    ('topology fig1\nk\n', 'k needs at least one value'),
    ('topology fig1\nL 20 30\n', 'L takes exactly one value'),
    ('topology fig1\n\ncollision aloha\n', 'x.scenario:3: collision is either'),
    ('topology fig1\noption spatial 2\n', 'option takes one of'),
    ('topology fig1\ndrop N1 N2\n', 'drop takes sender, receiver and slot'),
    ('topology fig1\nprotocols coop trickle\n', "unknown protocol 'trickle'"),
    ('topology fig1\nerasure 1.5\n', 'erasure values must be in [0, 1]'),
    ('topology fig1\nreplicates 0\n', 'replicates must be at least 1'),
])
def test_parse_errors(text, msg):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(text, 'x.scenario')
    assert msg in str(e.value)


def test_error_location():
    with pytest.raises(ScenarioError) as e:
        parse_scenario('topology fig1\nk 0\n', 'x.scenario')
    assert str(e.value).startswith('x.scenario: ')

    with pytest.raises(ScenarioError) as e:
        parse_scenario('topology fig1\nfoo\n')
    assert e.value.lineno == 2 and e.value.path is None


def test_bundled():
    assert bundled_scenarios() == ['fig1.scripted', 'fig2.scenario', 'grid100.scenario']

    fig2 = load_scenario('fig2')
    assert fig2.name == 'fig2'
    assert fig2.k == (4, 8, 16, 32, 48)
    assert fig2.erasure == (0.1, 0.2, 0.3, 0.5)
    assert fig2.replicates == 100

    scripted = load_scenario('fig1.scripted')
    assert scripted.mac == 'fixed'
    assert set(scripted.drops) == {('N1', 'N2', 1), ('N1', 'N3', 0), ('N1', 'N3', 3)}
    assert load_scenario('grid100').load_topology().max_hop == 18


def test_load_unknown():
    with pytest.raises(ScenarioError) as e:
        load_scenario('nonexistent')
    assert 'fig2.scenario' in str(e.value)


def test_load_file_with_topology_document(tmp_path):
    (tmp_path / 'pair.topo').write_text('source A\nlink A B erasure=0.5\n')
    (tmp_path / 'pair.scenario').write_text('topology pair.topo\nk 2\n')

    s = load_scenario(str(tmp_path / 'pair.scenario'))
    assert s.base_dir == str(tmp_path)
    topo = s.load_topology()
    assert topo.nodes == ['A', 'B']
    assert topo.erasure('A', 'B', 0.0) == 0.5


def test_channel():
    s = parse_scenario(TEXT)
    channel = s.channel(0.25)
    assert channel.default_erasure == 0.25
    assert channel.collision == 'bernoulli' and channel.p_c == 0.01
    assert channel.drops == frozenset({('N1', 'N2', 0)})


def test_protocol_config():
    s = parse_scenario(TEXT).replace(lt_c=0.2, lt_delta=0.1)
    cfg = s.protocol_config('coop', 8)
    assert cfg.k == 8 and cfg.mac == 'fixed'
    assert cfg.req_jitter == 0 and cfg.nack_batch == 2

    dist = s.protocol_config('synapse', 8).dist
    assert (dist.kind, dist.c, dist.delta) == ('sparse_lt', 0.2, 0.1)
    assert s.protocol_config('deluge', 8).dist is None


def test_sequential_rounds_option():
    s = parse_scenario('topology fig1\noption pipeline 0\n')
    assert s.protocol_config('coop', 4).pipeline is False
    assert parse_scenario('topology fig1\n').protocol_config('coop', 4).pipeline is True


def test_bad_option_value():
    s = Scenario(topology='fig1', options=(('nack_batch', -1),))
    with pytest.raises(ConfigError):
        s.protocol_config('coop', 4)

"""Experiment scenarios.

A scenario file is plain text, one `key value...` line per setting, `#`
starts a comment.  Every key is optional except `topology`:

    name        fig2
    topology    fig1                 # built-in, or a topology document path
    erasure     0.1 0.2 0.3 0.5      # swept
    collision   none                 # or: bernoulli <p_c>
    protocols   flood deluge rateless_deluge synapse coop
    k           4 8 16 32 48         # swept
    L           20
    replicates  100
    root_seed   0
    max_slots   20000
    mac         shuffle              # or: fixed
    lt_c        0.1
    lt_delta    0.5
    slot_seconds 0.05                # presentation only
    option      req_jitter 0         # any integer ProtocolConfig field
    drop        N1 N2 1              # scripted loss: sender receiver slot

`drop` and `option` may repeat.  A relative topology path is resolved
against the scenario file's directory.

Bundled scenarios live in `coopoap.scenarios` and can be loaded by file name,
with or without the `.scenario` suffix.

"""
import logging

from dataclasses import dataclass, fields
from importlib.resources import files
from pathlib import Path

from coopoap.codec import DegreeDistribution
from coopoap.netmodel import ChannelConfig, load_topology
from coopoap.protocols import PROTOCOL_DEFAULTS, ProtocolConfig

log = logging.getLogger(__name__)

__all__ = ['Scenario', 'ScenarioError', 'parse_scenario', 'serialize_scenario',
           'load_scenario', 'bundled_scenarios']

ALL_PROTOCOLS = ('flood', 'deluge', 'rateless_deluge', 'synapse', 'coop')

# ProtocolConfig fields a scenario may set with `option`
OPTIONS = ('slots_per_codeword', 'decode_estimate', 'adv_period', 'req_jitter',
           'req_timeout', 'nack_batch', 'max_nack_retries', 'budget_margin',
           'decode_speed', 'gf256_weight', 'spatial_reuse', 'pipeline')


class ScenarioError(ValueError):
    def __init__(self, msg, path=None, lineno=None):
        where = ':'.join(str(part) for part in (path, lineno) if part is not None)
        super().__init__(f'{where}: {msg}' if where else msg)
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True, kw_only=True)
class Scenario:
    """A comparison to run: every protocol, for every k and erasure, for
    `replicates` seeds.

    Replicate r runs with seed root_seed + r, for every protocol alike.

    """
    name: str = 'unnamed'
    topology: str
    erasure: tuple = (0.0,)
    collision: str = 'none'
    p_c: float = 0.0
    protocols: tuple = ALL_PROTOCOLS
    k: tuple = (4,)
    L: int = 20
    replicates: int = 100
    root_seed: int = 0
    max_slots: int = 20000
    mac: str = 'shuffle'
    lt_c: float = 0.1
    lt_delta: float = 0.5
    slot_seconds: float | None = None
    options: tuple = ()
    drops: tuple = ()
    base_dir: str | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ScenarioError(f'replicates must be at least 1, got {self.replicates}')
        if not self.protocols:
            raise ScenarioError('no protocols to compare')
        for name in self.protocols:
            if name not in PROTOCOL_DEFAULTS:
                raise ScenarioError(f'unknown protocol {name!r}')
        if not self.k or min(self.k) < 1:
            raise ScenarioError(f'k values must be at least 1, got {self.k}')
        if not self.erasure or not all(0 <= e <= 1 for e in self.erasure):
            raise ScenarioError(f'erasure values must be in [0, 1], got {self.erasure}')
        if self.collision not in ('none', 'bernoulli'):
            raise ScenarioError(f'unknown collision model {self.collision!r}')
        if self.max_slots < 1:
            raise ScenarioError(f'max_slots must be positive, got {self.max_slots}')

    def load_topology(self):
        if (self.base_dir is not None and (Path(self.base_dir) / self.topology).is_file()):
            return load_topology((Path(self.base_dir) / self.topology).read_text())
        if Path(self.topology).is_file():
            return load_topology(Path(self.topology).read_text())
        return load_topology(self.topology)

    def channel(self, erasure):
        return ChannelConfig(default_erasure=erasure, collision=self.collision, p_c=self.p_c,
                             drops=frozenset(self.drops))

    def protocol_config(self, protocol, k):
        dist = None
        if protocol == 'synapse':
            dist = DegreeDistribution(kind='sparse_lt', c=self.lt_c, delta=self.lt_delta)
        return ProtocolConfig(protocol=protocol, k=k, L=self.L, dist=dist, mac=self.mac,
                              **dict(self.options))

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return Scenario(**values)


def _parse_line(key, args, values, err):
    def one(convert=str):
        if len(args) != 1:
            raise err(f'{key} takes exactly one value')
        return number(args[0], convert)

    def many(convert):
        if not args:
            raise err(f'{key} needs at least one value')
        return tuple(number(arg, convert) for arg in args)

    def number(token, convert):
        try:
            return convert(token)
        except ValueError:
            raise err(f'bad value {token!r} for {key}') from None

    match key:
        case 'name' | 'topology' | 'mac':
            values[key] = one()
        case 'L' | 'replicates' | 'root_seed' | 'max_slots':
            values[key] = one(int)
        case 'lt_c' | 'lt_delta' | 'slot_seconds':
            values[key] = one(float)
        case 'erasure':
            values[key] = many(float)
        case 'k':
            values[key] = many(int)
        case 'protocols':
            values[key] = many(str)
        case 'collision':
            if args == ['none']:
                values['collision'], values['p_c'] = 'none', 0.0
            elif len(args) == 2 and args[0] == 'bernoulli':
                values['collision'], values['p_c'] = 'bernoulli', number(args[1], float)
            else:
                raise err('collision is either "none" or "bernoulli <p_c>"')
        case 'option':
            if len(args) != 2 or args[0] not in OPTIONS:
                raise err(f'option takes one of {", ".join(OPTIONS)} and an integer')
            values.setdefault('options', []).append((args[0], number(args[1], int)))
        case 'drop':
            if len(args) != 3:
                raise err('drop takes sender, receiver and slot')
            values.setdefault('drops', []).append((args[0], args[1], number(args[2], int)))
        case _:
            raise err(f'unknown key {key!r}')


def parse_scenario(text, path=None):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split('#', 1)[0].split()
        if not tokens:
            continue
        err = lambda msg, lineno=lineno: ScenarioError(msg, path, lineno)
        _parse_line(tokens[0], tokens[1:], values, err)

    if 'topology' not in values:
        raise ScenarioError('no topology given', path)
    for key in ('options', 'drops'):
        if key in values:
            values[key] = tuple(values[key])
    if path is not None:
        values['base_dir'] = str(Path(path).parent)

    try:
        return Scenario(**values)
    except ScenarioError as e:
        raise ScenarioError(str(e), path) from None


def serialize_scenario(s):
    """Scenario file text for `s`, parsing it gives `s` back."""
    lines = [
        f'name {s.name}',
        f'topology {s.topology}',
        f'erasure {" ".join(repr(e) for e in s.erasure)}',
        'collision none' if s.collision == 'none' else f'collision bernoulli {s.p_c!r}',
        f'protocols {" ".join(s.protocols)}',
        f'k {" ".join(str(k) for k in s.k)}',
        f'L {s.L}',
        f'replicates {s.replicates}',
        f'root_seed {s.root_seed}',
        f'max_slots {s.max_slots}',
        f'mac {s.mac}',
        f'lt_c {s.lt_c!r}',
        f'lt_delta {s.lt_delta!r}',
    ]
    if s.slot_seconds is not None:
        lines.append(f'slot_seconds {s.slot_seconds!r}')
    lines.extend(f'option {name} {value}' for name, value in s.options)
    lines.extend(f'drop {sender} {receiver} {slot}' for sender, receiver, slot in s.drops)
    return '\n'.join(lines) + '\n'


def bundled_scenarios():
    return sorted(f.name for f in files('coopoap.scenarios').iterdir()
                  if f.name.endswith(('.scenario', '.scripted')))


def load_scenario(name):
    """Load a scenario file, or a bundled one by name."""
    path = Path(name)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as e:
            raise ScenarioError(f'cannot read: {e.strerror}', name) from e
        return parse_scenario(text, str(path))

    for candidate in (name, f'{name}.scenario'):
        if candidate in bundled_scenarios():
            log.debug('using bundled scenario %s', candidate)
            return parse_scenario((files('coopoap.scenarios') / candidate).read_text(), candidate)

    raise ScenarioError(f'no such scenario, bundled are: {", ".join(bundled_scenarios())}', name)

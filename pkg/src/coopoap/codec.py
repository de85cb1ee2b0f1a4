"""The coding engine shared by all coded protocols.

A `Page` holds k source packets of L bytes each.  `encode` turns it into
`Codeword`s, a coefficient vector G_j plus the payload G_j . S^T.  Receivers
feed codewords into a `DecoderState`, which keeps them in row echelon form
as they arrive (`absorb`), detects linearly dependent ones, and can already
produce fresh combinations (`recode`) long before it is able to `decode`.

Coefficient vectors live in two representations, chosen by the field:

    GF(2)      a Python int used as a bitset, bit j is the coefficient of
               packet j.  Row addition is a single XOR over all k
               coefficients, `CoefficientVector.words()` gives the 64 bit
               packed form.

    GF(2^8)    a numpy uint8 array of length k.

Payloads are always numpy uint8 arrays of length L.

Row operations are counted as `coef_ops` and `payload_ops` separately, so the
k^3 and k^2 L parts of the decoding cost stay apart in reports.

"""
import math

from dataclasses import dataclass, field as dataclass_field
from enum import Enum
from functools import lru_cache

import numpy as np

from coopoap.galois import GF2, FieldSpec, build_tables

__all__ = ['Page', 'CoefficientVector', 'Codeword', 'DecoderState',
           'DegreeDistribution', 'Reception', 'CodecError', 'DimensionError',
           'InsufficientRankError', 'NothingToRecodeError', 'ConfigError',
           'encode', 'encode_unit', 'absorb', 'decode', 'recode',
           'sample_degree', 'robust_soliton', 'expected_overhead_trial',
           'expected_overhead',
           'gf2_rank']

# Draws `recode` makes before giving up on a combination innovative for `avoid`
MAX_REDRAWS = 64

# Trials behind the overhead estimate of sparse codes
OVERHEAD_TRIALS = 200


class CodecError(ValueError):
    pass


class DimensionError(CodecError):
    """Codeword does not fit the decoder (page, k, L or field differ)."""


class InsufficientRankError(CodecError):
    def __init__(self, rank, k):
        super().__init__(f'insufficient rank {rank} of {k}, cannot decode')
        self.rank = rank
        self.k = k


class NothingToRecodeError(CodecError):
    pass


class ConfigError(ValueError):
    pass


class Reception(Enum):
    INNOVATIVE = 'innovative'
    REDUNDANT = 'redundant'


@dataclass(kw_only=True)
class Page:
    """A page of k packets, L bytes each.

    Attributes
    ----------
    packets: np.ndarray
        uint8 array of shape (k, L).

    """
    page_id: int = 0
    packets: np.ndarray

    def __post_init__(self):
        self.packets = np.asarray(self.packets, dtype=np.uint8)
        if self.packets.ndim != 2 or self.packets.shape[0] < 1:
            raise CodecError(f'page needs a (k, L) packet array, got shape {self.packets.shape}')

    @property
    def k(self):
        return self.packets.shape[0]

    @property
    def L(self):
        return self.packets.shape[1]

    @classmethod
    def from_bytes(cls, data, L, page_id=0):
        """Segment `data` into L byte packets, zero padding the last one."""
        if L < 1:
            raise CodecError(f'packet length must be positive, got {L}')
        k = max(1, math.ceil(len(data) / L))
        buf = np.zeros(k * L, dtype=np.uint8)
        buf[:len(data)] = np.frombuffer(bytes(data), dtype=np.uint8)
        return cls(page_id=page_id, packets=buf.reshape(k, L))

    @classmethod
    def random(cls, k, L, rng, page_id=0):
        return cls(page_id=page_id, packets=rng.integers(0, 256, size=(k, L), dtype=np.uint8))

    def __eq__(self, other):
        if not isinstance(other, Page):
            return NotImplemented
        return self.page_id == other.page_id and np.array_equal(self.packets, other.packets)


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """G_j, the coefficients of one codeword.

    `data` is an int bitset for GF(2) and a uint8 array for GF(2^8), see the
    module docstring.

    """
    field: FieldSpec
    k: int
    data: object

    @classmethod
    def from_list(cls, values, field=GF2):
        k = len(values)
        if field.order == 2:
            return cls(field, k, sum(1 << i for i, v in enumerate(values) if v))
        return cls(field, k, np.array(values, dtype=np.uint8))

    def to_list(self):
        if self.field.order == 2:
            return [(self.data >> i) & 1 for i in range(self.k)]
        return [int(v) for v in self.data]

    def words(self):
        """GF(2) coefficients packed 64 to a uint64 word, packet 0 in bit 0."""
        if self.field.order != 2:
            raise CodecError('word packing only applies to GF(2) vectors')
        n = (self.k + 63) // 64
        return np.array([(self.data >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(n)],
                        dtype=np.uint64)

    def is_zero(self):
        return _is_zero(self.field, self.data)

    def __eq__(self, other):
        if not isinstance(other, CoefficientVector):
            return NotImplemented
        if (self.field, self.k) != (other.field, other.k):
            return False
        if self.field.order == 2:
            return self.data == other.data
        return np.array_equal(self.data, other.data)

    def __str__(self):
        if self.field.order == 2:
            return ''.join(str(b) for b in self.to_list())
        return ' '.join(f'{v:02x}' for v in self.data)


@dataclass(frozen=True, eq=False)
class Codeword:
    page_id: int
    coefficients: CoefficientVector
    payload: np.ndarray

    @property
    def header_bits(self):
        """Size of the coefficient header, k log2(q) bits."""
        return self.coefficients.k * self.coefficients.field.bits


# Row arithmetic.  Every helper takes the field first and returns new objects
# rather than mutating, except the `_iadd_*` payload helpers.

def _is_zero(fs, v):
    return v == 0 if fs.order == 2 else not v.any()


def _leading(fs, v):
    if fs.order == 2:
        return (v & -v).bit_length() - 1 if v else None
    nz = np.flatnonzero(v)
    return int(nz[0]) if nz.size else None


def _coeff(fs, v, col):
    if fs.order == 2:
        return (v >> col) & 1
    return int(v[col])


def _nonzero_columns(fs, v):
    if fs.order == 2:
        cols = []
        while v:
            low = v & -v
            cols.append(low.bit_length() - 1)
            v ^= low
        return cols
    return [int(c) for c in np.flatnonzero(v)]


def _add_scaled(fs, v, c, w):
    """v + c * w over the coefficient vectors."""
    if fs.order == 2:
        return v ^ w if c else v
    return v ^ build_tables(fs).mul[c][w]


def _scale(fs, c, v):
    if fs.order == 2:
        return v if c else 0
    return build_tables(fs).mul[c][v]


def _iadd_scaled(fs, payload, c, other):
    """payload += c * other, in place."""
    if fs.order == 2 or c == 1:
        np.bitwise_xor(payload, other, out=payload)
    else:
        np.bitwise_xor(payload, build_tables(fs).mul[c][other], out=payload)


def _random_vector(fs, k, rng):
    if fs.order == 2:
        return int.from_bytes(rng.bytes((k + 7) // 8), 'little') & ((1 << k) - 1)
    return rng.integers(0, 256, size=k, dtype=np.uint8)


def _random_nonzero_vector(fs, k, rng):
    while True:
        v = _random_vector(fs, k, rng)
        if not _is_zero(fs, v):
            return v


@dataclass(frozen=True, kw_only=True)
class DegreeDistribution:
    """How many source packets a codeword combines.

    Parameters
    ----------
    kind: str = 'uniform_rlc'
        'uniform_rlc' draws every coefficient uniformly (dense random linear
        code), 'sparse_lt' draws a degree from the robust soliton
        distribution and combines that many packets.

    c, delta: float = 0.1, 0.5
        Robust soliton parameters, only used by 'sparse_lt'.

    """
    kind: str = 'uniform_rlc'
    c: float = 0.1
    delta: float = 0.5

    def __post_init__(self):
        if self.kind not in ('uniform_rlc', 'sparse_lt'):
            raise ConfigError(f'unknown degree distribution {self.kind!r}')
        if not self.c > 0:
            raise ConfigError(f'robust soliton c must be positive, got {self.c}')
        if not 0 < self.delta < 1:
            raise ConfigError(f'robust soliton delta must be in (0, 1), got {self.delta}')

    def pmf(self, k):
        """Probabilities of degrees 1..k as an array of length k."""
        if self.kind == 'uniform_rlc':
            p = np.zeros(k)
            p[-1] = 1.0
            return p
        return robust_soliton(k, self.c, self.delta)

    def mean(self, k):
        return float(np.dot(np.arange(1, k + 1), self.pmf(k)))


@lru_cache(maxsize=256)
def robust_soliton(k, c, delta):
    if k == 1:
        return np.ones(1)

    d = np.arange(1, k + 1, dtype=float)
    rho = np.empty(k)
    rho[0] = 1 / k
    rho[1:] = 1 / (d[1:] * (d[1:] - 1))

    R = c * math.log(k / delta) * math.sqrt(k)
    spike = min(k, max(1, round(k / R)))
    tau = np.zeros(k)
    tau[:spike - 1] = R / (d[:spike - 1] * k)
    tau[spike - 1] = max(0.0, R * math.log(R / delta) / k)

    mu = rho + tau
    mu /= mu.sum()
    mu.flags.writeable = False
    return mu


def sample_degree(dist, k, rng):
    if k < 1:
        raise ConfigError(f'k must be at least 1, got {k}')
    if dist.kind == 'uniform_rlc' or k == 1:
        return k
    return int(rng.choice(k, p=dist.pmf(k))) + 1


def _combine(fs, page, v):
    """Payload for coefficient vector `v` over the page's packets."""
    payload = np.zeros(page.L, dtype=np.uint8)
    for col in _nonzero_columns(fs, v):
        _iadd_scaled(fs, payload, _coeff(fs, v, col), page.packets[col])
    return payload


def _draw_vector(fs, k, dist, rng):
    if dist.kind == 'uniform_rlc':
        return _random_nonzero_vector(fs, k, rng)

    degree = sample_degree(dist, k, rng)
    cols = rng.choice(k, size=degree, replace=False)
    if fs.order == 2:
        return sum(1 << int(col) for col in cols)
    v = np.zeros(k, dtype=np.uint8)
    v[cols] = rng.integers(1, 256, size=degree, dtype=np.uint8)
    return v


def encode(page, rng, dist=DegreeDistribution(), field=GF2):
    """Draw one codeword for `page`.

    The all-zero coefficient vector is never returned.

    """
    v = _draw_vector(field, page.k, dist, rng)
    return Codeword(page.page_id, CoefficientVector(field, page.k, v), _combine(field, page, v))


def encode_unit(page, index, field=GF2):
    """The native packet `index` as a codeword with a unit coefficient vector."""
    k = page.k
    if field.order == 2:
        v = 1 << index
    else:
        v = np.zeros(k, dtype=np.uint8)
        v[index] = 1
    return Codeword(page.page_id, CoefficientVector(field, k, v), page.packets[index].copy())


def encode_with(page, coefficients):
    """Codeword for explicitly given coefficients."""
    fs = coefficients.field
    return Codeword(page.page_id, coefficients, _combine(fs, page, coefficients.data))


@dataclass(kw_only=True)
class DecoderState:
    """Incremental Gaussian elimination over received codewords.

    Rows are kept in row echelon form keyed by their leading column, and
    for GF(2^8) normalized to a leading coefficient of 1.  Only forward
    elimination happens on `absorb`, back substitution is left to `decode`.

    Attributes
    ----------
    rank: int
        Number of stored rows.

    redundant: int
        Codewords dropped as linearly dependent, the delta count.

    coef_ops, payload_ops: int
        Row combinations over the coefficient and the payload part.

    """
    field: FieldSpec = GF2
    k: int
    L: int
    page_id: int = 0
    redundant: int = 0
    coef_ops: int = 0
    payload_ops: int = 0
    _rows: dict = dataclass_field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise CodecError(f'k must be at least 1, got {self.k}')

    @property
    def rank(self):
        return len(self._rows)

    @property
    def row_ops(self):
        return self.coef_ops + self.payload_ops

    @property
    def complete(self):
        return self.rank == self.k

    @property
    def rows(self):
        """Stored rows as (CoefficientVector, payload) pairs, by leading column."""
        return [(CoefficientVector(self.field, self.k, v), p)
                for _, (v, p) in sorted(self._rows.items())]

    def _check(self, cw):
        cv = cw.coefficients
        if cw.page_id != self.page_id:
            raise DimensionError(f'codeword for page {cw.page_id}, decoder holds page {self.page_id}')
        if cv.field != self.field:
            raise DimensionError(f'codeword over {cv.field}, decoder over {self.field}')
        if cv.k != self.k:
            raise DimensionError(f'codeword has k={cv.k}, decoder k={self.k}')
        if len(cw.payload) != self.L:
            raise DimensionError(f'payload of {len(cw.payload)} bytes, decoder L={self.L}')

    def _reduce(self, v, payload=None, count=True):
        fs = self.field
        while (col := _leading(fs, v)) is not None and col in self._rows:
            c = _coeff(fs, v, col)
            row, row_payload = self._rows[col]
            v = _add_scaled(fs, v, c, row)
            if count:
                self.coef_ops += 1
            if payload is not None:
                _iadd_scaled(fs, payload, c, row_payload)
                if count:
                    self.payload_ops += 1
        return v, col

    def innovative(self, coefficients):
        """Would `coefficients` raise the rank?  Leaves the state and counters alone."""
        _, col = self._reduce(coefficients.data, count=False)
        return col is not None

    def absorb(self, cw):
        self._check(cw)
        fs = self.field
        payload = np.array(cw.payload, dtype=np.uint8)
        v, col = self._reduce(cw.coefficients.data, payload)

        if col is None:
            self.redundant += 1
            return Reception.REDUNDANT

        c = _coeff(fs, v, col)
        if c != 1:
            scale = int(build_tables(fs).inv[c])
            v = _scale(fs, scale, v)
            payload = build_tables(fs).mul[scale][payload]
            self.coef_ops += 1
            self.payload_ops += 1
        self._rows[col] = (v, payload)
        return Reception.INNOVATIVE

    def decode(self):
        """Back substitution over the echelon rows, returns the page."""
        if self.rank < self.k:
            raise InsufficientRankError(self.rank, self.k)

        fs = self.field
        solved = np.zeros((self.k, self.L), dtype=np.uint8)
        for i in range(self.k - 1, -1, -1):
            v, payload = self._rows[i]
            out = payload.copy()
            for col in _nonzero_columns(fs, v):
                if col == i:
                    continue
                _iadd_scaled(fs, out, _coeff(fs, v, col), solved[col])
                self.coef_ops += 1
                self.payload_ops += 1
            solved[i] = out
        return Page(page_id=self.page_id, packets=solved)

    def recode(self, rng, avoid=None):
        """A random combination of the stored rows.

        With `avoid` (another DecoderState), redraw until the result is
        innovative for it; returns None if no such combination turns up.

        """
        if self.rank == 0:
            raise NothingToRecodeError('nothing to recode, rank is 0')

        fs = self.field
        rows = list(self._rows.values())
        for _ in range(MAX_REDRAWS):
            picks = _random_nonzero_vector(fs, len(rows), rng)
            v = 0 if fs.order == 2 else np.zeros(self.k, dtype=np.uint8)
            payload = np.zeros(self.L, dtype=np.uint8)
            for j in _nonzero_columns(fs, picks):
                c = _coeff(fs, picks, j)
                v = _add_scaled(fs, v, c, rows[j][0])
                _iadd_scaled(fs, payload, c, rows[j][1])
            cv = CoefficientVector(fs, self.k, v)
            if avoid is None or avoid.innovative(cv):
                return Codeword(self.page_id, cv, payload)
        return None


def absorb(state, cw):
    return state.absorb(cw)


def decode(state):
    return state.decode()


def recode(state, rng):
    return state.recode(rng)


def expected_overhead_trial(k, field, trials, rng, dist=DegreeDistribution()):
    """Monte Carlo mean of codewords received beyond k before full rank.

    Codewords are drawn exactly as `encode` draws them for `dist`, the
    all-zero vector rejected.

    """
    if trials < 1:
        raise ConfigError(f'trials must be at least 1, got {trials}')

    extra = 0
    for _ in range(trials):
        state = DecoderState(field=field, k=k, L=0)
        received = 0
        while state.rank < k:
            v = _draw_vector(field, k, dist, rng)
            state.absorb(Codeword(0, CoefficientVector(field, k, v), np.zeros(0, dtype=np.uint8)))
            received += 1
        extra += received - k
    return extra / trials


@lru_cache(maxsize=64)
def expected_overhead(k, field, dist):
    """Expected codewords beyond k a fresh decoder needs for full rank.

    Exact for dense codes: at rank r a nonzero draw is innovative with
    probability (q^k - q^r) / (q^k - 1), giving about 1.6 for GF(2) and
    0.004 for GF(2^8).  Sparse codes are estimated from `OVERHEAD_TRIALS`
    seeded runs of `expected_overhead_trial`.

    """
    if k < 1:
        raise ConfigError(f'k must be at least 1, got {k}')
    if dist.kind == 'uniform_rlc' or k == 1:
        q = field.order
        return sum((q ** k - 1) / (q ** k - q ** r) for r in range(k)) - k
    return expected_overhead_trial(k, field, OVERHEAD_TRIALS, np.random.default_rng(k), dist=dist)


def gf2_rank(rows):
    """Rank of GF(2) rows given as int bitsets."""
    pivots = {}
    for v in rows:
        while v:
            low = v & -v
            if low not in pivots:
                pivots[low] = v
                break
            v ^= pivots[low]
    return len(pivots)

"""Finite field arithmetic over GF(2) and GF(2^8).

Two fields are supported, both of characteristic 2, so addition is always a
plain XOR.  GF(2) needs nothing else: multiplication is an AND.  GF(2^8)
multiplication is polynomial multiplication modulo a degree-8 reduction
polynomial, done through precomputed tables:

    >>> tables = build_tables(GF256)
    >>> int(tables.mul[0x53, 0xCA])
    1

`FieldElement` is the checked, user-facing value type.  The coding engine in
`coopoap.codec` works on raw ints and numpy arrays and only uses `MulTables`.

"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ['FieldSpec', 'FieldElement', 'MulTables', 'GF2', 'GF256',
           'FieldError', 'FieldMismatchError', 'FieldDivisionError',
           'add', 'mul', 'inv', 'poly_mul', 'build_tables']

DEFAULT_POLYNOMIAL = 0x11B  # x^8 + x^4 + x^3 + x + 1


class FieldError(ValueError):
    """Invalid field specification or element."""


class FieldMismatchError(FieldError):
    """Operands belong to different fields."""


class FieldDivisionError(ZeroDivisionError):
    """Inverse of zero requested."""


def poly_mul(a, b, polynomial=DEFAULT_POLYNOMIAL):
    """Carry-less multiply of two bytes, reduced modulo `polynomial`.

    This is the slow reference path.  The tables are built from it and the
    tests check the tables against it.

    """
    result = 0
    for _ in range(8):
        if b & 1:
            result ^= a
        carry = a & 0x80
        a = (a << 1) & 0xFF
        if carry:
            a ^= polynomial & 0xFF
        b >>= 1
    return result


def _poly_mod(a, m):
    """Remainder of GF(2)[x] polynomial `a` divided by `m`."""
    dm = m.bit_length()
    while a and a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def _is_irreducible(polynomial):
    # A degree-8 polynomial is reducible iff it has a factor of degree <= 4.
    for divisor in range(2, 1 << 5):
        if _poly_mod(polynomial, divisor) == 0:
            return False
    return True


@dataclass(frozen=True, kw_only=True)
class FieldSpec:
    """Which field to compute in.

    Parameters
    ----------
    order: int = 2
        The field size q, either 2 or 256.

    polynomial: int = 0x11B
        Reduction polynomial as a bitmask.  Only used for q = 256, where it
        must be of degree 8 and irreducible over GF(2).

    """
    order: int = 2
    polynomial: int = DEFAULT_POLYNOMIAL

    def __post_init__(self):
        if self.order not in (2, 256):
            raise FieldError(f'unsupported field order {self.order}, expected 2 or 256')
        if self.order == 256:
            if self.polynomial.bit_length() != 9:
                raise FieldError(f'reduction polynomial {self.polynomial:#x} is not of degree 8')
            if not _is_irreducible(self.polynomial):
                raise FieldError(f'reduction polynomial {self.polynomial:#x} is reducible')

    @property
    def bits(self):
        """Bits per symbol, log2(q)."""
        return 1 if self.order == 2 else 8

    def __str__(self):
        return f'GF({self.order})'


GF2 = FieldSpec(order=2)
GF256 = FieldSpec(order=256)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldSpec = GF2

    def __post_init__(self):
        if not 0 <= self.value < self.field.order:
            raise FieldError(f'{self.value} is not an element of {self.field}')

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __int__(self):
        return self.value


@dataclass(frozen=True, kw_only=True)
class MulTables:
    """Precomputed GF(2^8) lookup tables.

    Attributes
    ----------
    exp, log: np.ndarray
        Antilog and log tables over the generator `generator`.  `exp` has 510
        entries so that `exp[log[a] + log[b]]` never needs a modulo.

    mul: np.ndarray
        The full q x q product table, `mul[a, b] == a * b`.  Row `mul[c]` is
        what the codec uses to scale a whole payload by `c` in one lookup.

    inv: np.ndarray
        Multiplicative inverses, `inv[0]` is a meaningless 0.

    For q = 2 all tables are empty.

    """
    field: FieldSpec
    generator: int = 0
    exp: np.ndarray
    log: np.ndarray
    mul: np.ndarray
    inv: np.ndarray

    def mul_log(self, a, b):
        """Multiply via log/antilog, the 2 x q space alternative to `mul`."""
        if a == 0 or b == 0:
            return 0
        return int(self.exp[int(self.log[a]) + int(self.log[b])])

    @property
    def nbytes(self):
        return {'log_antilog': self.exp.nbytes + self.log.nbytes,
                'full': self.mul.nbytes,
                'inverse': self.inv.nbytes}


def _find_generator(polynomial):
    for g in range(2, 256):
        x, order = g, 1
        while x != 1:
            x = poly_mul(x, g, polynomial)
            order += 1
        if order == 255:
            return g
    raise FieldError(f'no generator found for {polynomial:#x}')  # pragma: no cover


@lru_cache(maxsize=None)
def build_tables(spec):
    """Build (and cache) the multiplication tables for `spec`.

    Returns empty tables for GF(2), there is nothing to look up.

    """
    if spec.order == 2:
        empty = np.zeros(0, dtype=np.uint8)
        return MulTables(field=spec, exp=empty, log=empty,
                         mul=np.zeros((0, 0), dtype=np.uint8), inv=empty)

    g = _find_generator(spec.polynomial)
    exp = np.zeros(510, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = exp[i + 255] = x
        log[x] = i
        x = poly_mul(x, g, spec.polynomial)

    mul = np.zeros((256, 256), dtype=np.uint8)
    nz = np.arange(1, 256)
    mul[1:, 1:] = exp[log[nz][:, None] + log[nz][None, :]]

    inv = np.zeros(256, dtype=np.uint8)
    inv[1:] = exp[(255 - log[nz]) % 255]

    for table in (exp, log, mul, inv):
        table.flags.writeable = False

    return MulTables(field=spec, generator=g, exp=exp, log=log, mul=mul, inv=inv)


def _check(a, b):
    if a.field != b.field:
        raise FieldMismatchError(f'cannot combine {a.field} and {b.field} elements')


def add(a, b):
    _check(a, b)
    return FieldElement(a.value ^ b.value, a.field)


def mul(a, b):
    _check(a, b)
    if a.field.order == 2:
        return FieldElement(a.value & b.value, a.field)
    return FieldElement(int(build_tables(a.field).mul[a.value, b.value]), a.field)


def inv(a):
    if a.value == 0:
        raise FieldDivisionError(f'division by zero in {a.field}')
    if a.field.order == 2:
        return a
    return FieldElement(int(build_tables(a.field).inv[a.value]), a.field)

"""Polynomial arithmetic over GF(2).

Polynomials are plain Python ints: bit ``i`` is the coefficient of ``x**i``.
A modulus is either a dense int or a sparse tuple of set exponents
(``(n, a, b, c, 0)`` for ``x^n + x^a + x^b + x^c + 1``).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

Exponents = Sequence[int]


def exps_to_int(exps: Iterable[int]) -> int:
    out = 0
    for k in exps:
        out ^= 1 << k
    return out


def int_to_exps(poly: int) -> tuple[int, ...]:
    """Set exponents of ``poly``, highest first."""
    exps = []
    while poly:
        k = poly.bit_length() - 1
        exps.append(k)
        poly ^= 1 << k
    return tuple(exps)


def degree(poly: int) -> int:
    return poly.bit_length() - 1


def clmul(a: int, b: int) -> int:
    """Carry-less product of two polynomials."""
    if a.bit_length() < b.bit_length():
        a, b = b, a
    if b.bit_length() > 64:
        return _clmul_windowed(a, b)
    # nibble window: a * (0..15)
    a2, a4, a8 = a << 1, a << 2, a << 3
    t = (0, a, a2, a2 ^ a, a4, a4 ^ a, a4 ^ a2, a4 ^ a2 ^ a,
         a8, a8 ^ a, a8 ^ a2, a8 ^ a2 ^ a, a8 ^ a4, a8 ^ a4 ^ a, a8 ^ a4 ^ a2, a8 ^ a4 ^ a2 ^ a)  # fmt: skip
    res = 0
    shift = 0
    while b:
        res ^= t[b & 15] << shift
        b >>= 4
        shift += 4
    return res


def _clmul_windowed(a: int, b: int) -> int:
    # byte-window table of a * (0..255)
    table = [0] * 256
    for i in range(1, 256):
        low = i & -i
        table[i] = table[i ^ low] ^ (a << (low.bit_length() - 1))
    res = 0
    nbytes = (b.bit_length() + 7) // 8
    for j, byte in enumerate(b.to_bytes(nbytes, "little")):
        if byte:
            res ^= table[byte] << (8 * j)
    return res


def square(a: int) -> int:
    """Square in GF(2)[x]: spreads bit i to bit 2i."""
    if a < (1 << 64):
        return clmul(a, a)
    nbytes = (a.bit_length() + 7) // 8
    bits = np.unpackbits(np.frombuffer(a.to_bytes(nbytes, "little"), dtype=np.uint8), bitorder="little")
    spread = np.zeros(2 * bits.size, dtype=np.uint8)
    spread[::2] = bits
    return int.from_bytes(np.packbits(spread, bitorder="little").tobytes(), "little")


def reduce_sparse(p: int, exps: Exponents) -> int:
    """Reduce ``p`` modulo a sparse polynomial given by its set exponents.

    The top exponent must be unique and every other exponent strictly lower.
    """
    n = max(exps)
    low = [k for k in exps if k != n]
    mask = (1 << n) - 1
    while p >> n:
        hi = p >> n
        p &= mask
        for k in low:
            p ^= hi << k
    return p


def polymod(a: int, m: int) -> int:
    """Remainder of dense long division ``a mod m``."""
    dm = m.bit_length()
    if dm == 0:
        raise ZeroDivisionError("polynomial modulus is zero")
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def polygcd(a: int, b: int) -> int:
    while b:
        a, b = b, polymod(a, b)
    return a


def mulmod(a: int, b: int, exps: Exponents) -> int:
    return reduce_sparse(clmul(a, b), exps)


def powmod(a: int, e: int, exps: Exponents) -> int:
    result = 1
    base = reduce_sparse(a, exps)
    while e:
        if e & 1:
            result = mulmod(result, base, exps)
        e >>= 1
        if e:
            base = reduce_sparse(square(base), exps)
    return result


def frobenius(a: int, k: int, exps: Exponents) -> int:
    """``a ** (2**k) mod f`` by k repeated squarings."""
    for _ in range(k):
        a = reduce_sparse(square(a), exps)
    return a


def _prime_factors(n: int) -> list[int]:
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def is_irreducible(exps: Exponents) -> bool:
    """Rabin's irreducibility test for a sparse polynomial over GF(2)."""
    n = max(exps)
    if n < 1:
        return False
    f = exps_to_int(exps)
    if not f & 1:
        return n == 1
    x = 2 if n > 1 else reduce_sparse(2, exps)
    if frobenius(x, n, exps) != x:
        return False
    for p in _prime_factors(n):
        h = frobenius(x, n // p, exps) ^ x
        if polygcd(f, h) != 1:
            return False
    return True


def is_primitive(exps: Exponents, order_factors: Sequence[int] | None = None) -> bool:
    """True iff ``x`` generates the multiplicative group modulo the polynomial.

    ``order_factors`` are the distinct primes dividing ``2**n - 1``; when
    omitted they are found by trial division, which is only practical for
    small degrees.
    """
    if not is_irreducible(exps):
        return False
    n = max(exps)
    order = (1 << n) - 1
    factors = order_factors if order_factors is not None else _prime_factors(order)
    return all(powmod(2, order // q, exps) != 1 for q in factors)

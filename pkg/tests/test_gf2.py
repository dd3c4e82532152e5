import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdf import gf2


def naive_clmul(a, b):
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def naive_mod(a, m):
    dm = m.bit_length() - 1
    while a.bit_length() - 1 >= dm:
        a ^= m << (a.bit_length() - 1 - dm)
    return a


@given(st.integers(0, 2**200), st.integers(0, 2**200))
def test_clmul(a, b):
    assert gf2.clmul(a, b) == naive_clmul(a, b)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_clmul_word(a, b):
    assert gf2.clmul(a, b) == naive_clmul(a, b)


@given(st.integers(0, 2**300))
def test_square(a):
    assert gf2.square(a) == naive_clmul(a, a)


@given(st.integers(0, 2**400))
def test_reduce_sparse(p):
    exps = (160, 9, 7, 5, 0)
    assert gf2.reduce_sparse(p, exps) == naive_mod(p, gf2.exps_to_int(exps))


def test_exps_roundtrip():
    assert gf2.int_to_exps(gf2.exps_to_int((64, 4, 3, 1, 0))) == (64, 4, 3, 1, 0)
    assert gf2.degree(0b1011) == 3


@given(st.integers(1, 2**40), st.integers(1, 2**40))
def test_gcd_divides(a, b):
    g = gf2.polygcd(a, b)
    assert naive_mod(a, g) == 0 and naive_mod(b, g) == 0


def brute_irreducible(poly):
    d = poly.bit_length() - 1
    return all(naive_mod(poly, q) != 0 for q in range(2, 1 << (d // 2 + 1)) if 0 < q.bit_length() - 1 <= d // 2)


@pytest.mark.parametrize("deg", [2, 3, 4, 5, 6, 7, 8])
def test_irreducibility_exhaustive(deg):
    for low in range(1 << deg):
        poly = (1 << deg) | low
        exps = gf2.int_to_exps(poly)
        assert gf2.is_irreducible(exps) == brute_irreducible(poly), bin(poly)


def brute_primitive(exps):
    n = max(exps)
    x, k = 2, 1
    while x != 1 and k < 2**n:
        x = gf2.mulmod(x, 2, exps)
        k += 1
    return k == 2**n - 1


@pytest.mark.parametrize("deg", [3, 4, 5, 6, 8])
def test_primitivity_exhaustive(deg):
    m, factors = 2**deg - 1, []
    for q in range(2, m + 1):
        if m % q == 0:
            factors.append(q)
            while m % q == 0:
                m //= q
    for low in range(1, 1 << deg, 2):
        exps = gf2.int_to_exps((1 << deg) | low)
        if gf2.is_irreducible(exps):
            assert gf2.is_primitive(exps, factors) == brute_primitive(exps)


def test_powmod_fermat():
    exps = (32, 7, 6, 2, 0)
    a = 0x1234567
    assert gf2.powmod(a, 2**32, exps) == a
    assert gf2.frobenius(a, 32, exps) == a

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdf import gf2
from qkdf.amplify import (
    MAX_N,
    PENTANOMIALS,
    TEST_MODULI,
    VERIFIED,
    PAParams,
    choose_pa_params,
    field_width,
    gf_mul,
    modulus_for,
    pa_hash,
)
from qkdf.bits import DecodeError, int_to_bits
from qkdf.errors import ConfigError


def schoolbook(a, b, exps):
    n = max(exps)
    mod = sum(1 << k for k in exps)
    prod = 0
    for i in range(n):
        if b >> i & 1:
            prod ^= a << i
    for k in range(2 * n, n - 1, -1):
        if prod >> k & 1:
            prod ^= mod << (k - n)
    return prod


def test_gf8_worked_example():
    assert gf_mul(0b110, 0b011, (3, 1, 0)) == 0b001


@pytest.mark.parametrize("n", [8, 16])
def test_exhaustive_small_fields(n):
    mod = TEST_MODULI[n]
    rng = np.random.default_rng(n)
    others = range(256) if n == 8 else rng.integers(0, 1 << 16, 64).tolist()
    for a in range(1 << n) if n == 8 else rng.integers(0, 1 << 16, 2048).tolist():
        for b in others:
            assert gf_mul(a, b, mod) == schoolbook(a, b, mod)


@pytest.mark.parametrize("n", [8, 16])
def test_small_moduli_primitive_by_brute_force(n):
    mod = TEST_MODULI[n]
    x, order = 2, 1
    while x != 1:
        x = gf_mul(x, 2, mod)
        order += 1
    assert order == 2**n - 1


def test_table_covers_all_widths():
    assert MAX_N == 4096
    assert sorted(PENTANOMIALS) == list(range(32, 4097, 32))
    assert set(VERIFIED) == set(PENTANOMIALS)
    assert set(VERIFIED.values()) <= {"primitive", "irreducible"}


@pytest.mark.parametrize("n", [32, 64, 96, 128, 256, 512])
def test_table_entries_irreducible(n):
    assert gf2.is_irreducible(modulus_for(n))


def test_table_entries_irreducible_large():
    for n in (1024, 2048, 4096):
        assert gf2.is_irreducible(modulus_for(n))


def test_primitive_entries_32():
    # 2^32 - 1 = 3 * 5 * 17 * 257 * 65537
    assert gf2.is_primitive(modulus_for(32), [3, 5, 17, 257, 65537])


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_gf64_matches_schoolbook(a, b):
    mod = modulus_for(64)
    assert gf_mul(a, b, mod) == schoolbook(a, b, mod)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_field_laws(a, b, c):
    mod = modulus_for(64)
    assert gf_mul(a, b, mod) == gf_mul(b, a, mod)
    assert gf_mul(a, b ^ c, mod) == gf_mul(a, b, mod) ^ gf_mul(a, c, mod)
    assert gf_mul(gf_mul(a, b, mod), c, mod) == gf_mul(a, gf_mul(b, c, mod), mod)


def test_pa_identity():
    bits = np.random.default_rng(1).integers(0, 2, 96, dtype=np.uint8)
    p = PAParams(96, 96, modulus_for(96), 1, 0)
    assert np.array_equal(pa_hash(bits, p), bits)


def test_pa_fixed_vector():
    # x^64 + x^4 + x^3 + x + 1, product reduced with sympy GF(2) polynomials
    p = PAParams(64, 64, (64, 4, 3, 1, 0), 0xFEDCBA9876543210, 0)
    out = pa_hash(int_to_bits(0x0123456789ABCDEF, 64), p)
    assert np.array_equal(out, int_to_bits(0x48827AB55D976FA0, 64))
    short = PAParams(64, 20, (64, 4, 3, 1, 0), 0xFEDCBA9876543210, 0x5)
    assert np.array_equal(pa_hash(int_to_bits(0x0123456789ABCDEF, 64), short), int_to_bits(0x76FA0 ^ 0x5, 20))


def test_pa_linearity(rng):
    params = choose_pa_params(1000, 400, rng)
    zero = pa_hash(np.zeros(1000, dtype=np.uint8), params)
    for _ in range(200):
        a = rng.integers(0, 2, 1000, dtype=np.uint8)
        b = rng.integers(0, 2, 1000, dtype=np.uint8)
        lhs = pa_hash(a ^ b, params) ^ pa_hash(a, params) ^ pa_hash(b, params) ^ zero
        assert not lhs.any()


@given(st.integers(1, 3000), st.data())
def test_output_length(raw_len, data):
    m = data.draw(st.integers(1, raw_len))
    rng = np.random.default_rng(raw_len)
    p = choose_pa_params(raw_len, m, rng)
    assert p.n == field_width(raw_len) and p.n >= raw_len and p.n % 32 == 0
    assert pa_hash(rng.integers(0, 2, raw_len, dtype=np.uint8), p).size == m


def test_width_rounding():
    assert field_width(100) == 128 and field_width(32) == 32 and field_width(33) == 64


def test_discard_signal(rng):
    assert choose_pa_params(100, 0, rng) is None


def test_m_above_n_rejected():
    with pytest.raises(ConfigError):
        PAParams(32, 33, modulus_for(32), 1, 0)
    with pytest.raises(ConfigError):
        PAParams(40, 8, (40, 1, 0), 1, 0)
    with pytest.raises(ConfigError):
        modulus_for(4128)


def test_input_wider_than_field(rng):
    p = choose_pa_params(32, 8, rng)
    with pytest.raises(ConfigError):
        pa_hash(np.zeros(33, dtype=np.uint8), p)


def test_params_payload_roundtrip(rng):
    p = choose_pa_params(1500, 700, rng)
    assert PAParams.from_payload(p.to_payload()) == p
    with pytest.raises(DecodeError):
        PAParams.from_payload(p.to_payload()[:-1])
    t = choose_pa_params(16, 9, rng, test_mode=True)
    assert t.n == 16 and PAParams.from_payload(t.to_payload(), test_mode=True) == t

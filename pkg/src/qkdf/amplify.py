"""Privacy amplification with an affine hash over GF(2^n).

The reconciled bits (bit 0 = coefficient of x^0) are zero-padded to n bits,
multiplied by a random nonzero field element, offset by a random m-bit
string and truncated to the m lowest-degree coefficients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import gf2
from ._polytable import PENTANOMIALS, VERIFIED
from .bits import DecodeError, bits_to_int, int_to_bits
from .errors import ConfigError

PA_PARAMS = 6

# exhaustive-oracle sizes, outside the multiple-of-32 production rule
TEST_MODULI = {
    8: (8, 4, 3, 2, 0),
    16: (16, 5, 3, 2, 0),
}

MAX_N = max(PENTANOMIALS)


def modulus_for(n: int, test_mode: bool = False) -> tuple[int, ...]:
    if test_mode and n in TEST_MODULI:
        return TEST_MODULI[n]
    try:
        a, b, c = PENTANOMIALS[n]
    except KeyError:
        raise ConfigError(f"no field polynomial for n={n}; n must be a multiple of 32 up to {MAX_N}") from None
    return (n, a, b, c, 0)


def modulus_verification(n: int) -> str:
    return "primitive" if n in TEST_MODULI else VERIFIED[n]


def field_width(raw_len: int) -> int:
    return 32 * -(-raw_len // 32)


@dataclass(frozen=True)
class PAParams:
    n: int
    m: int
    modulus: tuple[int, ...]
    multiplier: int
    addend: int
    test_mode: bool = False

    def __post_init__(self):
        if not self.test_mode and (self.n <= 0 or self.n % 32):
            raise ConfigError(f"field width {self.n} is not a positive multiple of 32")
        if self.test_mode and self.n not in TEST_MODULI and self.n % 32:
            raise ConfigError(f"test-mode field width must be 8, 16 or a multiple of 32, got {self.n}")
        if not 1 <= self.m <= self.n:
            raise ConfigError(f"output width m={self.m} must satisfy 1 <= m <= n={self.n}")
        if max(self.modulus) != self.n or 0 not in self.modulus:
            raise ConfigError("modulus degree must equal n and include the constant term")
        if not 0 < self.multiplier < (1 << self.n):
            raise ConfigError("multiplier must be a nonzero n-bit value")
        if not 0 <= self.addend < (1 << self.m):
            raise ConfigError("addend must fit in m bits")

    def to_payload(self) -> bytes:
        exps = sorted(self.modulus, reverse=True)
        head = struct.pack(">IIH", self.n, self.m, len(exps)) + b"".join(struct.pack(">I", k) for k in exps)
        return head + self.multiplier.to_bytes(self.n // 8, "little") + self.addend.to_bytes(-(-self.m // 8), "little")

    @classmethod
    def from_payload(cls, payload: bytes, test_mode: bool = False) -> "PAParams":
        try:
            n, m, terms = struct.unpack_from(">IIH", payload, 0)
            pos = 10
            exps = tuple(struct.unpack_from(f">{terms}I", payload, pos))
            pos += 4 * terms
            mult_len, add_len = n // 8, -(-m // 8)
            if len(payload) != pos + mult_len + add_len:
                raise DecodeError("PA_PARAMS length mismatch")
            multiplier = int.from_bytes(payload[pos : pos + mult_len], "little")
            addend = int.from_bytes(payload[pos + mult_len :], "little")
        except struct.error as exc:
            raise DecodeError(f"truncated PA_PARAMS: {exc}") from None
        return cls(n, m, exps, multiplier, addend, test_mode)


def gf_mul(a: int, b: int, modulus) -> int:
    """Product of two field elements modulo ``modulus`` (exponent tuple)."""
    return gf2.mulmod(a, b, modulus)


def pa_hash(bits, params: PAParams) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size > params.n:
        raise ConfigError(f"input of {bits.size} bits exceeds field width {params.n}")
    x = bits_to_int(bits)
    y = gf_mul(x, params.multiplier, params.modulus) ^ params.addend
    return int_to_bits(y & ((1 << params.m) - 1), params.m)


def choose_pa_params(
    raw_len: int, resultant_entropy: int, rng: np.random.Generator, test_mode: bool = False
) -> PAParams | None:
    """Pick hash parameters; ``None`` signals that the block yields no key."""
    if resultant_entropy < 1 or raw_len < 1:
        return None
    if resultant_entropy > raw_len:
        raise ConfigError("resultant entropy cannot exceed the block length")
    n = raw_len if test_mode and raw_len in TEST_MODULI else field_width(raw_len)
    modulus = modulus_for(n, test_mode)
    multiplier = 0
    while multiplier == 0:
        multiplier = int.from_bytes(rng.bytes(n // 8), "little")
    addend = int.from_bytes(rng.bytes(-(-resultant_entropy // 8)), "little") & ((1 << resultant_entropy) - 1)
    return PAParams(n, resultant_entropy, modulus, multiplier, addend, test_mode)

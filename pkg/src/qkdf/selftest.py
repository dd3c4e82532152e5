"""Built-in oracle checks run by ``qkdf selftest``.

Each check compares a production routine against an independent, slow
reference implementation on a small deterministic sample.
"""

from __future__ import annotations

import math
import sys
import time
from decimal import Decimal, getcontext

import numpy as np

CHECKS = []


def check(slow: bool = False):
    def wrap(fn):
        CHECKS.append((fn, slow))
        return fn

    return wrap


def _schoolbook_mulmod(a: int, b: int, exps) -> int:
    n = max(exps)
    mod = sum(1 << k for k in exps)
    prod = 0
    for i in range(b.bit_length()):
        if b >> i & 1:
            prod ^= a << i
    for k in range(prod.bit_length() - 1, n - 1, -1):
        if prod >> k & 1:
            prod ^= mod << (k - n)
    return prod


@check()
def gf_mul_exhaustive_gf256() -> str:
    from .amplify import TEST_MODULI, gf_mul

    mod = TEST_MODULI[8]
    for a in range(256):
        for b in range(256):
            assert gf_mul(a, b, mod) == _schoolbook_mulmod(a, b, mod), (a, b)
    return "65536 products"


@check()
def gf_mul_random_gf2_32() -> str:
    from .amplify import gf_mul, modulus_for

    rng = np.random.default_rng(1)
    mod = modulus_for(32)
    for a, b in rng.integers(0, 2**32, size=(2000, 2), dtype=np.uint64):
        assert gf_mul(int(a), int(b), mod) == _schoolbook_mulmod(int(a), int(b), mod)
    return "2000 products"


@check()
def lfsr_matches_stepper() -> str:
    from .lfsr import step, subset_masks

    seeds = [1, 0xDEADBEEF, 0x80000000]
    masks = subset_masks(np.array(seeds, dtype=np.uint64), 300)
    for row, seed in zip(masks, seeds):
        reg, out = seed, []
        for _ in range(300):
            bit, reg = step(reg)
            out.append(bit)
        assert list(row) == out
    return "3 seeds x 300 bits"


def _dec_sqrt(x) -> Decimal:
    return Decimal(x).sqrt()


@check()
def defense_functions_high_precision() -> str:
    from .entropy import BitAccount, bennett_estimate, resultant_entropy, slutsky_estimate

    getcontext().prec = 50
    cases = 0
    for b, e in [(1024, 0), (1024, 30), (4096, 250), (4096, 400), (2000, 1)]:
        acct = BitAccount(b, e, 100 * b, b // 3, 0, 0.004, 0.0, 5.0)
        ben = bennett_estimate(acct)
        t_ref = 4 * Decimal(e) / _dec_sqrt(2)
        assert abs(Decimal(ben.t) - t_ref) <= Decimal("1e-9") * max(t_ref, 1)
        slu = slutsky_estimate(acct)
        ep = Decimal(e) / b + Decimal(5) / _dec_sqrt(b)
        ratio = max(1 - 3 * ep, Decimal(0)) / (1 - ep)
        t_s = (b - e) * (1 + (1 - ratio * ratio / 2).ln() / Decimal(2).ln())
        assert abs(Decimal(slu.t) - t_s) <= Decimal("1e-9") * max(abs(t_s), 1)
        leak = Decimal("0.004") * acct.n
        raw = b - acct.d - Decimal(ben.t) - leak - 5 * (Decimal(ben.s) ** 2 + leak).sqrt()
        ref = min(max(math.floor(raw), 0), b)
        assert resultant_entropy(acct, ben) == ref
        cases += 1
    return f"{cases} accounts"


@check()
def framing_layout() -> str:
    from .auth import AuthChannel
    from .wire import MsgType, frame_message, parse_message

    a, b = AuthChannel.pair(np.random.default_rng(2).integers(0, 2, 4096, dtype=np.uint8))
    raw = frame_message(MsgType.EC_DONE, 7, b"", a)
    assert len(raw) == 28
    assert parse_message(raw, b).payload == b""
    return "28-byte empty frame"


@check()
def rle_roundtrip() -> str:
    from .sift import rle_decode, rle_encode

    rng = np.random.default_rng(3)
    for _ in range(50):
        sym = rng.choice([0, 1, 2], size=int(rng.integers(0, 5000)), p=[0.97, 0.015, 0.015]).astype(np.uint8)
        assert np.array_equal(rle_decode(rle_encode(sym)), sym)
    return "50 random symbol streams"


@check(slow=True)
def cascade_reconciles() -> str:
    from .cascade import reconcile

    rng = np.random.default_rng(4)
    for q in (0.02, 0.08):
        a = rng.integers(0, 2, 4096, dtype=np.uint8)
        b = a ^ (rng.random(4096) < q).astype(np.uint8)
        res = reconcile(a, b, rng=rng)
        assert res.success and np.array_equal(res.alice_bits, res.bob_bits)
    return "4096-bit blocks at 2% and 8%"


@check()
def relay_three_hops() -> str:
    from .relaynet import RelayGraph, transport_key

    rng = np.random.default_rng(5)
    g = RelayGraph("ABCD")
    for u, v in ("AB", "BC", "CD"):
        g.add_prefilled_link(u, v, 1024, rng)
    tr = transport_key(g, "A", "D", 256, rng)
    assert tr.completed and np.array_equal(tr.source_key, tr.destination_key)
    assert sum(r.bits for r in tr.receipts) == 768
    return "768 pad bits over 3 hops"


@check()
def tunnel_confirm_gate() -> str:
    from .engine import InProcessChannel
    from .keypool import KeyBlock, KeyPool
    from .tunnel import PoolPairSource, Tunnel, TunnelPolicy

    rng = np.random.default_rng(6)
    pa, pb = KeyPool(), KeyPool()
    for i in range(8):
        bits = rng.integers(0, 2, 1024, dtype=np.uint8)
        pa.deposit(KeyBlock(i, bits.copy(), 1024))
        pb.deposit(KeyBlock(i, bits, 1024))
    tun = Tunnel("selftest", TunnelPolicy(), PoolPairSource(pa, pb), InProcessChannel.prepositioned(1, rng), rng.bytes)

    def flip(bits):
        bits[0] ^= 1

    tun.fault = flip
    assert tun.negotiate().startswith("failed") and tun.data_messages == 0
    return "mismatch stopped before traffic"


def run_selftest(quick: bool = False, out=sys.stdout) -> bool:
    import logging

    logging.getLogger("qkdf.tunnel").setLevel(logging.CRITICAL)
    ok = True
    for fn, slow in CHECKS:
        if quick and slow:
            out.write(f"SKIP {fn.__name__}\n")
            continue
        t0 = time.perf_counter()
        try:
            detail = fn()
            out.write(f"PASS {fn.__name__}: {detail} ({time.perf_counter() - t0:.2f}s)\n")
        except Exception as exc:  # noqa: BLE001
            ok = False
            out.write(f"FAIL {fn.__name__}: {type(exc).__name__}: {exc}\n")
    return ok

"""Search the compiled-in pentanomial table used by privacy amplification.

For every n in {32, 64, ..., 4096} this finds the pentanomial
x^n + x^a + x^b + x^c + 1 with the smallest (a, b, c) (lexicographic) that
is irreducible.  Where 2^n - 1 can be factored within a time budget the
search additionally requires x to have order 2^n - 1 (primitive).

Trinomials are skipped: Swan's theorem rules out irreducible trinomials of
degree divisible by 8.

Usage:  python scripts/gen_poly_table.py [--max-n 4096] [--out src/qkdf/_polytable.py]
"""

from __future__ import annotations

import argparse
import re
import signal
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qkdf import gf2  # noqa: E402

SIEVE_DEGREE = 13


def small_irreducibles(max_deg: int) -> list[int]:
    out = []
    for deg in range(1, max_deg + 1):
        for low in range(1 << deg):
            f = (1 << deg) | low
            if gf2.is_irreducible(gf2.int_to_exps(f)):
                out.append(f)
    return out


def power_table(polys: list[int], max_k: int) -> np.ndarray:
    """table[i, k] = x^k mod polys[i]."""
    degs = np.array([p.bit_length() - 1 for p in polys], dtype=np.int64)
    mods = np.array(polys, dtype=np.int64)
    top = np.left_shift(1, degs)
    table = np.zeros((len(polys), max_k + 1), dtype=np.int64)
    cur = np.ones(len(polys), dtype=np.int64)
    cur = np.where(degs == 0, 0, cur)
    for k in range(max_k + 1):
        table[:, k] = cur
        cur = cur << 1
        over = (cur & top) != 0
        cur = np.where(over, cur ^ mods, cur)
    return table


class Timeout(Exception):
    pass


def _alarm(signum, frame):
    raise Timeout


def order_factors(n: int, budget_s: int) -> list[int] | None:
    import sympy

    signal.signal(signal.SIGALRM, _alarm)
    signal.alarm(budget_s)
    try:
        primes: set[int] = set()
        for d in sympy.divisors(n):
            cyc = int(sympy.cyclotomic_poly(d, 2))
            primes.update(sympy.factorint(cyc).keys())
        return sorted(primes)
    except Timeout:
        return None
    finally:
        signal.alarm(0)


def search(n: int, table: np.ndarray, factors: list[int] | None):
    tested = 0
    for a in range(3, n):
        # all (b, c) with a > b > c >= 1, sieved against small factors in bulk
        bs, cs = np.triu_indices(a, k=1)
        # triu gives row < col; use (b, c) = (col, row) with c >= 1
        b_arr, c_arr = cs, bs
        keep = c_arr >= 1
        b_arr, c_arr = b_arr[keep], c_arr[keep]
        order = np.lexsort((c_arr, b_arr))
        b_arr, c_arr = b_arr[order], c_arr[order]
        rem = table[:, n][:, None] ^ table[:, a][:, None] ^ table[:, b_arr] ^ table[:, c_arr] ^ 1
        survivors = np.nonzero(np.all(rem != 0, axis=0))[0]
        for idx in survivors:
            exps = (n, a, int(b_arr[idx]), int(c_arr[idx]), 0)
            tested += 1
            if not gf2.is_irreducible(exps):
                continue
            if factors is not None and not gf2.is_primitive(exps, factors):
                continue
            return exps[1:4], tested
    raise RuntimeError(f"no pentanomial found for n={n}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-n", type=int, default=4096)
    ap.add_argument("--factor-budget", type=int, default=20)
    ap.add_argument("--resume", help="earlier run's stdout; rows found there are reused")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/qkdf/_polytable.py"))
    args = ap.parse_args()

    t0 = time.time()
    sieve = small_irreducibles(SIEVE_DEGREE)
    table = power_table(sieve, args.max_n)
    print(f"sieve: {len(sieve)} irreducibles of degree <= {SIEVE_DEGREE} ({time.time() - t0:.1f}s)", flush=True)

    rows = []
    done = {}
    if args.resume:
        for line in Path(args.resume).read_text().splitlines():
            m = re.match(r"n=\s*(\d+)\s+x\^\d+\+x\^(\d+)\+x\^(\d+)\+x\^(\d+)\+1\s+(\w+)", line)
            if m:
                done[int(m[1])] = (int(m[2]), int(m[3]), int(m[4]), m[5])
    for n in range(32, args.max_n + 1, 32):
        if n in done:
            rows.append((n, *done[n]))
            print(f"n={n:5d}  x^{n}+x^{done[n][0]}+x^{done[n][1]}+x^{done[n][2]}+1  {done[n][3]:11s}  resumed", flush=True)
            continue
        t1 = time.time()
        factors = order_factors(n, args.factor_budget)
        (a, b, c), tested = search(n, table, factors)
        kind = "primitive" if factors is not None else "irreducible"
        rows.append((n, a, b, c, kind))
        print(f"n={n:5d}  x^{n}+x^{a}+x^{b}+x^{c}+1  {kind:11s}  tested={tested:4d}  {time.time() - t1:.1f}s", flush=True)

    lines = [
        '"""Generated by scripts/gen_poly_table.py -- do not edit by hand.',
        "",
        "PENTANOMIALS[n] = (a, b, c) for the modulus x^n + x^a + x^b + x^c + 1.",
        "VERIFIED[n] is 'primitive' when the order of x was checked against the",
        "full factorisation of 2^n - 1, otherwise 'irreducible' (Rabin test).",
        '"""',
        "",
        "PENTANOMIALS = {",
    ]
    lines += [f"    {n}: ({a}, {b}, {c})," for n, a, b, c, _ in rows]
    lines += ["}", "", "VERIFIED = {"]
    lines += [f"    {n}: {kind!r}," for n, _, _, _, kind in rows]
    lines += ["}", ""]
    Path(args.out).write_text("\n".join(lines))
    print(f"wrote {args.out} in {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()

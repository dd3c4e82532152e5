"""Parity bits disclosed by reconciliation against the Shannon limit.

For each error rate, reconciles random blocks and prints the mean
disclosure d/b next to h(q) and the message count.

Usage:  python scripts/cascade_disclosure.py [--bits 4096] [--trials 20]
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from qkdf.cascade import reconcile


def h2(q: float) -> float:
    return 0.0 if q in (0.0, 1.0) else -q * math.log2(q) - (1 - q) * math.log2(1 - q)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=4096)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--rates", default="0.005,0.01,0.02,0.04,0.06,0.08,0.10,0.12")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["qber", "disclosed_per_bit", "shannon", "efficiency", "messages", "rounds", "success"])
    for q in (float(x) for x in args.rates.split(",")):
        d, msgs, rounds, ok = [], [], [], 0
        for _ in range(args.trials):
            a = rng.integers(0, 2, args.bits, dtype=np.uint8)
            b = a.copy()
            b[rng.choice(args.bits, round(q * args.bits), replace=False)] ^= 1
            res = reconcile(a, b, rng=rng)
            d.append(res.d / args.bits)
            msgs.append(len(res.messages))
            rounds.append(res.rounds)
            ok += res.success
        mean_d = float(np.mean(d))
        eff = mean_d / h2(q) if q else float("nan")
        out.writerow([q, f"{mean_d:.4f}", f"{h2(q):.4f}", f"{eff:.2f}", f"{np.mean(msgs):.1f}", f"{np.mean(rounds):.2f}", f"{ok}/{args.trials}"])


if __name__ == "__main__":
    main()

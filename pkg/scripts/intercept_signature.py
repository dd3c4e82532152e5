"""QBER induced by intercept-resend as a function of the intercepted fraction.

Each row compares the measured sifted error rate on a noiseless channel with
the expected f/4 and says whether the engine's alarm threshold trips.

Usage:  python scripts/intercept_signature.py [--pulses 1000000]
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from qkdf.engine import DEFAULT_QBER_THRESHOLD
from qkdf.qchannel import ChannelParams, EveKind, EveModel, generate_frame, make_rng, propagate_and_detect
from qkdf.sift import alice_sift, bob_sift, build_proposal


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pulses", type=int, default=1_000_000)
    ap.add_argument("--fractions", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.8,1.0")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    p = ChannelParams(loss_db=0, detector_efficiency=1.0, intrinsic_qber=0, dark_count_prob=0, pulse_count=args.pulses)
    out = csv.writer(sys.stdout)
    out.writerow(["fraction", "sifted", "qber", "expected", "sigma", "alarm"])
    for i, f in enumerate(float(x) for x in args.fractions.split(",")):
        frame = generate_frame(p, make_rng([args.seed, i, 0]))
        eve = EveModel(EveKind.INTERCEPT_RESEND, f) if f else EveModel()
        det, _ = propagate_and_detect(frame, p, eve, make_rng([args.seed, i, 1]))
        resp, a = alice_sift(build_proposal(det), frame)
        b = bob_sift(resp, det)
        qber = float(np.mean(a != b))
        sigma = math.sqrt(max(qber * (1 - qber), 1e-12) / a.size)
        out.writerow([f, a.size, f"{qber:.4f}", f"{f / 4:.4f}", f"{sigma:.4f}", qber > DEFAULT_QBER_THRESHOLD])


if __name__ == "__main__":
    main()

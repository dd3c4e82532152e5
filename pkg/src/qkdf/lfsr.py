"""32-bit Fibonacci LFSR used to name pseudo-random parity subsets.

Feedback polynomial x^32 + x^22 + x^2 + x + 1.  The seed is loaded into the
register, the output bit is the register LSB before each shift, and the
feedback enters at bit 31.  Output bit ``i`` decides whether sifted bit
``i`` belongs to the subset.
"""

from __future__ import annotations

import numpy as np

TAPS = (0, 1, 2, 22)


def step(reg: int) -> tuple[int, int]:
    """One shift: returns ``(output_bit, new_register)``."""
    out = reg & 1
    fb = (reg ^ (reg >> 1) ^ (reg >> 2) ^ (reg >> 22)) & 1
    return out, (reg >> 1) | (fb << 31)


def subset_masks(seeds, n: int) -> np.ndarray:
    """Membership masks, shape ``(len(seeds), n)``, one row per seed."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    if n < 1:
        raise ValueError("block length must be >= 1")
    if (seeds == 0).any() or (seeds >> np.uint64(32)).any():
        raise ValueError("LFSR seeds must be nonzero 32-bit values")
    total = max(n, 32)
    out = np.zeros((seeds.size, total), dtype=np.uint8)
    shifts = np.arange(32, dtype=np.uint64)
    out[:, :32] = ((seeds[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    # s[t] = s[t-32] ^ s[t-31] ^ s[t-30] ^ s[t-10]; ten outputs per step
    t = 32
    while t < total:
        w = min(10, total - t)
        out[:, t : t + w] = (
            out[:, t - 32 : t - 32 + w]
            ^ out[:, t - 31 : t - 31 + w]
            ^ out[:, t - 30 : t - 30 + w]
            ^ out[:, t - 10 : t - 10 + w]
        )
        t += w
    return out[:, :n]


def subset_membership(seed: int, n: int) -> np.ndarray:
    return subset_masks([seed], n)[0]

"""Eavesdropping-free entropy of a reconciled block.

A defense function bounds what Eve learned from error-inducing attacks;
the resultant entropy subtracts that, the disclosed parities, the
non-randomness allowance and the transparent (multi-photon) leak, plus
``c`` standard deviations of margin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum

from .errors import ConfigError
from .qchannel import ChannelParams, multi_photon_prob

DEFAULT_CONFIDENCE = 5.0


class DefenseFunction(str, Enum):
    BENNETT = "bennett"
    SLUTSKY = "slutsky"


class LinkKind(str, Enum):
    WEAK_COHERENT = "weak_coherent"
    ENTANGLED = "entangled"


@dataclass(frozen=True)
class BitAccount:
    b: int  # sifted bits received
    e: int  # errors corrected
    n: int  # pulses transmitted
    d: int  # parity bits disclosed
    r: float = 0.0  # non-randomness allowance, bits
    m1: float = 0.0  # transparent leak per transmitted pulse
    m2: float = 0.0  # transparent leak per received bit
    c: float = DEFAULT_CONFIDENCE

    def __post_init__(self):
        if not 0 <= self.e <= self.b <= self.n:
            raise ConfigError(f"need 0 <= e <= b <= n, got e={self.e} b={self.b} n={self.n}")
        if self.d < 0 or self.r < 0 or self.c < 0:
            raise ConfigError("d, r and c must be non-negative")
        if not (0 <= self.m1 <= 1 and 0 <= self.m2 <= 1):
            raise ConfigError("m1 and m2 must lie in [0, 1]")


@dataclass(frozen=True)
class DefenseEstimate:
    t: float
    s: float
    function_id: DefenseFunction
    warning: bool = False


def bennett_estimate(acct: BitAccount) -> DefenseEstimate:
    e = acct.e
    return DefenseEstimate(4 * e / math.sqrt(2), math.sqrt((4 + 2 * math.sqrt(2)) * e), DefenseFunction.BENNETT)


def slutsky_estimate(acct: BitAccount) -> DefenseEstimate:
    b, e = acct.b, acct.e
    if b <= 0:
        raise ValueError("Slutsky estimate is undefined for b = 0")
    e_adj = e / b + acct.c / math.sqrt(b)
    s = math.sqrt(b)
    if e_adj >= 1:
        warnings.warn(f"adjusted error rate {e_adj:.3f} >= 1; treating every bit as compromised", stacklevel=2)
        return DefenseEstimate(float(b - e), s, DefenseFunction.SLUTSKY, warning=True)
    ratio = max(1 - 3 * e_adj, 0.0) / (1 - e_adj)
    t = (b - e) * (1 + math.log2(1 - 0.5 * ratio * ratio))
    return DefenseEstimate(t, s, DefenseFunction.SLUTSKY)


def defense_estimate(acct: BitAccount, function: DefenseFunction | str) -> DefenseEstimate:
    function = DefenseFunction(function)
    if function is DefenseFunction.BENNETT:
        return bennett_estimate(acct)
    return slutsky_estimate(acct)


def resultant_entropy(acct: BitAccount, est: DefenseEstimate) -> int:
    leak1 = acct.m1 * acct.n
    leak2 = acct.m2 * acct.b
    margin = acct.c * math.sqrt(est.s**2 + leak1 + leak2)
    raw = acct.b - acct.r - acct.d - est.t - leak1 - leak2 - margin
    return int(min(max(math.floor(raw), 0), acct.b))


def default_m_coefficients(params: ChannelParams, link_kind: LinkKind | str = LinkKind.WEAK_COHERENT) -> tuple[float, float]:
    p_multi = multi_photon_prob(params.mu)
    if LinkKind(link_kind) is LinkKind.WEAK_COHERENT:
        return p_multi, 0.0
    return 0.0, p_multi


def log_record(block_id: int, acct: BitAccount, est: DefenseEstimate, resultant: int) -> dict:
    """Per-block estimate record for the stats stream."""
    rec = {"block_id": block_id, "function_id": est.function_id.value}
    rec.update({k: v for k, v in asdict(acct).items()})
    rec.update({"t": est.t, "s": est.s, "resultant": resultant})
    return rec

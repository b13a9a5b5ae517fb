"""Stop-and-wait link abstraction.

Each packet is retransmitted until it gets through, with instant error-free
acknowledgements, so the number of attempts per packet is geometric with
success probability ``1 - p_e``. The analytic engine only needs the mean,
which collapses to a goodput of ``rate * (1 - p_e)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def effective_goodput(rate_bps: float, p_e: float) -> float:
    """Expected goodput in bits/second for a link with packet-error probability ``p_e``."""
    if rate_bps <= 0:
        raise ValueError(f"rate must be positive, got {rate_bps}")
    if not 0 <= p_e < 1:
        raise ValueError(f"degenerate link: packet-error probability {p_e} gives zero goodput")
    return rate_bps * (1.0 - p_e)


def transfer_time(length_bits: float, goodput_bps: float) -> float:
    """Expected seconds to deliver ``length_bits`` at ``goodput_bps``."""
    return length_bits / goodput_bps


@dataclass(frozen=True)
class DirectionalLink:
    rate_bps: float
    p_e: float = 0.0

    def __post_init__(self):
        effective_goodput(self.rate_bps, self.p_e)

    @property
    def goodput_bps(self) -> float:
        return effective_goodput(self.rate_bps, self.p_e)


@dataclass(frozen=True)
class PacketizationPolicy:
    packet_bits: int = 8000

    def __post_init__(self):
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be positive")


def sample_transfer_time(length_bits, link: DirectionalLink, policy: PacketizationPolicy,
                         rng: np.random.Generator, size=None):
    """Draw the time to push ``length_bits`` through ``link`` with retransmissions.

    The message is cut into full packets of ``policy.packet_bits`` plus one
    shorter trailing packet. A packet of ``b`` bits costs ``attempts * b /
    rate`` seconds. With ``size`` given, an array of independent draws is
    returned.

    Only the retransmissions are random, so with ``p_e == 0`` the result is
    exactly ``length_bits / link.rate_bps``.
    """
    if length_bits < 0:
        raise ValueError("length must be non-negative")
    full, rest = divmod(length_bits, policy.packet_bits)
    full = int(full)
    success = 1.0 - link.p_e
    shape = () if size is None else size

    # extra attempts beyond the first: NB(k, p) failures for k full packets,
    # geometric minus one for the trailing packet
    extra_full = rng.negative_binomial(full, success, size=shape) if full > 0 else np.zeros(shape)
    extra_rest = rng.geometric(success, size=shape) - 1 if rest > 0 else np.zeros(shape)
    extra_bits = extra_full * float(policy.packet_bits) + extra_rest * float(rest)
    out = (length_bits + extra_bits) / link.rate_bps
    return float(out) if size is None else out


def packet_count(length_bits: float, policy: PacketizationPolicy) -> int:
    return math.ceil(length_bits / policy.packet_bits)

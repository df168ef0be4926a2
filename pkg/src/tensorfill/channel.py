"""Row-by-row packetization and a seeded random packet-loss channel.

A packet carries ``rows_per_packet`` spatial rows of one channel
(``per_channel_row``, the default) or the same spatial rows across every
channel (``cross_channel_row``).  Loss is independent per packet with a
fixed probability, driven by a PCG64 generator so that identical
(packet count, probability, seed) triples always reproduce the same
pattern.  Sub-stream seeds for Monte-Carlo trials are derived with a
splitmix64-based mixer so trial results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FeatureTensor, ObservationMask
from .exceptions import ContractViolation

__all__ = [
    "PacketizationScheme",
    "ChannelConfig",
    "LossPattern",
    "PacketSpan",
    "packet_count",
    "packet_index_map",
    "draw_loss",
    "apply_loss",
    "derive_seed",
]

PER_CHANNEL_ROW = "per_channel_row"
CROSS_CHANNEL_ROW = "cross_channel_row"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PacketizationScheme:
    """How tensor rows map onto packets."""

    rows_per_packet: int = 1
    grouping: str = PER_CHANNEL_ROW

    def __post_init__(self):
        if self.rows_per_packet < 1:
            raise ContractViolation(f"rows_per_packet must be >= 1, got {self.rows_per_packet}")
        if self.grouping not in (PER_CHANNEL_ROW, CROSS_CHANNEL_ROW):
            raise ContractViolation(f"unknown grouping {self.grouping!r}")


@dataclass(frozen=True)
class ChannelConfig:
    """Loss probability plus the seed of this realization's generator."""

    p_loss: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.p_loss <= 1.0):
            raise ContractViolation(f"p_loss must be in [0, 1], got {self.p_loss}")
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)


@dataclass(frozen=True)
class LossPattern:
    """The set of lost packet indices for one channel realization."""

    total_packets: int
    lost: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.total_packets < 1:
            raise ContractViolation(f"total_packets must be >= 1, got {self.total_packets}")
        lost = frozenset(int(i) for i in self.lost)
        for i in lost:
            if not (0 <= i < self.total_packets):
                raise ContractViolation(f"lost packet index {i} out of range [0, {self.total_packets})")
        object.__setattr__(self, "lost", lost)

    @property
    def loss_fraction(self) -> float:
        return len(self.lost) / self.total_packets


@dataclass(frozen=True)
class PacketSpan:
    """The (channels, rows) slab carried by one packet index."""

    channels: range
    rows: range


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix a master seed with integer indices into an independent 64-bit sub-stream seed.

    The mix is a fixed splitmix64 chain, so (master, i, j) always lands on
    the same sub-stream no matter which order trials execute in.
    """
    h = _splitmix64(int(master_seed) & _MASK64)
    for ix in indices:
        h = _splitmix64((h ^ _splitmix64(int(ix) & _MASK64)) & _MASK64)
    return h


def _blocks(h: int, rows_per_packet: int) -> int:
    return math.ceil(h / rows_per_packet)


def packet_count(dims: tuple[int, int, int], scheme: PacketizationScheme) -> int:
    """Number of packets one tensor of the given dims occupies."""
    h, _, c = dims
    if scheme.rows_per_packet > h:
        raise ContractViolation(
            f"rows_per_packet {scheme.rows_per_packet} exceeds tensor height {h}"
        )
    n = _blocks(h, scheme.rows_per_packet)
    return n * c if scheme.grouping == PER_CHANNEL_ROW else n


def packet_index_map(dims: tuple[int, int, int], scheme: PacketizationScheme) -> list[PacketSpan]:
    """Deterministic packet enumeration.

    per_channel_row packets are ordered channel-major then row-major;
    cross_channel_row packets are row-major.  The last packet of a channel
    may carry fewer rows (ceil partition, no padding).
    """
    h, _, c = dims
    if scheme.rows_per_packet > h:
        raise ContractViolation(
            f"rows_per_packet {scheme.rows_per_packet} exceeds tensor height {h}"
        )
    rpp = scheme.rows_per_packet
    row_blocks = [range(r0, min(r0 + rpp, h)) for r0 in range(0, h, rpp)]
    if scheme.grouping == PER_CHANNEL_ROW:
        return [PacketSpan(channels=range(ch, ch + 1), rows=rows) for ch in range(c) for rows in row_blocks]
    return [PacketSpan(channels=range(0, c), rows=rows) for rows in row_blocks]


def draw_loss(n_packets: int, cfg: ChannelConfig) -> LossPattern:
    """Draw one loss realization: each packet lost independently with p_loss."""
    if n_packets < 1:
        raise ContractViolation(f"n_packets must be >= 1, got {n_packets}")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    lost = np.nonzero(rng.random(n_packets) < cfg.p_loss)[0]
    return LossPattern(total_packets=n_packets, lost=frozenset(int(i) for i in lost))


def apply_loss(
    t: FeatureTensor, pattern: LossPattern, scheme: PacketizationScheme
) -> tuple[FeatureTensor, ObservationMask]:
    """Zero out lost rows and return the damaged tensor with its mask.

    Observed entries are bitwise-identical to the input; the zero fill is
    exactly the no-completion receiver behaviour.
    """
    expected = packet_count(t.dims, scheme)
    if pattern.total_packets != expected:
        raise ContractViolation(
            f"pattern covers {pattern.total_packets} packets but tensor needs {expected}"
        )
    mask = np.ones(t.dims, dtype=bool)
    spans = packet_index_map(t.dims, scheme)
    for idx in pattern.lost:
        span = spans[idx]
        mask[span.rows.start : span.rows.stop, :, span.channels.start : span.channels.stop] = False
    damaged = np.where(mask, t.data, np.float32(0.0))
    return FeatureTensor(damaged), ObservationMask(mask)

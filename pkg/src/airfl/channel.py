"""Fading multiple-access channel between workers and the server.

Each round draws an M x N matrix of positive amplitude gains (magnitude
of a standard complex normal, i.e. Rayleigh fading with unit mean-square).
A transmitting worker splits its flat gradient into M contiguous segments,
one per sub-channel, and inverts its channel so the per-segment transmit
amplitude is power_scalar/h. Gains therefore cancel at the receiver --
they only show up in the transmit energy -- and the received signal per
sub-channel is the plain superposition of the scheduled workers' segments
scaled by power_scalar, plus unit-variance white noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class GradientSegments:
    """A flat vector viewed as M contiguous sub-channel segments."""

    values: np.ndarray
    offsets: np.ndarray      # (M+1,) slice boundaries; concatenation is exact

    @property
    def num_segments(self) -> int:
        return len(self.offsets) - 1

    def segment(self, m: int) -> np.ndarray:
        return self.values[self.offsets[m]:self.offsets[m + 1]]

    def __iter__(self):
        return (self.segment(m) for m in range(self.num_segments))

    def squared_norms(self) -> np.ndarray:
        """Per-segment ||g_m||^2, shape (M,)."""
        return np.add.reduceat(self.values * self.values, self.offsets[:-1])


@dataclass(frozen=True)
class ReceivedSignal:
    values: np.ndarray       # concatenation of the M per-sub-channel vectors
    offsets: np.ndarray
    noise_std: float         # 1.0 when noise enabled, else 0.0


def segment_offsets(length: int, num_segments: int) -> np.ndarray:
    """Boundaries of an even split: the first (length mod M) segments get
    ceil(length/M) entries, the rest floor(length/M)."""
    if num_segments > length:
        raise ChannelError(f"cannot split length {length} into {num_segments} non-empty segments")
    base, extra = divmod(length, num_segments)
    sizes = np.full(num_segments, base, dtype=np.int64)
    sizes[:extra] += 1
    offsets = np.zeros(num_segments + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return offsets


def segment(values: np.ndarray, num_segments: int) -> GradientSegments:
    values = np.asarray(values)
    return GradientSegments(values=values, offsets=segment_offsets(len(values), num_segments))


def draw_channel(num_subchannels: int, num_workers: int,
                 stream: np.random.Generator) -> np.ndarray:
    """Amplitude gains |h| of independent standard complex normal draws.

    Real and imaginary parts are N(0, 1/2), so E|h|^2 = 1 and the
    amplitude is Rayleigh with scale 1/sqrt(2).
    """
    parts = stream.normal(0.0, np.sqrt(0.5), size=(2, num_subchannels, num_workers))
    return np.hypot(parts[0], parts[1])


def worker_energy(power_scalar: float, gains_col: np.ndarray,
                  segs: GradientSegments) -> float:
    """Transmit energy for one worker: sum_m (sigma/h_m)^2 * ||g_m||^2."""
    energy = float(power_scalar ** 2 * np.sum(segs.squared_norms() / gains_col ** 2))
    if not np.isfinite(energy):
        raise ChannelError("non-finite transmit energy (near-zero gain with large gradient)")
    return energy


def mac_aggregate(scheduled: list[GradientSegments], power_scalar: float,
                  noise_stream: np.random.Generator,
                  noise_enabled: bool) -> ReceivedSignal:
    """Superpose the scheduled workers' aligned transmissions.

    y_m = sigma * sum_n g_{m,n} + z_m, with z_m entries i.i.d. standard
    normal when noise is enabled. Channel gains cancel by construction and
    do not appear here.
    """
    if not scheduled:
        raise ChannelError("no workers scheduled")
    offsets = scheduled[0].offsets
    for segs in scheduled[1:]:
        if not np.array_equal(segs.offsets, offsets):
            raise ChannelError("segment layout mismatch between workers")
    total = np.zeros_like(scheduled[0].values)
    for segs in scheduled:
        total += segs.values
    y = power_scalar * total
    if noise_enabled:
        y = y + noise_stream.standard_normal(len(y))
    return ReceivedSignal(values=y, offsets=offsets, noise_std=1.0 if noise_enabled else 0.0)


def descale(received: ReceivedSignal, power_scalar: float, num_scheduled: int) -> np.ndarray:
    """Server-side estimate of the mean scheduled gradient: y / (B * sigma)."""
    if num_scheduled < 1:
        raise ChannelError("descale requires at least one scheduled worker")
    return received.values / (num_scheduled * power_scalar)


def ps_descale_update(params: np.ndarray, received: ReceivedSignal, power_scalar: float,
                      num_scheduled: int, learning_rate: float,
                      velocity: np.ndarray, momentum: float) -> np.ndarray:
    """Descale the received superposition and take the global model step."""
    from .model import apply_update

    g_hat = descale(received, power_scalar, num_scheduled)
    return apply_update(params, g_hat, learning_rate, velocity, momentum)

"""Counter-based Wiener increments.

Increment ``k`` of a stream is a pure function of ``(seed, trajectory_index, k)``:
normal number ``j`` is built by Box-Muller from raw Philox outputs ``2j`` and
``2j+1`` under the key ``(seed, trajectory_index)``.  Any block of increments
can therefore be regenerated independently, in any order, on any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


def standard_normals(seed, trajectory_index, start, count):
    """Normals ``start .. start+count-1`` of the keyed stream."""
    if count <= 0:
        return np.empty(0)
    bg = np.random.Philox(key=[seed & _MASK64, trajectory_index & _MASK64])
    first_raw = 2 * start
    bg.advance(first_raw // 4)
    skip = first_raw % 4
    raw = bg.random_raw(skip + 2 * count)[skip:]
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class NoiseStream:
    """Wiener increments of variance ``dt``.

    ``substeps > 1`` builds each increment as the sum of ``substeps`` finer
    increments, so ``stream.coarsened(2)`` drives the same Brownian path as
    ``stream`` with twice the step.
    """

    seed: int
    trajectory_index: int
    dt: float
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt", f"must be > 0, got {self.dt}")
        if self.substeps < 1:
            raise ValidationError("substeps", "must be >= 1")
        if self.trajectory_index < 0:
            raise ValidationError("trajectory_index", "must be >= 0")

    def increments(self, start, count):
        z = standard_normals(self.seed, self.trajectory_index,
                             start * self.substeps, count * self.substeps)
        if self.substeps > 1:
            z = z.reshape(count, self.substeps).sum(axis=1)
        return z * math.sqrt(self.dt / self.substeps)

    def coarsened(self, factor):
        return NoiseStream(self.seed, self.trajectory_index,
                           self.dt * factor, self.substeps * factor)

"""Dense float64 vector primitives, layer partitioning, and seeded RNG streams.

Parameter and gradient vectors throughout the package are plain 1-D numpy
float64 arrays. A Partition assigns named, contiguous segments of such a
vector to layers so that per-layer statistics can be kept without copying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroGradientError(ValueError):
    """Raised when an operation requires a nonzero gradient and gets ``g = 0``."""


def make_rng(seed):
    """Return a deterministic random generator for the given integer seed.

    Identical seeds yield identical sample sequences across runs and
    platforms at identical call order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed, n):
    """Split one seed into ``n`` independent generators.

    Used to give parallel grid cells (and the independent concerns of a
    single run: init, batch schedule, data synthesis) non-overlapping
    streams that do not depend on call interleaving.
    """
    seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in seq.spawn(n)]


def sample_unit_vector(d, rng):
    """Draw a uniform point on the unit sphere in ``d`` dimensions.

    Normalized-Gaussian construction: d independent standard normals divided
    by their Euclidean norm. The measure-zero all-zero draw is resampled.
    For d = 1 the result is exactly +1 or -1.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    while True:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 0.0:
            return v / norm


def norm_sq(v):
    """Squared Euclidean norm of a vector."""
    v = np.asarray(v)
    return float(np.dot(v, v))


def update_path(p, g, alpha):
    """Exponential moving average of normalized gradients.

    Returns ``alpha * g/||g|| + (1 - alpha) * p``. Because the new term is a
    unit vector and p starts inside the unit ball, the result always stays
    inside the unit ball.
    """
    g = np.asarray(g, dtype=np.float64)
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        raise ZeroGradientError("cannot normalize a zero gradient")
    return alpha * (g / gnorm) + (1.0 - alpha) * p


@dataclass(frozen=True)
class Segment:
    """One named contiguous slice ``[start, start+length)`` of a flat vector."""

    name: str
    start: int
    length: int

    @property
    def stop(self):
        return self.start + self.length

    @property
    def slice(self):
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class Partition:
    """Named layer boundaries covering a flat vector without gaps or overlaps."""

    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ValueError("partition needs at least one segment")
        offset = 0
        for seg in self.segments:
            if seg.length < 1:
                raise ValueError(f"segment {seg.name!r} has length {seg.length}")
            if seg.start != offset:
                raise ValueError(
                    f"segment {seg.name!r} starts at {seg.start}, expected {offset}"
                )
            offset = seg.stop
        names = [seg.name for seg in self.segments]
        if len(set(names)) != len(names):
            raise ValueError("segment names must be unique")

    @property
    def size(self):
        return self.segments[-1].stop

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    def split(self, v):
        """Views of ``v``, one per segment, in order."""
        v = np.asarray(v)
        if v.shape != (self.size,):
            raise ValueError(f"vector of shape {v.shape} does not match size {self.size}")
        return [v[seg.slice] for seg in self.segments]

    @classmethod
    def single(cls, d, name="all"):
        """The trivial partition: one segment covering all d coordinates."""
        return cls((Segment(name, 0, d),))

    @classmethod
    def from_lengths(cls, named_lengths):
        """Build a partition from (name, length) pairs laid out back to back."""
        segments = []
        offset = 0
        for name, length in named_lengths:
            segments.append(Segment(name, offset, length))
            offset += length
        return cls(tuple(segments))

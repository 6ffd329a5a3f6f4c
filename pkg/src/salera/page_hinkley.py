"""Streaming change detection on the training loss, plus checkpoint recovery.

The detector watches a smoothed version of the mini-batch loss and
accumulates its deviation from a running mean. A sudden, persistent loss
increase makes the cumulated deviation climb away from its running minimum;
when the gap exceeds a threshold the step is declared a catastrophe, the
caller restores the last saved parameter vector and halves its learning
rates, and the detector starts over. Decreasing loss is welcome and goes
unmonitored (the test is one-sided).
"""

from __future__ import annotations

from math import isfinite

import numpy as np


class PageHinkley:
    """One-sided cumulative-deviation detector over a smoothed loss stream.

    State: step counter t, smoothed loss ell, running mean ell_bar,
    cumulated deviation total, and its running minimum. The trigger fires
    when ``total - total_min > delta``.

    The running mean intentionally starts from 0 rather than the first
    observation (first update yields ell_bar = ell/2), so a long perfectly
    flat stream still drifts slowly; callers monitoring pathological flat
    objectives can suppress early verdicts via a warmup count.
    """

    __slots__ = ("delta", "t", "ell", "ell_bar", "total", "total_min")

    def __init__(self, delta):
        if not delta > 0.0:
            raise ValueError(f"threshold delta must be > 0, got {delta}")
        self.delta = float(delta)
        self.reset()

    @classmethod
    def from_first_loss(cls, first_batch_loss, divisor=10.0):
        """Calibrate the threshold as a fraction of the initial loss level."""
        if not first_batch_loss > 0.0:
            raise ValueError(
                f"first batch loss must be > 0 to set a threshold, got {first_batch_loss}"
            )
        if not divisor > 0.0:
            raise ValueError(f"divisor must be > 0, got {divisor}")
        return cls(first_batch_loss / divisor)

    def reset(self):
        """Zero every accumulator and the counter; the threshold is preserved."""
        self.t = 0
        self.ell = 0.0
        self.ell_bar = 0.0
        self.total = 0.0
        self.total_min = 0.0

    @property
    def gap(self):
        """Current distance of the cumulated deviation above its minimum."""
        return self.total - self.total_min

    def observe(self, batch_loss, rho):
        """Fold one batch loss into the detector; return True on a trigger.

        In order: t += 1; ell = rho*loss + (1-rho)*ell;
        ell_bar = (ell + t*ell_bar)/(t+1); total += ell - ell_bar;
        total_min = min(total_min, total); trigger iff gap > delta.

        A non-finite loss is itself a catastrophe: it returns True
        immediately and leaves the accumulators untouched.
        """
        if not isfinite(batch_loss):
            return True
        if not 0.0 < rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {rho}")
        self.t += 1
        self.ell = rho * batch_loss + (1.0 - rho) * self.ell
        self.ell_bar = (self.ell + self.t * self.ell_bar) / (self.t + 1)
        self.total += self.ell - self.ell_bar
        self.total_min = min(self.total_min, self.total)
        return self.gap > self.delta


class Checkpoint:
    """Single-slot snapshot of the parameter vector before the latest accepted step."""

    __slots__ = ("_theta",)

    def __init__(self, theta):
        self._theta = np.array(theta, dtype=np.float64, copy=True)

    def save(self, theta):
        np.copyto(self._theta, theta)

    @property
    def theta(self):
        """The saved vector (read-only view; copy before mutating)."""
        view = self._theta.view()
        view.flags.writeable = False
        return view

    def restore(self):
        """A fresh mutable copy of the saved parameters."""
        return self._theta.copy()


def backtrack(checkpoint, rates):
    """Recovery action: restored parameters plus halved learning rates.

    ``rates`` may be a scalar learning rate or an array of per-layer rates;
    either way every rate is halved. Parameters come back as a copy of the
    checkpoint slot (which holds the initial vector if no step was ever
    accepted).
    """
    return checkpoint.restore(), rates / 2.0

"""Closed-form moments of the random-walk reference and the agnostic rate updates.

The adaptive rule compares the cumulative path p_t (an exponential moving
average of normalized mini-batch gradients) against what the same average
would look like if gradient directions were pure noise: the reference walk

    r_t = alpha * u_t + (1 - alpha) * r_{t-1},    r_0 = 0,

with u_t independent uniform unit vectors in dimension d. ||r_t||^2 has
closed-form mean and variance; the learning rate moves by the exponential of
the gap between ||p_t||^2 and that mean, measured in reference standard
deviations. A path more coherent than noise grows the rate, a less coherent
one shrinks it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, sqrt

import numpy as np

from .vectors import norm_sq, update_path


def _check_alpha(alpha, *, allow_one):
    ok = alpha > 0.0 and (alpha < 1.0 or (allow_one and alpha == 1.0))
    if not ok:
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"alpha must be in {interval}, got {alpha}")


def mean_t(alpha, t):
    """Mean of ||r_t||^2 after t steps of the unit-vector moving average.

    Writing q = 1 - alpha, the squared norm expands into a deterministic
    geometric sum plus zero-mean cross terms, so

        E||r_t||^2 = alpha^2 * sum_{l=1..t} q^(2(t-l)) = alpha/(2-alpha) * (1 - q^(2t)).

    Monotone nondecreasing in t, with limit alpha/(2-alpha). At t = 1 the
    walk is deterministic (r_1 = alpha * u_1), so the exact value alpha^2 is
    returned without float cancellation.
    """
    _check_alpha(alpha, allow_one=True)
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return 0.0
    if t == 1:
        return alpha * alpha
    q = 1.0 - alpha
    return alpha / (2.0 - alpha) * (1.0 - q ** (2 * t))


def var_t(alpha, d, t):
    """Variance of ||r_t||^2 after t steps in dimension d.

    With q = 1 - alpha,

        ||r_t||^2 = alpha^2 * S_t + 2 alpha^2 * sum_{l<k<=t} q^(2t-l-k) <u_l, u_k>,

    where S_t is deterministic. Distinct pair terms are uncorrelated and
    Var(<u_l, u_k>) = 1/d for independent uniform unit vectors, hence

        Var(||r_t||^2) = (4 alpha^4 / d) * sum_{l<k<=t} q^(2(2t-l-k))
                       = (1/d) * 4 alpha^2 q^2 / ((2-alpha)^2 (q^2+1))
                         * (1 - q^(2t)) * (1 - q^(2(t-1))).

    Zero for t <= 1 (the one-step walk is deterministic); increases
    monotonically to the d-scaled asymptote as t grows. The Monte Carlo
    oracle in the analysis module verifies this form directly.
    """
    _check_alpha(alpha, allow_one=False)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t <= 1:
        return 0.0
    q = 1.0 - alpha
    coeff = 4.0 * alpha * alpha * q * q / ((2.0 - alpha) ** 2 * (q * q + 1.0))
    return coeff / d * (1.0 - q ** (2 * t)) * (1.0 - q ** (2 * (t - 1)))


@dataclass(frozen=True)
class AgnosticReference:
    """Asymptotic reference moments for a given (alpha, d), plus per-parameter forms.

    mu and sigma are the t -> infinity limits of mean_t and sqrt(var_t).
    mu_pw = mu/d and sigma_pw = sigma/sqrt(d) center a single coordinate's
    squared path entry on its noise counterpart for the parameter-wise rule.
    """

    alpha: float
    d: int
    mu: float
    sigma: float
    mu_pw: float
    sigma_pw: float


def make_reference(alpha, d):
    """Precompute the asymptotic moments used by the rate update rules."""
    _check_alpha(alpha, allow_one=False)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    q = 1.0 - alpha
    mu = alpha / (2.0 - alpha)
    sigma = sqrt(4.0 * alpha * alpha * q * q / ((2.0 - alpha) ** 2 * (q * q + 1.0)) / d)
    return AgnosticReference(
        alpha=alpha,
        d=d,
        mu=mu,
        sigma=sigma,
        mu_pw=mu / d,
        sigma_pw=sigma / sqrt(d),
    )


@dataclass
class PathState:
    """Cumulative path p (EMA of normalized gradients) and its step counter.

    p starts at 0 and stays inside the unit ball by convexity.
    """

    p: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, d):
        return cls(p=np.zeros(d, dtype=np.float64), t=0)

    def advance(self, g, alpha):
        """Fold one gradient into the path. Raises ZeroGradientError on g = 0."""
        self.p = update_path(self.p, g, alpha)
        self.t += 1


def lr_update(eta, path, ref, gain):
    """Multiplicative learning-rate update from the path/reference gap.

    Returns ``eta * exp(gain * (||p||^2 - mu) / sigma)``; always positive,
    and scale-equivariant in eta. A path exactly as coherent as noise
    (||p||^2 = mu) leaves eta unchanged.
    """
    if eta <= 0.0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return eta * exp(gain * (norm_sq(path.p) - ref.mu) / ref.sigma)


def lr_update_paramwise(m, path, ref, gain):
    """Coordinate-wise version: multiplier m_i scaled by the gap of p_i^2.

    Each coordinate's squared path entry is compared with mu/d and the gap
    is normalized by sigma/sqrt(d):

        m_i' = m_i * exp(gain * (p_i^2 - mu/d) / (sigma/sqrt(d)))

    For d = 1 this reduces exactly to lr_update.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != path.p.shape:
        raise ValueError(f"multiplier shape {m.shape} != path shape {path.p.shape}")
    return m * np.exp(gain * (path.p * path.p - ref.mu_pw) / ref.sigma_pw)

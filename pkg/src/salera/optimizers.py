"""A uniform step interface over the optimizer family.

Plain baselines (fixed-rate SGD, Nesterov momentum, Adagrad, Adam), the
path-adaptive variants (layer-wise rate adaptation, its parameter-wise
form, and the same adaptation stacked on Adam), and the catastrophe-managed
variants that add loss monitoring with checkpoint/backtrack/halving
recovery.

Every optimizer owns its flat parameter vector and advances by

    info = optimizer.step(objective, batch)

where the objective exposes ``evaluate(theta, batch) -> (loss, grad_fn)``
and ``grad_fn()`` runs the backward pass lazily. The split matters for the
monitored variants: a step rejected by the detector restores the checkpoint
and never computes a gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np

from .agnostic import PathState, lr_update, lr_update_paramwise, make_reference
from .page_hinkley import Checkpoint, PageHinkley
from .vectors import Partition

VARIANTS = ("sgd", "nag", "adagrad", "adam", "alera", "salera", "spalera", "agadam")


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters selecting and tuning one optimizer variant.

    ph_threshold overrides the loss-calibrated detector threshold when set
    (use float('inf') to disable triggering); otherwise the threshold is
    first_batch_loss / ph_divisor. ph_warmup_batches suppresses gap-based
    verdicts while the detector's local counter is at or below the given
    count (non-finite losses still trigger).
    """

    variant: str = "salera"
    eta0: float = 0.01
    gamma: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_num: float = 1e-8
    alpha: float = 0.01
    gain: float = 3e-6
    ph_divisor: float = 10.0
    ph_threshold: float | None = None
    ph_warmup_batches: int = 0
    rho: float = 0.01
    layerwise: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")
        if not self.eta0 > 0.0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if not self.ph_divisor > 0.0:
            raise ValueError(f"ph_divisor must be > 0, got {self.ph_divisor}")


@dataclass
class StepInfo:
    """What one optimizer step reports back to the training loop."""

    loss: float
    triggered: bool = False
    gap: float | None = None
    delta: float | None = None


class QuadraticObjective:
    """Objective adapter for the 1-D parabola; the batch argument is ignored."""

    def __init__(self, parabola):
        self.parabola = parabola

    def evaluate(self, theta, batch=None):
        loss = self.parabola.loss(theta)
        theta_snapshot = np.array(theta, dtype=np.float64, copy=True)

        def grad_fn():
            return self.parabola.grad(theta_snapshot)

        return loss, grad_fn


class NetworkObjective:
    """Objective adapter for a DenseNet; batches are (inputs, labels) pairs."""

    def __init__(self, net):
        self.net = net

    def evaluate(self, theta, batch):
        from .nets import loss_and_error

        inputs, labels = batch
        logits, cache = self.net.forward(theta, inputs)
        loss, _ = loss_and_error(logits, labels)

        def grad_fn():
            return self.net.backward(cache, labels)

        return loss, grad_fn


class Optimizer:
    """Base: owns the parameter vector, subclasses implement step()."""

    variant = "base"

    def __init__(self, theta0):
        self.theta = np.array(theta0, dtype=np.float64, copy=True)
        if self.theta.ndim != 1:
            raise ValueError("parameters must form a flat 1-D vector")

    @property
    def dim(self):
        return self.theta.shape[0]

    def step(self, objective, batch=None):
        raise NotImplementedError

    def rate_values(self):
        """Current learning rates keyed by log-column name."""
        raise NotImplementedError


class Sgd(Optimizer):
    """Fixed-rate gradient descent: theta <- theta - eta0 * g."""

    variant = "sgd"

    def __init__(self, theta0, eta0):
        super().__init__(theta0)
        self.eta0 = float(eta0)

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        g = grad_fn()
        self.theta = self.theta - self.eta0 * g
        return StepInfo(loss=loss)

    def rate_values(self):
        return {"eta": self.eta0}


class Nesterov(Optimizer):
    """Momentum with lookahead gradient.

    v' = gamma*v - eta0 * grad(theta + gamma*v); theta' = theta + v'.
    The reported loss is the one actually computed, i.e. at the lookahead
    point; with gamma = 0 every step reduces to plain SGD.
    """

    variant = "nag"

    def __init__(self, theta0, eta0, gamma=0.9):
        super().__init__(theta0)
        self.eta0 = float(eta0)
        self.gamma = float(gamma)
        self.velocity = np.zeros_like(self.theta)

    def step(self, objective, batch=None):
        lookahead = self.theta + self.gamma * self.velocity
        loss, grad_fn = objective.evaluate(lookahead, batch)
        g = grad_fn()
        self.velocity = self.gamma * self.velocity - self.eta0 * g
        self.theta = self.theta + self.velocity
        return StepInfo(loss=loss)

    def rate_values(self):
        return {"eta": self.eta0}


class Adagrad(Optimizer):
    """Per-coordinate rate decay by accumulated squared gradients."""

    variant = "adagrad"

    def __init__(self, theta0, eta0, eps_num=1e-8):
        super().__init__(theta0)
        self.eta0 = float(eta0)
        self.eps_num = float(eps_num)
        self.accum = np.zeros_like(self.theta)

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        g = grad_fn()
        self.accum = self.accum + g * g
        self.theta = self.theta - self.eta0 * g / (np.sqrt(self.accum) + self.eps_num)
        return StepInfo(loss=loss)

    def rate_values(self):
        return {"eta": self.eta0}


class Adam(Optimizer):
    """Bias-corrected first/second moment update."""

    variant = "adam"

    def __init__(self, theta0, eta0, beta1=0.9, beta2=0.999, eps_num=1e-8):
        super().__init__(theta0)
        self.eta0 = float(eta0)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps_num = float(eps_num)
        self.m = np.zeros_like(self.theta)
        self.v = np.zeros_like(self.theta)
        self.t = 0

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        g = grad_fn()
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (g * g)
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        self.theta = self.theta - self.eta0 * m_hat / (np.sqrt(v_hat) + self.eps_num)
        return StepInfo(loss=loss)

    def rate_values(self):
        return {"eta": self.eta0}


class Alera(Optimizer):
    """Layer-wise path-adaptive rates.

    Each partition segment keeps its own cumulative path, reference moments
    (dimension = the segment's parameter count) and learning rate. Per step
    and per layer, in order: fold the normalized layer gradient into the
    path, move the rate by the path/reference gap, apply the rate to the
    raw layer gradient. A layer whose gradient vanishes is left entirely
    alone for that step.
    """

    variant = "alera"

    def __init__(self, theta0, eta0, alpha, gain, partition=None, layerwise=True):
        super().__init__(theta0)
        if partition is None or not layerwise:
            partition = Partition.single(self.dim)
        if partition.size != self.dim:
            raise ValueError(f"partition covers {partition.size} of {self.dim} parameters")
        self.partition = partition
        self.eta0 = float(eta0)
        self.alpha = float(alpha)
        self.gain = float(gain)
        self.paths = [PathState.zeros(seg.length) for seg in partition]
        self.refs = [make_reference(alpha, seg.length) for seg in partition]
        self.etas = [float(eta0) for _ in partition]

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        g = grad_fn()
        self._apply_update(g)
        return StepInfo(loss=loss)

    def _apply_update(self, g):
        for i, seg in enumerate(self.partition):
            g_layer = g[seg.slice]
            if not np.any(g_layer):
                continue
            self.paths[i].advance(g_layer, self.alpha)
            self.etas[i] = lr_update(self.etas[i], self.paths[i], self.refs[i], self.gain)
            self.theta[seg.slice] = self.theta[seg.slice] - self.etas[i] * g_layer

    def _halve_rates(self):
        self.etas = [eta / 2.0 for eta in self.etas]

    def rate_values(self):
        return {f"eta_{seg.name}": eta for seg, eta in zip(self.partition, self.etas)}


class _MonitoredMixin:
    """Shared detector plumbing for the catastrophe-managed variants."""

    def _init_monitor(self, theta0, rho, ph_divisor, ph_threshold, ph_warmup_batches):
        self.rho = float(rho)
        self.ph_divisor = float(ph_divisor)
        self.ph_warmup_batches = int(ph_warmup_batches)
        self.detector = None if ph_threshold is None else PageHinkley(ph_threshold)
        self.checkpoint = Checkpoint(theta0)

    def _observe(self, loss):
        """Feed the detector; returns the final verdict for this step."""
        if self.detector is None:
            self.detector = PageHinkley.from_first_loss(loss, self.ph_divisor)
        triggered = self.detector.observe(loss, self.rho)
        if triggered and isfinite(loss) and self.detector.t <= self.ph_warmup_batches:
            triggered = False
        return triggered

    @property
    def delta(self):
        return None if self.detector is None else self.detector.delta


class Salera(_MonitoredMixin, Alera):
    """Layer-wise adaptive rates guarded by the loss-change detector.

    Each step, in order: forward pass; detector update; on a trigger the
    checkpoint is restored, every layer rate is halved, the detector is
    reset, and no backward pass runs. Otherwise the checkpoint is saved and
    the layer-wise update proceeds as in Alera. Paths survive triggers;
    only parameters are rolled back.
    """

    variant = "salera"

    def __init__(
        self,
        theta0,
        eta0,
        alpha,
        gain,
        partition=None,
        layerwise=True,
        rho=0.01,
        ph_divisor=10.0,
        ph_threshold=None,
        ph_warmup_batches=0,
    ):
        super().__init__(theta0, eta0, alpha, gain, partition=partition, layerwise=layerwise)
        self._init_monitor(theta0, rho, ph_divisor, ph_threshold, ph_warmup_batches)

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        triggered = self._observe(loss)
        if triggered:
            gap = self.detector.gap
            self.theta = self.checkpoint.restore()
            self._halve_rates()
            self.detector.reset()
            return StepInfo(loss=loss, triggered=True, gap=gap, delta=self.delta)
        self.checkpoint.save(self.theta)
        g = grad_fn()
        self._apply_update(g)
        return StepInfo(loss=loss, gap=self.detector.gap, delta=self.delta)


class Spalera(_MonitoredMixin, Optimizer):
    """Parameter-wise adaptive multipliers guarded by the loss-change detector.

    One cumulative path spans all d parameters by default (set
    layerwise=True to keep one per partition segment). Coordinate i carries
    a positive multiplier m_i, updated from the gap between p_i^2 and the
    per-coordinate reference moments; the applied step is
    theta_i <- theta_i - eta0 * m_i * g_i. A trigger restores the
    checkpoint, halves the global scale eta0, and resets the detector; the
    multipliers and paths are preserved.
    """

    variant = "spalera"

    def __init__(
        self,
        theta0,
        eta0,
        alpha,
        gain,
        partition=None,
        layerwise=False,
        rho=0.01,
        ph_divisor=10.0,
        ph_threshold=None,
        ph_warmup_batches=0,
    ):
        Optimizer.__init__(self, theta0)
        if partition is None or not layerwise:
            partition = Partition.single(self.dim)
        if partition.size != self.dim:
            raise ValueError(f"partition covers {partition.size} of {self.dim} parameters")
        self.partition = partition
        self.eta0 = float(eta0)
        self.alpha = float(alpha)
        self.gain = float(gain)
        self.paths = [PathState.zeros(seg.length) for seg in partition]
        self.refs = [make_reference(alpha, seg.length) for seg in partition]
        self.multipliers = np.ones(self.dim, dtype=np.float64)
        self._init_monitor(theta0, rho, ph_divisor, ph_threshold, ph_warmup_batches)

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        triggered = self._observe(loss)
        if triggered:
            gap = self.detector.gap
            self.theta = self.checkpoint.restore()
            self.eta0 = self.eta0 / 2.0
            self.detector.reset()
            return StepInfo(loss=loss, triggered=True, gap=gap, delta=self.delta)
        self.checkpoint.save(self.theta)
        g = grad_fn()
        for i, seg in enumerate(self.partition):
            g_layer = g[seg.slice]
            if not np.any(g_layer):
                continue
            self.paths[i].advance(g_layer, self.alpha)
            self.multipliers[seg.slice] = lr_update_paramwise(
                self.multipliers[seg.slice], self.paths[i], self.refs[i], self.gain
            )
            self.theta[seg.slice] = self.theta[seg.slice] - (
                self.eta0 * self.multipliers[seg.slice]
            ) * g_layer
        return StepInfo(loss=loss, gap=self.detector.gap, delta=self.delta)

    def rate_values(self):
        m = self.multipliers
        return {
            "eta0": self.eta0,
            "m_min": float(m.min()),
            "m_mean": float(m.mean()),
            "m_max": float(m.max()),
        }


class AgAdam(Optimizer):
    """Adam with layer-wise path-adaptive step sizes.

    The cumulative path is built from the raw (normalized) layer gradient,
    not from Adam's preconditioned direction; the resulting rate then feeds
    a standard bias-corrected Adam update on that layer. A zero-gradient
    layer skips its path/rate update but still runs the Adam moment decay,
    so a zero gain stays exactly equivalent to plain Adam.
    """

    variant = "agadam"

    def __init__(
        self,
        theta0,
        eta0,
        alpha,
        gain,
        partition=None,
        layerwise=True,
        beta1=0.9,
        beta2=0.999,
        eps_num=1e-8,
    ):
        super().__init__(theta0)
        if partition is None or not layerwise:
            partition = Partition.single(self.dim)
        if partition.size != self.dim:
            raise ValueError(f"partition covers {partition.size} of {self.dim} parameters")
        self.partition = partition
        self.eta0 = float(eta0)
        self.alpha = float(alpha)
        self.gain = float(gain)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps_num = float(eps_num)
        self.paths = [PathState.zeros(seg.length) for seg in partition]
        self.refs = [make_reference(alpha, seg.length) for seg in partition]
        self.etas = [float(eta0) for _ in partition]
        self.m = np.zeros_like(self.theta)
        self.v = np.zeros_like(self.theta)
        self.t = 0

    def step(self, objective, batch=None):
        loss, grad_fn = objective.evaluate(self.theta, batch)
        g = grad_fn()
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for i, seg in enumerate(self.partition):
            sl = seg.slice
            g_layer = g[sl]
            if np.any(g_layer):
                self.paths[i].advance(g_layer, self.alpha)
                self.etas[i] = lr_update(self.etas[i], self.paths[i], self.refs[i], self.gain)
            self.m[sl] = self.beta1 * self.m[sl] + (1.0 - self.beta1) * g_layer
            self.v[sl] = self.beta2 * self.v[sl] + (1.0 - self.beta2) * (g_layer * g_layer)
            m_hat = self.m[sl] / bias1
            v_hat = self.v[sl] / bias2
            self.theta[sl] = self.theta[sl] - self.etas[i] * m_hat / (np.sqrt(v_hat) + self.eps_num)
        return StepInfo(loss=loss)

    def rate_values(self):
        return {f"eta_{seg.name}": eta for seg, eta in zip(self.partition, self.etas)}


def build_optimizer(config, theta0, partition=None):
    """Instantiate the optimizer selected by an OptimizerConfig."""
    if config.variant == "sgd":
        return Sgd(theta0, config.eta0)
    if config.variant == "nag":
        return Nesterov(theta0, config.eta0, gamma=config.gamma)
    if config.variant == "adagrad":
        return Adagrad(theta0, config.eta0, eps_num=config.eps_num)
    if config.variant == "adam":
        return Adam(
            theta0, config.eta0, beta1=config.beta1, beta2=config.beta2, eps_num=config.eps_num
        )
    if config.variant == "alera":
        return Alera(
            theta0,
            config.eta0,
            config.alpha,
            config.gain,
            partition=partition,
            layerwise=config.layerwise,
        )
    if config.variant == "salera":
        return Salera(
            theta0,
            config.eta0,
            config.alpha,
            config.gain,
            partition=partition,
            layerwise=config.layerwise,
            rho=config.rho,
            ph_divisor=config.ph_divisor,
            ph_threshold=config.ph_threshold,
            ph_warmup_batches=config.ph_warmup_batches,
        )
    if config.variant == "spalera":
        return Spalera(
            theta0,
            config.eta0,
            config.alpha,
            config.gain,
            partition=partition,
            layerwise=config.layerwise,
            rho=config.rho,
            ph_divisor=config.ph_divisor,
            ph_threshold=config.ph_threshold,
            ph_warmup_batches=config.ph_warmup_batches,
        )
    if config.variant == "agadam":
        return AgAdam(
            theta0,
            config.eta0,
            config.alpha,
            config.gain,
            partition=partition,
            layerwise=config.layerwise,
            beta1=config.beta1,
            beta2=config.beta2,
            eps_num=config.eps_num,
        )
    raise ValueError(f"unknown variant {config.variant!r}")

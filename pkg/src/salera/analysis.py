"""Verification tools: Monte Carlo moments of the reference walk and the
halving-factor cost model.

The Monte Carlo simulator is the ground-truth oracle for the closed-form
mean/variance of ||r_t||^2 in the agnostic module. The cost model scores a
generic recovery scheme that divides the learning rate by a factor zeta on
each detected catastrophe: J(zeta) balances the number of divisions needed
to re-enter the stable zone against the expected overshoot and re-ascent
cost, and has its global minimum between 3 and 5 for small detection-cost
constants even though halving (zeta = 2) is the conventional choice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .agnostic import mean_t, var_t

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class MomentEstimate:
    """Sample moments of ||r_t||^2 over independent replicated walks."""

    alpha: float
    d: int
    t: int
    n_reps: int
    mean_est: float
    var_est: float
    stderr_mean: float


def monte_carlo_rt(alpha, d, t, n_reps, rng):
    """Simulate n_reps independent reference walks of t steps; return moments.

    Each replica starts from r = 0 and folds a fresh uniform unit vector per
    step: r <- alpha*u + (1-alpha)*r. All replicas advance in lockstep as an
    (n_reps, d) array. Final reductions use compensated summation so the
    estimate does not depend on accumulation order.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if n_reps < 100:
        raise ValueError(f"need at least 100 replicas, got {n_reps}")
    walks = np.zeros((n_reps, d), dtype=np.float64)
    for _ in range(t):
        units = rng.standard_normal((n_reps, d))
        norms = np.linalg.norm(units, axis=1, keepdims=True)
        # the measure-zero all-zero row would need a resample; with float64
        # normals it cannot occur, but guard the division anyway
        np.maximum(norms, np.finfo(np.float64).tiny, out=norms)
        units /= norms
        walks = alpha * units + (1.0 - alpha) * walks
    sq_norms = np.einsum("ij,ij->i", walks, walks)
    mean_est = math.fsum(sq_norms) / n_reps
    var_est = math.fsum((x - mean_est) ** 2 for x in sq_norms) / (n_reps - 1)
    stderr_mean = math.sqrt(var_est) / math.sqrt(n_reps)
    return MomentEstimate(
        alpha=alpha,
        d=d,
        t=t,
        n_reps=n_reps,
        mean_est=mean_est,
        var_est=var_est,
        stderr_mean=stderr_mean,
    )


def moment_grid(alphas, ds, ts, n_reps=10_000, seed=0):
    """Run the Monte Carlo oracle over a parameter grid.

    Returns a list of (estimate, closed_mean, closed_var) triples; each cell
    gets its own generator spawned from the seed so cells are independent
    and order-insensitive.
    """
    cells = [(a, d, t) for a in alphas for d in ds for t in ts]
    seeds = np.random.SeedSequence(seed).spawn(len(cells))
    out = []
    for (a, d, t), child in zip(cells, seeds):
        rng = np.random.Generator(np.random.PCG64(child))
        est = monte_carlo_rt(a, d, t, n_reps, rng)
        out.append((est, mean_t(a, t), var_t(a, d, t)))
    return out


def write_moment_csv(rows, path):
    """One CSV row per grid cell: parameters, closed forms, estimates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "alpha",
                "d",
                "t",
                "n_reps",
                "mean_closed",
                "mean_est",
                "stderr_mean",
                "var_closed",
                "var_est",
            ]
        )
        for est, mean_c, var_c in rows:
            writer.writerow(
                [
                    est.alpha,
                    est.d,
                    est.t,
                    est.n_reps,
                    repr(mean_c),
                    repr(est.mean_est),
                    repr(est.stderr_mean),
                    repr(var_c),
                    repr(est.var_est),
                ]
            )


def finite_diff_grad(f, theta, h=1e-6):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + h
        up = f(bumped)
        bumped[i] = theta[i] - h
        down = f(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad


def gradient_check(net, rng, batch_size=5, h=1e-6):
    """Compare backprop against central finite differences on a random instance.

    Returns the relative error ||g_bp - g_fd||_inf / max(||g_bp||_inf,
    ||g_fd||_inf), computed at a fresh random parameter vector on a random
    batch with random labels.
    """
    from .nets import loss_and_error

    theta = net.init_params(rng)
    inputs = rng.standard_normal((batch_size, net.sizes[0]))
    labels = rng.integers(0, net.n_classes, size=batch_size)

    def loss_of(params):
        logits, _ = net.forward(params, inputs)
        loss, _ = loss_and_error(logits, labels)
        return loss

    _, cache = net.forward(theta, inputs)
    analytic = net.backward(cache, labels)
    numeric = finite_diff_grad(loss_of, theta, h=h)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    return float(np.abs(analytic - numeric).max() / scale)


def cost_T(eps_rate):
    """Expected recovery steps spent inside the stable zone, times eps_rate.

    T = (log 2 - 1/2) / eps_rate, from integrating log(2u) over the landing
    interval u in (1/2, 1].
    """
    if not eps_rate > 0.0:
        raise ValueError(f"eps_rate must be > 0, got {eps_rate}")
    return (LOG2 - 0.5) / eps_rate


def cost_U(zeta, eps_rate):
    """Expected re-ascent cost after overshooting below the stable zone.

    U(zeta) = (1/2 - log(zeta)/zeta - (1 - log 2)/zeta) / eps_rate, defined
    for zeta >= 2 (smaller factors cannot land below half the stable edge;
    U(2) = 0 exactly).
    """
    if not eps_rate > 0.0:
        raise ValueError(f"eps_rate must be > 0, got {eps_rate}")
    if zeta < 2.0:
        raise ValueError(f"cost_U needs zeta >= 2, got {zeta}")
    return (0.5 - math.log(zeta) / zeta - (1.0 - LOG2) / zeta) / eps_rate


def cost_J(zeta, c_const):
    """Total normalized cost of recovering with dividing factor zeta.

    J = c/log(zeta)                          (divisions until stable)
        + (zeta-2)/(2(zeta-1)) * (1/2 - log(zeta)/zeta - (1-log 2)/zeta)
                                             (overshoot re-ascent, weighted)
        + zeta/(2(zeta-1)) * (log 2 - 1/2)   (in-zone settling, weighted)

    Evaluated as written on all of zeta > 1; below 2 the middle bracket and
    its weight are both nonpositive, which keeps J finite and continuous.
    """
    if not zeta > 1.0:
        raise ValueError(f"cost_J needs zeta > 1, got {zeta}")
    if not c_const > 0.0:
        raise ValueError(f"c_const must be > 0, got {c_const}")
    log_z = math.log(zeta)
    division_cost = c_const / log_z
    overshoot = 0.5 * (zeta - 2.0) / (zeta - 1.0) * (0.5 - log_z / zeta - (1.0 - LOG2) / zeta)
    settle = 0.5 * zeta / (zeta - 1.0) * (LOG2 - 0.5)
    return division_cost + overshoot + settle


def zeta_grid(lo=1.05, hi=20.0, step=0.01):
    """Uniform evaluation grid, endpoints included."""
    count = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(count)


@dataclass(frozen=True)
class CostCurve:
    """J evaluated on a zeta grid for one cost constant, plus its argmin."""

    c_const: float
    zetas: np.ndarray
    values: np.ndarray
    zeta_star: float
    j_star: float


def argmin_J(c_const, zetas=None):
    """Grid argmin of J with parabolic refinement through the three
    surrounding points; returns (zeta_star, J(zeta_star))."""
    if zetas is None:
        zetas = zeta_grid()
    values = np.array([cost_J(z, c_const) for z in zetas])
    k = int(np.argmin(values))
    if 0 < k < len(zetas) - 1:
        x0, x1, x2 = zetas[k - 1 : k + 2]
        y0, y1, y2 = values[k - 1 : k + 2]
        denom = (y0 - 2.0 * y1 + y2)
        if denom > 0.0:
            refined = x1 + 0.5 * (x0 - x1) * (y2 - y1) / denom + 0.5 * (x2 - x1) * (y0 - y1) / denom
            lo, hi = min(x0, x2), max(x0, x2)
            if lo <= refined <= hi:
                candidate = cost_J(float(refined), c_const)
                if candidate <= values[k]:
                    return float(refined), float(candidate)
    return float(zetas[k]), float(values[k])


def cost_curve(c_const, zetas=None):
    if zetas is None:
        zetas = zeta_grid()
    values = np.array([cost_J(z, c_const) for z in zetas])
    zeta_star, j_star = argmin_J(c_const, zetas)
    return CostCurve(
        c_const=c_const, zetas=zetas, values=values, zeta_star=zeta_star, j_star=j_star
    )


def write_cost_csv(curve, path):
    """One CSV per cost curve: rows of (zeta, J)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zeta", "J"])
        for z, j in zip(curve.zetas, curve.values):
            writer.writerow([repr(float(z)), repr(float(j))])

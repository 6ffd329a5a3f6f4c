"""Adaptive-learning-rate SGD with agnostic rate calibration and
Page-Hinkley catastrophe management.

The package covers four layers:

- core math: cumulative gradient paths, closed-form moments of the matching
  random reference walk, multiplicative learning-rate updates (``agnostic``),
  and the Page-Hinkley change detector with checkpoint backtracking
  (``page_hinkley``);
- optimizers: SGD/Nesterov/Adagrad/Adam baselines and the adaptive variants
  built on them (``optimizers``);
- models and data: a dense softmax network with manual backprop (``nets``),
  IDX/MNIST loading, synthetic datasets, batch schedules (``data``);
- verification and experiments: Monte Carlo moment oracles, gradient checks,
  the rate-division cost curve (``analysis``), a training harness with CSV
  logging and grid sweeps (``harness``), a CLI (``cli``), and an
  sklearn-compatible classifier (``estimator``).
"""

from .agnostic import (
    AgnosticReference,
    PathState,
    lr_update,
    lr_update_paramwise,
    make_reference,
    mean_t,
    var_t,
)
from .data import Dataset, load_idx, make_blob_dataset, make_blob_split, make_parabola, standardize
from .estimator import SaleraClassifier
from .harness import RunConfig, config_from_mapping, run_grid, run_training
from .nets import DenseNet, m0_net, m2_net
from .optimizers import VARIANTS, OptimizerConfig, build_optimizer
from .page_hinkley import Checkpoint, PageHinkley, backtrack
from .vectors import Partition, Segment, ZeroGradientError, make_rng, spawn_rngs

__version__ = "0.1.0"

__all__ = [
    "AgnosticReference",
    "Checkpoint",
    "Dataset",
    "DenseNet",
    "OptimizerConfig",
    "PageHinkley",
    "Partition",
    "PathState",
    "RunConfig",
    "SaleraClassifier",
    "Segment",
    "VARIANTS",
    "ZeroGradientError",
    "backtrack",
    "build_optimizer",
    "config_from_mapping",
    "load_idx",
    "lr_update",
    "lr_update_paramwise",
    "m0_net",
    "m2_net",
    "make_blob_dataset",
    "make_blob_split",
    "make_parabola",
    "make_reference",
    "make_rng",
    "mean_t",
    "run_grid",
    "run_training",
    "spawn_rngs",
    "standardize",
    "var_t",
    "__version__",
]

"""Experiment harness: single training runs, hyperparameter grids, metric logs.

A run is fully determined by its RunConfig (including the seed): the same
config produces byte-identical CSV output. Configuration files are flat
``key = value`` text; CLI flags override file values. Grids are the same
format with comma-separated value lists expanded as a cross product, run
cell by cell (optionally in parallel processes), and aggregated over seeds.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
import os
import traceback
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    batches_per_epoch,
    load_idx,
    make_blob_split,
    make_parabola,
    minibatch_schedule,
    standardize,
)
from .nets import m0_net, m2_net
from .optimizers import (
    NetworkObjective,
    OptimizerConfig,
    QuadraticObjective,
    build_optimizer,
)
from .vectors import spawn_rngs

FAILED_ERROR_LEVEL = 0.80

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs; flat so key=value files map 1:1."""

    dataset: str = "blobs"
    model: str = "m0"
    optimizer: str = "salera"
    epochs: int = 20
    seed: int = 0
    rho: float = 0.01
    out_dir: str = ""

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
    layerwise: bool = True

    mnist_dir: str = "data/mnist"
    blobs_n: int = 2000
    blobs_test_n: int = 1000
    blobs_features: int = 20
    blobs_classes: int = 5
    blobs_std: float = 2.0
    parabola_a: float = 1.0
    parabola_theta0: float = 1.0

    def __post_init__(self):
        if self.dataset not in ("blobs", "mnist", "parabola"):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.model not in ("m0", "m2", "parabola1d"):
            raise ValueError(f"unknown model {self.model!r}")
        if (self.dataset == "parabola") != (self.model == "parabola1d"):
            raise ValueError("dataset 'parabola' pairs exactly with model 'parabola1d'")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def optimizer_config(self):
        return OptimizerConfig(
            variant=self.optimizer,
            eta0=self.eta0,
            gamma=self.gamma,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_num=self.eps_num,
            alpha=self.alpha,
            gain=self.gain,
            ph_divisor=self.ph_divisor,
            ph_threshold=self.ph_threshold,
            ph_warmup_batches=self.ph_warmup_batches,
            rho=self.rho,
            layerwise=self.layerwise,
        )


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text):
    lowered = text.strip().lower()
    if lowered in ("", "none", "null"):
        return None
    return float(text)


_CONVERTERS = {
    int: int,
    float: float,
    str: lambda s: s.strip(),
    bool: _parse_bool,
}


def parse_config_text(text):
    """Parse flat ``key = value`` lines; '#' starts a comment, blanks skipped."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def parse_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_from_mapping(mapping, overrides=None):
    """Build a RunConfig from string values, with overrides winning."""
    merged = dict(mapping)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name: f for f in fields(RunConfig)}
    kwargs = {}
    for key, value in merged.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if not isinstance(value, str):
            kwargs[key] = value
            continue
        if key == "ph_threshold":
            kwargs[key] = _parse_optional_float(value)
            continue
        target = type(getattr(RunConfig, key))
        kwargs[key] = _CONVERTERS[target](value)
    return RunConfig(**kwargs)


@dataclass
class MetricsRecord:
    """Per-batch and per-epoch logs plus the run's one-line summary."""

    batch_rows: list
    epoch_rows: list
    events: list
    summary: dict

    @property
    def failed(self):
        return bool(self.summary.get("failed"))


def build_net(config, n_features, n_classes):
    if config.model == "m0":
        return m0_net(n_features, n_classes)
    if config.model == "m2":
        return m2_net(n_features, n_classes)
    raise ValueError(f"model {config.model!r} is not a network")


def load_datasets(config, data_rng_seed):
    """Materialize (train, test) for a classification RunConfig."""
    if config.dataset == "blobs":
        return make_blob_split(
            config.blobs_n,
            config.blobs_test_n,
            config.blobs_features,
            config.blobs_classes,
            seed=data_rng_seed,
            cluster_std=config.blobs_std,
        )
    if config.dataset == "mnist":
        train_images, train_labels = (
            find_mnist_file(config.mnist_dir, name) for name in MNIST_FILES["train"]
        )
        test_images, test_labels = (
            find_mnist_file(config.mnist_dir, name) for name in MNIST_FILES["test"]
        )
        train = load_idx(train_images, train_labels)
        test = load_idx(test_images, test_labels)
        train, test, _ = standardize(train, test)
        return train, test
    raise ValueError(f"dataset {config.dataset!r} is not a classification dataset")


def find_mnist_file(directory, stem):
    """Locate an IDX file by stem, accepting a .gz variant."""
    for candidate in (stem, stem + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"{stem}[.gz] not found in {directory!r}; see scripts/fetch_mnist.sh"
    )


def mnist_available(directory):
    try:
        for names in MNIST_FILES.values():
            for stem in names:
                find_mnist_file(directory, stem)
    except FileNotFoundError:
        return False
    return True


def evaluate(net, theta, dataset, chunk=8192):
    """Mean cross-entropy and error rate over a full dataset, chunked."""
    n = dataset.n
    loss_total = 0.0
    wrong = 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        logits, _ = net.forward(theta, dataset.inputs[start:stop])
        labels = dataset.labels[start:stop]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        loss_total += float(np.sum(log_norm - shifted[np.arange(stop - start), labels]))
        wrong += int(np.count_nonzero(np.argmax(logits, axis=1) != labels))
    return loss_total / n, wrong / n


def training_steps(optimizer, objective, dataset, rho, epochs, rng):
    """Drive the optimizer over the batch schedule.

    Yields (epoch, batch_in_epoch, global_batch, StepInfo); global_batch
    counts from 1 and is never reset (the detector keeps its own counter).
    """
    per_epoch = batches_per_epoch(dataset.n, rho)
    global_batch = 0
    for i, idx in enumerate(minibatch_schedule(dataset.n, rho, epochs, rng)):
        batch = (dataset.inputs[idx], dataset.labels[idx])
        info = optimizer.step(objective, batch)
        global_batch += 1
        yield i // per_epoch, i % per_epoch, global_batch, info


def _first_rate(optimizer):
    return next(iter(optimizer.rate_values().values()))


def run_training(config):
    """Execute one run; write CSVs/summary if out_dir is set; return metrics."""
    if config.dataset == "parabola":
        return _run_parabola(config)

    init_rng, schedule_rng = spawn_rngs(config.seed, 2)
    train, test = load_datasets(config, data_rng_seed=config.seed)
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    net = build_net(config, train.n_features, n_classes)
    theta0 = net.init_params(init_rng)
    optimizer = build_optimizer(config.optimizer_config(), theta0, net.partition)
    objective = NetworkObjective(net)

    rate_names = list(optimizer.rate_values().keys())
    batch_rows = []
    epoch_rows = []
    events = []
    smoothed = 0.0
    triggers = 0
    current_epoch = -1
    test_error_by_epoch = {}

    for epoch, _, global_batch, info in training_steps(
        optimizer, objective, train, config.rho, config.epochs, schedule_rng
    ):
        if epoch != current_epoch and current_epoch >= 0:
            epoch_rows.append(_epoch_row(net, optimizer, train, test, current_epoch))
            test_error_by_epoch[current_epoch + 1] = epoch_rows[-1][2]
        if epoch != current_epoch:
            current_epoch = epoch
        if info.triggered:
            triggers += 1
            after = _first_rate(optimizer)
            events.append((global_batch, info.gap, info.delta, after * 2.0, after))
        smoothed = config.rho * info.loss + (1.0 - config.rho) * smoothed
        row = {
            "global_batch": global_batch,
            "smoothed_loss": smoothed,
            "raw_loss": info.loss,
        }
        row.update(optimizer.rate_values())
        row["ph_gap"] = info.gap
        row["triggered"] = int(info.triggered)
        batch_rows.append(row)

    epoch_rows.append(_epoch_row(net, optimizer, train, test, current_epoch))
    test_error_by_epoch[current_epoch + 1] = epoch_rows[-1][2]

    final_train_error = epoch_rows[-1][1]
    final_test_error = epoch_rows[-1][2]
    summary = {
        "dataset": config.dataset,
        "model": config.model,
        "optimizer": config.optimizer,
        "seed": config.seed,
        "epochs": config.epochs,
        "eta0": config.eta0,
        "alpha": config.alpha,
        "gain": config.gain,
        "rho": config.rho,
        "final_train_error": final_train_error,
        "final_test_error": final_test_error,
        "final_test_loss": epoch_rows[-1][3],
        "test_error_5ep": test_error_by_epoch.get(5, float("nan")),
        "test_error_20ep": test_error_by_epoch.get(20, float("nan")),
        "triggers": triggers,
        "failed": int(final_test_error > FAILED_ERROR_LEVEL),
    }
    record = MetricsRecord(
        batch_rows=batch_rows, epoch_rows=epoch_rows, events=events, summary=summary
    )
    if config.out_dir:
        write_run_outputs(record, rate_names, config.out_dir)
    return record


def _epoch_row(net, optimizer, train, test, epoch):
    _, train_error = evaluate(net, optimizer.theta, train)
    test_loss, test_error = evaluate(net, optimizer.theta, test)
    return (epoch, train_error, test_error, test_loss)


def _run_parabola(config):
    """Deterministic 1-D runs: one optimizer step per epoch, loss as metric."""
    parabola = make_parabola(config.parabola_a, config.parabola_theta0)
    theta0 = parabola.initial_theta()
    optimizer = build_optimizer(config.optimizer_config(), theta0)
    objective = QuadraticObjective(parabola)

    rate_names = list(optimizer.rate_values().keys())
    batch_rows = []
    epoch_rows = []
    events = []
    smoothed = 0.0
    triggers = 0
    for step in range(1, config.epochs + 1):
        info = optimizer.step(objective, None)
        if info.triggered:
            triggers += 1
            after = _first_rate(optimizer)
            events.append((step, info.gap, info.delta, after * 2.0, after))
        smoothed = config.rho * info.loss + (1.0 - config.rho) * smoothed
        row = {
            "global_batch": step,
            "smoothed_loss": smoothed,
            "raw_loss": info.loss,
        }
        row.update(optimizer.rate_values())
        row["ph_gap"] = info.gap
        row["triggered"] = int(info.triggered)
        batch_rows.append(row)
        loss_now = parabola.loss(optimizer.theta)
        epoch_rows.append((step - 1, float("nan"), float("nan"), loss_now))

    summary = {
        "dataset": "parabola",
        "model": "parabola1d",
        "optimizer": config.optimizer,
        "seed": config.seed,
        "epochs": config.epochs,
        "eta0": config.eta0,
        "alpha": config.alpha,
        "gain": config.gain,
        "rho": config.rho,
        "final_train_error": float("nan"),
        "final_test_error": float("nan"),
        "final_test_loss": epoch_rows[-1][3],
        "test_error_5ep": float("nan"),
        "test_error_20ep": float("nan"),
        "triggers": triggers,
        "failed": 0,
    }
    record = MetricsRecord(
        batch_rows=batch_rows, epoch_rows=epoch_rows, events=events, summary=summary
    )
    if config.out_dir:
        write_run_outputs(record, rate_names, config.out_dir)
    return record


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_outputs(record, rate_names, out_dir):
    """batches.csv, epochs.csv, events.csv and the one-line summary.txt."""
    os.makedirs(out_dir, exist_ok=True)
    batch_columns = ["global_batch", "smoothed_loss", "raw_loss", *rate_names, "ph_gap", "triggered"]
    with open(os.path.join(out_dir, "batches.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(batch_columns)
        for row in record.batch_rows:
            writer.writerow([_fmt(row.get(col)) for col in batch_columns])
    with open(os.path.join(out_dir, "epochs.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_error", "test_error", "test_loss"])
        for row in record.epoch_rows:
            writer.writerow([_fmt(v) for v in row])
    with open(os.path.join(out_dir, "events.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["global_batch", "ph_gap", "delta", "eta_before", "eta_after"])
        for row in record.events:
            writer.writerow([_fmt(v) for v in row])
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_line(record.summary) + "\n")


def summary_line(summary):
    return " ".join(f"{key}={_fmt(value)}" for key, value in summary.items())


# --- grids -----------------------------------------------------------------

GRID_ONLY_KEYS = ("seeds",)


def expand_grid(mapping):
    """Cross product of comma-separated values; returns a list of flat dicts."""
    base = {}
    axes = []
    for key, value in mapping.items():
        if key in GRID_ONLY_KEYS:
            continue
        options = [v.strip() for v in value.split(",")] if "," in value else None
        if options:
            axes.append((key, options))
        else:
            base[key] = value
    cells = [dict(base)]
    for key, options in axes:
        cells = [dict(cell, **{key: option}) for cell in cells for option in options]
    return cells


def _cell_name(index, cell, varying):
    parts = [f"cell{index:03d}"]
    for key in varying:
        parts.append(f"{key}={cell[key]}")
    return "_".join(parts)


def _grid_worker(config):
    try:
        record = run_training(config)
        return {"ok": True, "config": config, "summary": record.summary}
    except Exception:
        return {"ok": False, "config": config, "error": traceback.format_exc()}


def run_grid(mapping, seeds, jobs=1, out_root=""):
    """Run every cell x seed, aggregate per cell, and report.

    Returns (cell_summaries, report_lines). A cell summary carries the mean
    and sample std (over seeds) of the test error at epoch 5 and at the
    final epoch, the failed count, and any crash messages. Crashed runs
    count as failed and never abort the grid.
    """
    cells = expand_grid(mapping)
    varying = [key for key in mapping if key not in GRID_ONLY_KEYS and "," in mapping[key]]
    configs = []
    labels = []
    for index, cell in enumerate(cells):
        name = _cell_name(index, cell, varying)
        for seed in seeds:
            out_dir = os.path.join(out_root, name, f"seed{seed}") if out_root else ""
            overrides = {"seed": str(seed), "out_dir": out_dir}
            configs.append(config_from_mapping(cell, overrides))
            labels.append((index, name, seed))

    if jobs > 1:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            results = pool.map(_grid_worker, configs)
    else:
        results = [_grid_worker(config) for config in configs]

    by_cell = {}
    for (index, name, seed), result in zip(labels, results):
        by_cell.setdefault((index, name), []).append((seed, result))

    cell_summaries = []
    for (index, name), seed_results in sorted(by_cell.items()):
        errors_5 = []
        errors_final = []
        failures = 0
        crashes = []
        config = None
        for seed, result in seed_results:
            config = result["config"]
            if not result["ok"]:
                failures += 1
                crashes.append(f"seed{seed}: {result['error'].strip().splitlines()[-1]}")
                continue
            summary = result["summary"]
            if summary["failed"]:
                failures += 1
            errors_5.append(summary["test_error_5ep"])
            errors_final.append(summary["final_test_error"])
        cell_summaries.append(
            {
                "cell": name,
                "model": config.model,
                "optimizer": config.optimizer,
                "n_seeds": len(seed_results),
                "mean_test_error_5ep": _nanmean(errors_5),
                "std_test_error_5ep": _nanstd(errors_5),
                "mean_test_error_final": _nanmean(errors_final),
                "std_test_error_final": _nanstd(errors_final),
                "failures": failures,
                "crashes": "; ".join(crashes),
            }
        )

    report = _grid_report(cell_summaries)
    if out_root:
        os.makedirs(out_root, exist_ok=True)
        with open(os.path.join(out_root, "grid_summary.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(cell_summaries[0].keys()))
            writer.writeheader()
            for row in cell_summaries:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
        with open(os.path.join(out_root, "grid_report.txt"), "w") as fh:
            fh.write("\n".join(report) + "\n")
    return cell_summaries, report


def _nanmean(values):
    values = [v for v in values if not math.isnan(v)]
    return sum(values) / len(values) if values else float("nan")


def _nanstd(values):
    values = [v for v in values if not math.isnan(v)]
    if len(values) < 2:
        return float("nan")
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def _grid_report(cell_summaries):
    """Best cell per (model, epoch mark) and failed-run rate per optimizer."""
    lines = []
    models = sorted({c["model"] for c in cell_summaries})
    for model in models:
        rows = [c for c in cell_summaries if c["model"] == model]
        marks = (("5ep", "mean_test_error_5ep", "std_test_error_5ep"),
                 ("final", "mean_test_error_final", "std_test_error_final"))
        for mark, mean_key, std_key in marks:
            scored = [r for r in rows if not math.isnan(r[mean_key])]
            if scored:
                best = min(scored, key=lambda r: r[mean_key])
                lines.append(
                    f"best {model} @{mark}: {best['cell']} "
                    f"mean_test_error={best[mean_key]:.6f} std={best[std_key]:.6f}"
                )
    optimizers = sorted({c["optimizer"] for c in cell_summaries})
    for optimizer in optimizers:
        rows = [c for c in cell_summaries if c["optimizer"] == optimizer]
        runs = sum(r["n_seeds"] for r in rows)
        failures = sum(r["failures"] for r in rows)
        rate = failures / runs if runs else float("nan")
        lines.append(f"failed-run rate {optimizer}: {failures}/{runs} = {rate:.4f}")
    return lines

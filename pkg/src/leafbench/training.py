"""Training protocol: loss, optimizer, early stopping, run aggregation.

The loss is binary cross-entropy summed over label positions and
averaged over the batch, with outputs clamped away from 0 and 1 before
the logs. Optimization is plain Adam. A run trains until the epoch
budget is spent or validation loss fails to strictly improve for
``patience`` consecutive epochs, and always hands back the weights from
the best validation epoch. Multi-run experiments use consecutive seeds
and are summarized by per-epoch mean curves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, Diverged, EmptyDataset, ShapeMismatch

LOG_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    runs: int = 4
    seed: int = 0
    monitor: str = "val_loss"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got "
                              f"{self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.monitor != "val_loss":
            raise ConfigError(
                f"only val_loss monitoring is supported, got {self.monitor!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    wall_time_s: float


@dataclass(frozen=True)
class RunResult:
    history: tuple
    best_epoch: int
    best_checkpoint: list = field(compare=False, default=None)
    stopped_early: bool = False
    seed: int = 0


def bce_loss(target, output) -> float:
    """Binary cross-entropy: sum over labels, mean over the batch.

    Outputs are clamped to [1e-7, 1 - 1e-7] before the logs so saturated
    predictions stay finite. Accepts a single vector or a batch.
    """
    y = np.asarray(target, dtype=np.float64)
    o = np.asarray(output, dtype=np.float64)
    if y.shape != o.shape:
        raise ShapeMismatch(
            f"target shape {y.shape} does not match output shape {o.shape}")
    o = np.clip(o, LOG_CLAMP, 1.0 - LOG_CLAMP)
    per_label = y * np.log(o) + (1.0 - y) * np.log(1.0 - o)
    if y.ndim == 1:
        return float(-per_label.sum())
    return float(-per_label.sum(axis=-1).mean())


class Adam:
    """The Adam update rule, applied in place to a parameter list."""

    def __init__(self, params: list, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list) -> None:
        if len(grads) != len(self.params):
            raise ShapeMismatch(
                f"got {len(grads)} gradients for {len(self.params)} "
                f"parameters")
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= (self.lr * (m / bias1)
                  / (np.sqrt(v / bias2) + self.eps)).astype(p.dtype)


def early_stop_check(history, patience: int) -> bool:
    """True when the last ``patience`` epochs all failed to strictly
    improve the best validation loss seen before them."""
    best = np.inf
    streak = 0
    for rec in history:
        if rec.val_loss < best:
            best = rec.val_loss
            streak = 0
        else:
            streak += 1
    return streak >= patience


def _as_arrays(dataset):
    if hasattr(dataset, "x") and hasattr(dataset, "y"):
        return np.asarray(dataset.x), np.asarray(dataset.y)
    x, y = dataset
    return np.asarray(x), np.asarray(y)


def _micro_f1(targets: np.ndarray, scores: np.ndarray,
              threshold: float = 0.5) -> float:
    preds = scores >= threshold
    pos = targets >= 0.5
    tp = int(np.count_nonzero(preds & pos))
    fp = int(np.count_nonzero(preds & ~pos))
    fn = int(np.count_nonzero(~preds & pos))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def train(model, train_set, val_set, config: TrainConfig) -> RunResult:
    """One training run: shuffled minibatches, Adam, early stopping.

    Validation loss and micro-F1 are recorded each epoch. On return the
    model carries the weights of the best validation epoch (earliest on
    ties), which are also kept in the result as its checkpoint.
    """
    x_train, y_train = _as_arrays(train_set)
    x_val, y_val = _as_arrays(val_set)
    if len(x_train) == 0 or len(x_val) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    history: list = []
    best_loss = np.inf
    best_epoch = -1
    best_snap = None
    stopped_early = False
    n = len(x_train)

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            loss = model.loss_and_grads(x_train[batch], y_train[batch])
            if not np.isfinite(loss):
                partial = RunResult(history=tuple(history),
                                    best_epoch=best_epoch,
                                    best_checkpoint=best_snap,
                                    stopped_early=False, seed=config.seed)
                raise Diverged(
                    f"training loss became non-finite at epoch {epoch}",
                    result=partial)
            loss_sum += loss * len(batch)
            optimizer.step(model.gradients())

        val_scores = model.predict(x_val)
        val_loss = bce_loss(y_val, val_scores)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            val_loss=val_loss,
            val_f1=_micro_f1(y_val, val_scores),
            wall_time_s=time.perf_counter() - started)
        history.append(record)

        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_snap = model.snapshot()
        if early_stop_check(history, config.patience):
            stopped_early = True
            break

    if best_snap is not None:
        model.restore(best_snap)
    return RunResult(history=tuple(history), best_epoch=best_epoch,
                     best_checkpoint=best_snap, stopped_early=stopped_early,
                     seed=config.seed)


def train_runs(model_factory, train_set, val_set,
               config: TrainConfig) -> list:
    """Repeat training ``config.runs`` times with seeds seed, seed+1, ...

    ``model_factory(seed)`` must return a fresh model per run.
    """
    results = []
    for k in range(config.runs):
        run_config = replace(config, seed=config.seed + k)
        model = model_factory(run_config.seed)
        results.append(train(model, train_set, val_set, run_config))
    return results


@dataclass(frozen=True)
class AggregateResult:
    """Mean validation-F1 curve across runs plus a metric summary.

    ``curve`` rows are (epoch, mean_val_f1, contributing_runs); epochs
    past a run's stopping point simply drop out of that epoch's mean.
    ``summary`` maps metric name to (mean, std) over runs.
    """

    curve: tuple
    summary: dict


def aggregate_runs(results: list, test_reports: list | None = None) -> AggregateResult:
    """Fold per-run histories into a mean curve and a summary.

    When per-run test reports (objects with precision/recall/f1) are
    supplied, the summary covers those; otherwise it covers each run's
    best-epoch validation F1.
    """
    if not results:
        raise ConfigError("aggregate_runs needs at least one run result")
    longest = max(len(r.history) for r in results)
    curve = []
    for i in range(longest):
        values = [r.history[i].val_f1 for r in results if len(r.history) > i]
        curve.append((i + 1, float(np.mean(values)), len(values)))

    summary: dict = {}
    if test_reports:
        for name in ("precision", "recall", "f1"):
            vals = [getattr(r, name) for r in test_reports]
            summary[name] = (float(np.mean(vals)), float(np.std(vals)))
    else:
        best = [r.history[r.best_epoch - 1].val_f1 for r in results
                if r.best_epoch >= 1]
        if best:
            summary["val_f1"] = (float(np.mean(best)), float(np.std(best)))
    return AggregateResult(curve=tuple(curve), summary=summary)

"""Micro-averaged confusion counting and derived scores.

Counting is per (sample, label) cell: every cell of the binarized
prediction matrix is compared with the target matrix, and TP/FP/FN/TN
are pooled over all cells before precision, recall, and F1 are taken.
Per-label breakdowns and decoded plant/condition/pair accuracies ride
along in the same report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .labels import LabelSpace, decode_prediction


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def merged(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    per_label: dict
    plant_accuracy: float
    condition_accuracy: float
    pair_accuracy: float

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp,
                       "fn": self.counts.fn, "tn": self.counts.tn},
            "per_label": {
                name: {"precision": p, "recall": r, "f1": f, "support": s}
                for name, (p, r, f, s) in self.per_label.items()},
            "plant_accuracy": self.plant_accuracy,
            "condition_accuracy": self.condition_accuracy,
            "pair_accuracy": self.pair_accuracy,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        counts = ConfusionCounts(**obj["counts"])
        per_label = {
            name: (v["precision"], v["recall"], v["f1"], v["support"])
            for name, v in obj["per_label"].items()}
        return cls(precision=obj["precision"], recall=obj["recall"],
                   f1=obj["f1"], counts=counts, per_label=per_label,
                   plant_accuracy=obj["plant_accuracy"],
                   condition_accuracy=obj["condition_accuracy"],
                   pair_accuracy=obj["pair_accuracy"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def binarize(pred, threshold: float = 0.5) -> np.ndarray:
    """1 where the score is at or above the threshold (boundary counts
    as positive), else 0."""
    return (np.asarray(pred) >= threshold).astype(np.int64)


def confusion_counts(preds, targets) -> ConfusionCounts:
    """Pool TP/FP/FN/TN over every (sample, label) cell."""
    p = np.asarray(preds)
    t = np.asarray(targets)
    if p.shape != t.shape:
        raise ShapeMismatch(
            f"predictions have shape {p.shape}, targets {t.shape}")
    p = p >= 0.5
    t = t >= 0.5
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)))


def precision(c: ConfusionCounts) -> float:
    """TP / (TP + FP), with 0 when there are no predicted positives."""
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    """TP / (TP + FN), with 0 when there are no actual positives."""
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def f1_score(p: float, r: float) -> float:
    """Harmonic mean of precision and recall, 0 at the degenerate point."""
    return 2.0 * p * r / (p + r) if p + r else 0.0


def evaluate_predictions(scores: np.ndarray, targets: np.ndarray,
                         space: LabelSpace,
                         threshold: float = 0.5) -> MetricsReport:
    """Score a matrix of sigmoid outputs against binary targets."""
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    if scores.shape != targets.shape:
        raise ShapeMismatch(
            f"scores have shape {scores.shape}, targets {targets.shape}")
    binary = binarize(scores, threshold)
    counts = confusion_counts(binary, targets)
    p = precision(counts)
    r = recall(counts)

    labels = space.labels()
    per_label = {}
    for j, name in enumerate(labels):
        col = confusion_counts(binary[:, j], targets[:, j])
        cp = precision(col)
        cr = recall(col)
        support = int(np.count_nonzero(targets[:, j] >= 0.5))
        per_label[name] = (cp, cr, f1_score(cp, cr), support)

    plant_hits = condition_hits = pair_hits = 0
    for i in range(len(scores)):
        truth = decode_prediction(targets[i], space, constrained=True)
        guess = decode_prediction(scores[i], space, constrained=True)
        plant_hits += guess[0] == truth[0]
        condition_hits += guess[1] == truth[1]
        pair_hits += guess == truth
    n = len(scores)
    return MetricsReport(
        precision=p, recall=r, f1=f1_score(p, r), counts=counts,
        per_label=per_label,
        plant_accuracy=plant_hits / n,
        condition_accuracy=condition_hits / n,
        pair_accuracy=pair_hits / n)


def evaluate_model(model, dataset, space: LabelSpace,
                   threshold: float = 0.5) -> MetricsReport:
    """Inference over a split followed by the full metric battery."""
    scores = model.predict(np.asarray(dataset.x))
    return evaluate_predictions(scores, np.asarray(dataset.y), space,
                                threshold=threshold)

#!/usr/bin/env python3
"""Walk the metric suite: binarize scores, pool confusion counts over
every (sample, label) cell, derive micro precision/recall/F1, and read
the decoded accuracies out of a full report."""

import numpy as np

from leafbench import (MetricsReport, binarize, confusion_counts,
                       encode_label, evaluate_predictions, f1_score,
                       full_space, precision, recall)

# Binarization: 0.5 itself counts as a positive.
scores = np.array([0.1, 0.49, 0.5, 0.51, 0.9])
print("scores   ", scores.tolist())
print("binarized", binarize(scores).tolist())

# A tiny two-sample, three-label problem worked by hand.
preds = np.array([[1, 0, 1],
                  [0, 1, 1]])
targets = np.array([[1, 1, 1],
                    [0, 0, 1]])
c = confusion_counts(preds, targets)
print(f"\ncells: tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn} "
      f"(total {c.total} = 2 samples x 3 labels)")
p, r = precision(c), recall(c)
print(f"micro precision {p:.4f} = {c.tp}/{c.tp + c.fp}")
print(f"micro recall    {r:.4f} = {c.tp}/{c.tp + c.fn}")
print(f"micro F1        {f1_score(p, r):.4f}")

# The same pooling applied to a realistic label space. Build targets for
# a batch of diagnoses, blur them into scores, and run the full report.
space = full_space("paired")
rng = np.random.default_rng(11)
pairs = sorted({(space.plants[pi], space.condition_name(ci))
                for pi, ci in space.valid_pairs})
picks = [pairs[i] for i in rng.integers(0, len(pairs), size=40)]
y = np.stack([encode_label(pl, co, space) for pl, co in picks])
noisy = np.clip(y + rng.normal(0.0, 0.35, y.shape), 0.0, 1.0)

report = evaluate_predictions(noisy, y, space)
print(f"\nfull report on 40 noisy diagnoses over {space.vector_length} labels")
print(f"  precision {report.precision:.4f}  recall {report.recall:.4f}  "
      f"f1 {report.f1:.4f}")
print(f"  plant accuracy {report.plant_accuracy:.2f}  "
      f"condition accuracy {report.condition_accuracy:.2f}  "
      f"pair accuracy {report.pair_accuracy:.2f}")

# Per-label rows carry (precision, recall, f1, support) per slot name.
name, row = next((k, v) for k, v in report.per_label.items() if v[3] > 0)
print(f"  per-label example: {name} -> precision {row[0]:.2f}, "
      f"recall {row[1]:.2f}, f1 {row[2]:.2f}, support {row[3]}")

# The report serializes losslessly.
again = MetricsReport.from_json(report.to_json())
print(f"  JSON round trip intact: {again == report}")

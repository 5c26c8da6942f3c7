import json

import numpy as np
import pytest

from leafbench.errors import ShapeMismatch
from leafbench.labels import encode_label
from leafbench.metrics import (ConfusionCounts, MetricsReport, binarize,
                               confusion_counts, evaluate_model,
                               evaluate_predictions, f1_score, precision,
                               recall)


def brute_force_micro(preds, targets):
    """Count the four outcomes one cell at a time, then apply the raw
    textbook formulas. Independent of the library implementation."""
    tp = fp = fn = tn = 0
    for row_p, row_t in zip(preds, targets):
        for p, t in zip(row_p, row_t):
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return tp, fp, fn, tn, prec, rec, f1


class TestBinarize:
    def test_plain_threshold(self):
        assert np.array_equal(binarize([0.9, 0.1]), [1, 0])

    def test_boundary_is_positive(self):
        assert np.array_equal(binarize([0.5]), [1])

    def test_just_around_boundary(self):
        assert np.array_equal(binarize([0.49, 0.51]), [0, 1])

    def test_custom_threshold(self):
        assert np.array_equal(binarize([0.3, 0.8], threshold=0.75), [0, 1])


class TestConfusionCounts:
    def test_perfect_agreement(self, rng):
        preds = (rng.random((5, 8)) < 0.5).astype(int)
        c = confusion_counts(preds, preds)
        assert c.fp == 0 and c.fn == 0
        assert c.total == 40

    def test_cell_by_cell_example(self):
        c = confusion_counts([[1, 0, 1]], [[1, 1, 0]])
        assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 0)

    def test_all_zero_predictions(self):
        targets = [[1, 0, 1, 1], [0, 1, 0, 0]]
        c = confusion_counts(np.zeros((2, 4)), targets)
        assert c.tp == 0 and c.fn == 4
        assert c.tn == 4

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            confusion_counts(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_merged_adds_fields(self):
        a = ConfusionCounts(tp=1, fp=2, fn=3, tn=4)
        b = ConfusionCounts(tp=10, fp=20, fn=30, tn=40)
        assert a.merged(b) == ConfusionCounts(tp=11, fp=22, fn=33, tn=44)


class TestScores:
    def test_precision_examples(self):
        assert precision(ConfusionCounts(tp=8, fp=2)) == pytest.approx(0.8)
        assert precision(ConfusionCounts()) == 0.0
        assert precision(ConfusionCounts(tp=5, fp=0)) == 1.0

    def test_recall_examples(self):
        assert recall(ConfusionCounts(tp=8, fn=2)) == pytest.approx(0.8)
        assert recall(ConfusionCounts()) == 0.0
        assert recall(ConfusionCounts(tp=5, fn=0)) == 1.0

    def test_f1_examples(self):
        assert f1_score(1.0, 1.0) == 1.0
        assert f1_score(0.0, 0.0) == 0.0
        assert f1_score(0.9788, 0.969) == pytest.approx(0.9739, abs=5e-5)
        assert f1_score(0.6421, 0.5993) == pytest.approx(0.6200, abs=5e-5)

    def test_f1_below_arithmetic_mean(self, rng):
        for _ in range(100):
            p, r = rng.random(2)
            assert f1_score(p, r) <= (p + r) / 2 + 1e-12


class TestOracleEquivalence:
    def test_matches_brute_force_on_random_instances(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 21))
            k = int(rng.integers(1, 41))
            preds = (rng.random((n, k)) < rng.random()).astype(int)
            targets = (rng.random((n, k)) < rng.random()).astype(int)
            c = confusion_counts(preds, targets)
            p = precision(c)
            r = recall(c)
            f = f1_score(p, r)
            tp, fp, fn, tn, wp, wr, wf = brute_force_micro(preds, targets)
            assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
            assert p == wp and r == wr and f == wf

    def test_sample_order_invariance(self, rng):
        preds = (rng.random((12, 10)) < 0.4).astype(int)
        targets = (rng.random((12, 10)) < 0.4).astype(int)
        perm = rng.permutation(12)
        assert confusion_counts(preds, targets) == \
            confusion_counts(preds[perm], targets[perm])


class OracleModel:
    """Echoes stored targets, squeezed into (0,1)."""

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=np.float64)

    def predict(self, x, batch_size=64):
        return np.clip(self.targets, 0.01, 0.99)


class ConstantModel:
    def __init__(self, value, width):
        self.value = value
        self.width = width

    def predict(self, x, batch_size=64):
        return np.full((len(x), self.width), self.value)


def targets_for(space, pairs):
    return np.stack([encode_label(p, c, space) for p, c in pairs])


class FakeSplit:
    def __init__(self, x, y):
        self.x = x
        self.y = y


class TestEvaluate:
    def pairs(self):
        return [("Tomato", "Healthy"), ("Potato", "Late Blight"),
                ("Corn", "Common Rust"), ("Rice", "Hispa"),
                ("Apple", "Apple Scab"), ("Grape", "Black Rot")]

    def test_oracle_model_scores_perfectly(self, paired_space):
        y = targets_for(paired_space, self.pairs())
        x = np.zeros((len(y), 2, 2, 3))
        report = evaluate_model(OracleModel(y), FakeSplit(x, y),
                                paired_space)
        assert report.precision == 1.0
        assert report.recall == 1.0
        assert report.f1 == 1.0
        assert report.plant_accuracy == 1.0
        assert report.condition_accuracy == 1.0
        assert report.pair_accuracy == 1.0

    def test_constant_half_model(self, paired_space):
        y = targets_for(paired_space, self.pairs())
        x = np.zeros((len(y), 2, 2, 3))
        model = ConstantModel(0.5, paired_space.vector_length)
        report = evaluate_model(model, FakeSplit(x, y), paired_space)
        # threshold inclusive: every cell predicted positive
        assert report.recall == 1.0
        assert report.precision == pytest.approx(
            2.0 / paired_space.vector_length)

    def test_per_label_support_counts(self, paired_space):
        y = targets_for(paired_space, self.pairs())
        report = evaluate_predictions(np.clip(y, 0.01, 0.99), y,
                                      paired_space)
        assert report.per_label["Tomato"][3] == 1
        assert sum(v[3] for v in report.per_label.values()) == 2 * len(y)

    def test_per_label_keys_are_display_labels(self, paired_space):
        y = targets_for(paired_space, self.pairs()[:2])
        report = evaluate_predictions(np.clip(y, 0.01, 0.99), y,
                                      paired_space)
        assert list(report.per_label) == list(paired_space.labels())

    def test_decoded_accuracy_sees_through_threshold(self, paired_space):
        # scores below 0.5 everywhere still decode by argmax
        y = targets_for(paired_space, self.pairs())
        scores = np.clip(y * 0.4, 0.01, 0.99)
        report = evaluate_predictions(scores, y, paired_space)
        assert report.pair_accuracy == 1.0
        assert report.recall == 0.0

    def test_shape_mismatch(self, paired_space):
        with pytest.raises(ShapeMismatch):
            evaluate_predictions(np.zeros((2, 10)), np.zeros((2, 34)),
                                 paired_space)

    def test_report_round_trip(self, paired_space):
        y = targets_for(paired_space, self.pairs())
        report = evaluate_predictions(np.clip(y, 0.01, 0.99), y,
                                      paired_space)
        again = MetricsReport.from_json(
            json.loads(json.dumps(report.to_json())))
        assert again == report

    def test_report_save_load(self, paired_space, tmp_path):
        y = targets_for(paired_space, self.pairs())
        report = evaluate_predictions(np.clip(y, 0.01, 0.99), y,
                                      paired_space)
        report.save(tmp_path / "report.json")
        assert MetricsReport.load(tmp_path / "report.json") == report

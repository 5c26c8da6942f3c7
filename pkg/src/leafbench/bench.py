"""Benchmark orchestration: models x runs, persisted records, reports.

A benchmark walks its model list, trains each model ``runs`` times with
consecutive seeds, evaluates every run's best weights on the test
split, and writes one JSON record per (model, seed) into
``output_dir/runs/``. Records are written atomically and found again on
restart, so an interrupted benchmark resumes by skipping the pairs it
already finished. Unavailable backbones and diverged runs become failed
records and the matrix continues.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .backbones import REFERENCE_RESULTS, get_backbone
from .data import DatasetManifest, load_split, read_manifest
from .errors import (BackboneUnavailable, ConfigError, DatasetError, Diverged,
                     NoSuccessfulRuns)
from .labels import LabelSpace, build_label_space, decode_indices
from .metrics import MetricsReport, evaluate_model
from .model import (MicroCNNConfig, attach_multilabel_head, build_micro_cnn,
                    count_parameters, load_checkpoint)
from .training import (EpochRecord, RunResult, TrainConfig, aggregate_runs,
                       train)

_TABLE_ORDER = {r.name: i for i, r in enumerate(REFERENCE_RESULTS)}


@dataclass(frozen=True)
class BenchmarkPlan:
    model_names: tuple
    train_config: TrainConfig = TrainConfig()
    dataset: str = "manifest.csv"
    output_dir: str = "bench_out"
    mode: str = "paired"
    input_side: int = 120
    pretrained: bool = True
    freeze_backbone: bool = False
    threshold: float = 0.5

    def __post_init__(self):
        names = tuple(self.model_names)
        if not names:
            raise ConfigError("plan needs at least one model name")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names in plan: {names}")
        object.__setattr__(self, "model_names", names)

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["model_names"] = list(self.model_names)
        obj["train_config"] = asdict(self.train_config)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "BenchmarkPlan":
        obj = dict(obj)
        if "train_config" in obj:
            obj["train_config"] = TrainConfig(**obj["train_config"])
        if "model_names" in obj:
            obj["model_names"] = tuple(obj["model_names"])
        return cls(**obj)


@dataclass(frozen=True)
class RunRecord:
    model_name: str
    seed: int
    status: str = "ok"
    error: str | None = None
    history: tuple = ()
    test_metrics: MetricsReport | None = None
    parameter_count: int | None = None
    config: TrainConfig | None = None
    label_space: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "history": [asdict(h) for h in self.history],
            "test_metrics": (self.test_metrics.to_json()
                             if self.test_metrics else None),
            "parameter_count": self.parameter_count,
            "config": asdict(self.config) if self.config else None,
            "label_space": self.label_space,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(
            model_name=obj["model_name"],
            seed=obj["seed"],
            status=obj["status"],
            error=obj.get("error"),
            history=tuple(EpochRecord(**h) for h in obj.get("history", [])),
            test_metrics=(MetricsReport.from_json(obj["test_metrics"])
                          if obj.get("test_metrics") else None),
            parameter_count=obj.get("parameter_count"),
            config=(TrainConfig(**obj["config"]) if obj.get("config")
                    else None),
            label_space=obj.get("label_space"),
        )


def _write_atomic(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def record_path(output_dir, model_name: str, seed: int) -> Path:
    return Path(output_dir) / "runs" / f"{model_name}__seed{seed}.json"


def load_records(output_dir) -> list:
    """Every persisted record under output_dir/runs, sorted by filename."""
    runs_dir = Path(output_dir) / "runs"
    if not runs_dir.is_dir():
        return []
    return [RunRecord.from_json(json.loads(p.read_text(encoding="utf-8")))
            for p in sorted(runs_dir.glob("*.json"))]


def build_model_for(name: str, space: LabelSpace, plan: BenchmarkPlan,
                    seed: int):
    """A fresh model instance for one (model, seed) cell."""
    rng = np.random.default_rng(seed)
    if name == "MicroCNN":
        config = MicroCNNConfig(input_side=plan.input_side)
        return build_micro_cnn(config, space, rng=rng)
    backbone = get_backbone(name, pretrained=plan.pretrained,
                            input_side=plan.input_side)
    return attach_multilabel_head(backbone, space,
                                  freeze_backbone=plan.freeze_backbone,
                                  rng=rng)


def run_benchmark(plan: BenchmarkPlan) -> list:
    """Execute the full matrix, resuming past completed (model, seed)
    pairs, and return every record (fresh and pre-existing)."""
    manifest = read_manifest(plan.dataset)
    if any(s.split not in ("train", "val", "test") for s in manifest.samples):
        raise DatasetError(
            f"manifest {plan.dataset} has unsplit samples; run the split "
            f"step first")
    space = build_label_space(manifest, mode=plan.mode)
    train_set = load_split(manifest, space, "train", side=plan.input_side)
    val_set = load_split(manifest, space, "val", side=plan.input_side)
    test_set = load_split(manifest, space, "test", side=plan.input_side)

    runs_dir = Path(plan.output_dir) / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for name in plan.model_names:
        skip_model = False
        for k in range(plan.train_config.runs):
            seed = plan.train_config.seed + k
            path = record_path(plan.output_dir, name, seed)
            if path.is_file():
                records.append(RunRecord.from_json(
                    json.loads(path.read_text(encoding="utf-8"))))
                continue
            if skip_model:
                break
            record = _run_one(name, seed, space, plan, train_set, val_set,
                              test_set)
            _write_atomic(path, record.to_json())
            records.append(record)
            if record.status == "failed" and "backbone" in (record.error or ""):
                # the architecture itself is missing; later seeds cannot fare better
                skip_model = True
    return records


def _run_one(name: str, seed: int, space: LabelSpace, plan: BenchmarkPlan,
             train_set, val_set, test_set) -> RunRecord:
    config = replace(plan.train_config, seed=seed)
    try:
        model = build_model_for(name, space, plan, seed)
    except BackboneUnavailable as exc:
        return RunRecord(model_name=name, seed=seed, status="failed",
                         error=f"backbone unavailable: {exc}",
                         config=config, label_space=space.to_json())
    try:
        result = train(model, train_set, val_set, config)
    except Diverged as exc:
        history = exc.result.history if exc.result else ()
        return RunRecord(model_name=name, seed=seed, status="failed",
                         error=f"diverged: {exc}", history=history,
                         config=config, label_space=space.to_json())
    report = evaluate_model(model, test_set, space, threshold=plan.threshold)
    return RunRecord(model_name=name, seed=seed, status="ok",
                     history=result.history, test_metrics=report,
                     parameter_count=count_parameters(model), config=config,
                     label_space=space.to_json())


# ---------------------------------------------------------------------------
# report emission

def _report_order(name: str):
    return (0, _TABLE_ORDER[name], "") if name in _TABLE_ORDER else (1, 0, name)


def _pct(value: float) -> str:
    return f"{round(100.0 * value, 2):.2f}"


def summarize_records(records: list) -> list:
    """Per-model means over successful runs.

    Returns rows {model, params_million, precision, recall, f1} in
    published-table order, unknown models appended alphabetically.
    """
    ok = [r for r in records if r.ok and r.test_metrics is not None]
    if not ok:
        raise NoSuccessfulRuns("no successful run records to report")
    by_model: dict = {}
    for r in ok:
        by_model.setdefault(r.model_name, []).append(r)
    rows = []
    for name in sorted(by_model, key=_report_order):
        group = by_model[name]
        rows.append({
            "model": name,
            "params_million": np.mean(
                [g.parameter_count for g in group]) / 1e6,
            "precision": float(np.mean([g.test_metrics.precision
                                        for g in group])),
            "recall": float(np.mean([g.test_metrics.recall for g in group])),
            "f1": float(np.mean([g.test_metrics.f1 for g in group])),
        })
    return rows


def emit_report(records: list, output_dir) -> list:
    """Write benchmark.csv and benchmark.md; returns the written paths.

    Metrics are percentages with two decimals; the best-F1 row is
    flagged (a marker column in the CSV, bold in the Markdown table).
    """
    rows = summarize_records(records)
    best = max(range(len(rows)), key=lambda i: rows[i]["f1"])
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    csv_path = output_dir / "benchmark.csv"
    lines = ["Model,Parameters(million),Precision,Recall,F1,Best"]
    for i, row in enumerate(rows):
        lines.append(
            f"{row['model']},{row['params_million']:.2f},"
            f"{_pct(row['precision'])},{_pct(row['recall'])},"
            f"{_pct(row['f1'])},{'*' if i == best else ''}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    md_path = output_dir / "benchmark.md"
    md = ["| Model | Parameters (million) | Precision | Recall | F1 |",
          "| --- | --- | --- | --- | --- |"]
    for i, row in enumerate(rows):
        f1_cell = _pct(row["f1"])
        if i == best:
            f1_cell = f"**{f1_cell}**"
        md.append(f"| {row['model']} | {row['params_million']:.2f} | "
                  f"{_pct(row['precision'])} | {_pct(row['recall'])} | "
                  f"{f1_cell} |")
    md_path.write_text("\n".join(md) + "\n", encoding="utf-8")
    return [csv_path, md_path]


def _as_run_results(records: list) -> list:
    out = []
    for r in records:
        if not r.history:
            continue
        best_epoch = min(range(len(r.history)),
                         key=lambda i: r.history[i].val_loss) + 1
        out.append(RunResult(history=r.history, best_epoch=best_epoch,
                             best_checkpoint=None, seed=r.seed))
    return out


def emit_f1_curves(records: list, output_dir) -> list:
    """Per model, write <model>_f1_curve.csv (and a plot when possible).

    Column 2 is the mean validation F1 over the runs still alive at that
    epoch; column 3 counts them. Plot rendering is best-effort: if no
    plotting backend is available the CSV is still the full contract.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    by_model: dict = {}
    for r in records:
        if r.history:
            by_model.setdefault(r.model_name, []).append(r)
    written = []
    for name in sorted(by_model, key=_report_order):
        agg = aggregate_runs(_as_run_results(by_model[name]))
        csv_path = output_dir / f"{name}_f1_curve.csv"
        lines = ["epoch,mean_val_f1,contributing_runs"]
        for epoch, mean_f1, n_runs in agg.curve:
            lines.append(f"{epoch},{mean_f1:.6f},{n_runs}")
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(csv_path)
        plot = _try_plot(name, agg.curve, output_dir)
        if plot is not None:
            written.append(plot)
    return written


def _try_plot(name: str, curve, output_dir: Path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as exc:
        warnings.warn(f"plot rendering unavailable ({exc}); CSV only")
        return None
    try:
        epochs = [row[0] for row in curve]
        values = [row[1] for row in curve]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, values)
        ax.set_xlabel("epochs")
        ax.set_ylabel("F1-score")
        ax.set_ylim(0.0, 1.0)
        ax.set_title(name)
        path = output_dir / f"{name}_f1_curve.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        return path
    except Exception as exc:
        warnings.warn(f"plot rendering failed for {name} ({exc}); CSV only")
        return None


# ---------------------------------------------------------------------------
# single-image prediction

def predict(image_path, checkpoint_dir, constrained: bool = True) -> dict:
    """Diagnose one image with a trained checkpoint.

    Returns {plant, condition, plant_confidence, condition_confidence,
    full_vector} where the confidences are the sigmoid scores of the
    decoded slots.
    """
    from .data import ImageSample, load_and_resize, normalize_image

    model = load_checkpoint(checkpoint_dir)
    space = model.space
    side = (model.micro_cnn_config.input_side
            if model.micro_cnn_config is not None else 120)
    sample = ImageSample(path=Path(image_path), plant="", condition="")
    pixels = normalize_image(load_and_resize(sample, side=side))
    scores = model.predict(pixels[None])[0]
    plant_idx, cond_idx = decode_indices(scores, space,
                                         constrained=constrained)
    return {
        "plant": space.plants[plant_idx],
        "condition": space.condition_name(cond_idx),
        "plant_confidence": float(scores[plant_idx]),
        "condition_confidence": float(scores[len(space.plants) + cond_idx]),
        "full_vector": [float(v) for v in scores],
    }

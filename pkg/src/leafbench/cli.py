"""Command line interface.

Subcommands cover the whole workflow: scan a directory tree into a
manifest, split it, train a single model, run the benchmark matrix,
emit report tables and F1 curves from persisted run records, and
diagnose a single image with a saved checkpoint.

Exit codes: 0 success, 2 configuration problem, 3 dataset problem,
4 nothing succeeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench as bench_mod
from .data import SplitSpec, load_split, read_manifest, scan_dataset, \
    stratified_split, write_manifest
from .errors import (ConfigError, DatasetError, LeafbenchError,
                     NoSuccessfulRuns)
from .labels import build_label_space, full_space
from .metrics import evaluate_model
from .model import MicroCNNConfig, attach_multilabel_head, build_micro_cnn, \
    save_checkpoint
from .training import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leafbench",
        description="Multi-plant, multi-disease leaf diagnosis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="index an image tree into a manifest CSV")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--out", required=True, help="manifest CSV to write")
    p.add_argument("--mode", choices=["paired", "shared"], default="paired")

    p = sub.add_parser("split", help="assign train/val/test tags")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", default="0.5,0.25,0.25",
                   help="train,val,test fractions")
    p.add_argument("--out", help="output CSV (default: rewrite --manifest)")
    p.add_argument("--permissive", action="store_true",
                   help="allow classes smaller than 3")

    p = sub.add_parser("train", help="train one model on a split manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--model", default="MicroCNN")
    p.add_argument("--mode", choices=["paired", "shared"], default="paired")
    p.add_argument("--side", type=int, default=120, help="input image side")
    p.add_argument("--no-pretrained", action="store_true",
                   help="random-initialize backbone weights")
    p.add_argument("--freeze-backbone", action="store_true")
    _add_config_overrides(p)

    p = sub.add_parser("bench", help="run the models x runs matrix")
    p.add_argument("--config", help="benchmark plan JSON")
    p.add_argument("--models", help="comma-separated model names")
    p.add_argument("--manifest", help="split manifest CSV")
    p.add_argument("--outdir", help="benchmark output directory")
    p.add_argument("--side", type=int, help="input image side")
    p.add_argument("--no-pretrained", action="store_true")
    p.add_argument("--freeze-backbone", action="store_true")
    _add_config_overrides(p)

    p = sub.add_parser("report", help="emit benchmark tables from run records")
    p.add_argument("--bench-dir", required=True,
                   help="directory a bench run wrote into")
    p.add_argument("--out", help="where to write tables (default bench dir)")

    p = sub.add_parser("curves", help="emit per-model F1 curves")
    p.add_argument("--bench-dir", required=True)
    p.add_argument("--out", help="where to write curves (default bench dir)")

    p = sub.add_parser("predict", help="diagnose one image")
    p.add_argument("--image", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--unconstrained", action="store_true",
                   help="decode the condition over the full group")

    return parser


def _add_config_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    if not any(a.dest == "mode" for a in p._actions):
        p.add_argument("--mode", choices=["paired", "shared"])


def _config_from_args(args, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    fields = dict(asdict(base))
    overrides = {
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "max_epochs": args.epochs,
        "patience": args.patience,
        "runs": args.runs,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            fields[key] = value
    return TrainConfig(**fields)


def _parse_ratios(text: str):
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse ratios {text!r}: {exc}") from exc
    if len(parts) != 3:
        raise ConfigError(
            f"ratios must be three comma-separated numbers, got {text!r}")
    return parts


def cmd_scan(args) -> int:
    space = full_space(args.mode)
    manifest = scan_dataset(args.root, space)
    write_manifest(manifest, args.out)
    print(f"scanned {len(manifest)} images in "
          f"{len(manifest.class_counts)} classes -> {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    tr, va, te = _parse_ratios(args.ratios)
    spec = SplitSpec(train_fraction=tr, val_fraction=va, test_fraction=te,
                     seed=args.seed)
    result = stratified_split(manifest, spec, permissive=args.permissive)
    out = args.out or args.manifest
    write_manifest(result, out)
    counts = {tag: sum(1 for s in result.samples if s.split == tag)
              for tag in ("train", "val", "test")}
    print(f"split {len(result)} samples: {counts['train']} train, "
          f"{counts['val']} val, {counts['test']} test -> {out}")
    return 0


def cmd_train(args) -> int:
    manifest = read_manifest(args.manifest)
    if any(s.split not in ("train", "val", "test") for s in manifest.samples):
        raise DatasetError("manifest has unsplit samples; run "
                           "'leafbench split' first")
    mode = args.mode or "paired"
    space = build_label_space(manifest, mode=mode)
    train_set = load_split(manifest, space, "train", side=args.side)
    val_set = load_split(manifest, space, "val", side=args.side)
    test_set = load_split(manifest, space, "test", side=args.side)

    config = _config_from_args(args)
    if args.model == "MicroCNN":
        model = build_micro_cnn(MicroCNNConfig(input_side=args.side), space)
    else:
        from .backbones import get_backbone

        backbone = get_backbone(args.model,
                                pretrained=not args.no_pretrained,
                                input_side=args.side)
        model = attach_multilabel_head(backbone, space,
                                       freeze_backbone=args.freeze_backbone)

    result = train(model, train_set, val_set, config)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, outdir / "checkpoint")
    threshold = args.threshold if args.threshold is not None else 0.5
    report = evaluate_model(model, test_set, space, threshold=threshold)
    report.save(outdir / "test_metrics.json")
    with (outdir / "history.csv").open("w", encoding="utf-8",
                                       newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_f1",
                         "wall_time_s"])
        for rec in result.history:
            writer.writerow([rec.epoch, f"{rec.train_loss:.6f}",
                             f"{rec.val_loss:.6f}", f"{rec.val_f1:.6f}",
                             f"{rec.wall_time_s:.3f}"])
    print(f"{args.model}: best epoch {result.best_epoch} "
          f"(val_loss {result.history[result.best_epoch - 1].val_loss:.4f}), "
          f"test F1 {report.f1:.4f}, checkpoint -> {outdir / 'checkpoint'}")
    return 0


def cmd_bench(args) -> int:
    if args.config:
        plan_dict = json.loads(Path(args.config).read_text(encoding="utf-8"))
    elif args.models and args.manifest and args.outdir:
        plan_dict = {}
    else:
        raise ConfigError(
            "bench needs --config or all of --models/--manifest/--outdir")
    if args.models:
        plan_dict["model_names"] = args.models.split(",")
    if args.manifest:
        plan_dict["dataset"] = args.manifest
    if args.outdir:
        plan_dict["output_dir"] = args.outdir
    if args.mode:
        plan_dict["mode"] = args.mode
    if args.side is not None:
        plan_dict["input_side"] = args.side
    if args.no_pretrained:
        plan_dict["pretrained"] = False
    if args.freeze_backbone:
        plan_dict["freeze_backbone"] = True
    if args.threshold is not None:
        plan_dict["threshold"] = args.threshold
    base = (TrainConfig(**plan_dict["train_config"])
            if plan_dict.get("train_config") else TrainConfig())
    plan_dict["train_config"] = asdict(_config_from_args(args, base))
    plan = bench_mod.BenchmarkPlan.from_json(plan_dict)

    records = bench_mod.run_benchmark(plan)
    ok = sum(1 for r in records if r.ok)
    print(f"benchmark complete: {len(records)} records "
          f"({ok} ok, {len(records) - ok} failed) in {plan.output_dir}/runs")
    if ok == 0:
        raise NoSuccessfulRuns("every benchmark run failed")
    return 0


def cmd_report(args) -> int:
    records = bench_mod.load_records(args.bench_dir)
    paths = bench_mod.emit_report(records, args.out or args.bench_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


def cmd_curves(args) -> int:
    records = bench_mod.load_records(args.bench_dir)
    if not any(r.history for r in records):
        raise NoSuccessfulRuns("no run records with history found")
    paths = bench_mod.emit_f1_curves(records, args.out or args.bench_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


def cmd_predict(args) -> int:
    result = bench_mod.predict(args.image, args.checkpoint,
                               constrained=not args.unconstrained)
    print(json.dumps(result, indent=2))
    return 0


_COMMANDS = {
    "scan": cmd_scan,
    "split": cmd_split,
    "train": cmd_train,
    "bench": cmd_bench,
    "report": cmd_report,
    "curves": cmd_curves,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def entry(argv=None) -> int:
    """Console-script entry point with exit-code mapping."""
    try:
        return main(argv)
    except NoSuccessfulRuns as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LeafbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(entry())

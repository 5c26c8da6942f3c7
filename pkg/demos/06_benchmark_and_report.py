#!/usr/bin/env python3
"""Run the benchmark harness end to end on a toy dataset: a resumable
run matrix of (model, seed) trainings, then the summary table and the
per-model F1 curves."""

import argparse
import tempfile
from pathlib import Path

from leafbench import (BenchmarkPlan, SplitSpec, TrainConfig, emit_f1_curves,
                       emit_report, full_space, run_benchmark, scan_dataset,
                       stratified_split, write_manifest)
from leafbench.backbones import backbone_names, reference_result
from leafbench.toydata import generate_toy_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir")
    args = parser.parse_args()

    workdir = Path(args.workdir) if args.workdir else \
        Path(tempfile.mkdtemp(prefix="leafbench_demo_"))

    # The registry knows the published full-scale scores per backbone.
    print(f"registry: {len(backbone_names())} requestable backbones")
    ref = reference_result("Xception")
    print(f"  published best: {ref.name}  precision {ref.precision}  "
          f"recall {ref.recall}  f1 {ref.f1}  ({ref.params_million}M params)")

    print("\n1. toy dataset and split manifest")
    generate_toy_dataset(workdir / "images", images_per_class=8, side=32,
                         seed=5)
    manifest = scan_dataset(workdir / "images", full_space("paired"))
    manifest = stratified_split(manifest, SplitSpec(seed=5))
    manifest_path = workdir / "manifest.csv"
    write_manifest(manifest, manifest_path)

    print("2. benchmark plan: MicroCNN x 2 seeds, 3 epochs each")
    plan = BenchmarkPlan(
        model_names=("MicroCNN",),
        train_config=TrainConfig(learning_rate=0.01, batch_size=16,
                                 max_epochs=3, patience=10, runs=2, seed=0),
        dataset=str(manifest_path),
        output_dir=str(workdir / "bench"),
        input_side=32)
    records = run_benchmark(plan)
    for rec in records:
        f1 = rec.test_metrics.f1 if rec.test_metrics else float("nan")
        print(f"   {rec.model_name} seed {rec.seed}: {rec.status}, "
              f"{len(rec.history)} epochs, test f1 {f1:.3f}")

    print("3. a second invocation resumes: finished runs are not retrained")
    again = run_benchmark(plan)
    print(f"   {len(again)} records loaded straight from disk")

    print("4. summary table and curves")
    for path in emit_report(records, plan.output_dir):
        print(f"   wrote {path.name}")
    print("   " + "\n   ".join(
        (Path(plan.output_dir) / "benchmark.csv").read_text().splitlines()))
    for path in emit_f1_curves(records, plan.output_dir):
        print(f"   wrote {path.name}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Train the reference CNN on a toy dataset under the early-stopping
protocol, keep the best-validation weights, and diagnose one held-out
image with the saved checkpoint."""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from leafbench import (MicroCNNConfig, SplitSpec, TrainConfig,
                       build_label_space, build_micro_cnn, full_space,
                       load_split, predict, save_checkpoint, scan_dataset,
                       stratified_split, train)
from leafbench.toydata import generate_toy_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir")
    parser.add_argument("--epochs", type=int, default=80)
    args = parser.parse_args()

    workdir = Path(args.workdir) if args.workdir else \
        Path(tempfile.mkdtemp(prefix="leafbench_demo_"))
    image_root = workdir / "images"

    print("1. toy dataset: 8 classes x 24 images, split 50/25/25")
    generate_toy_dataset(image_root, images_per_class=24, side=32, seed=3)
    manifest = scan_dataset(image_root, full_space("paired"))
    space = build_label_space(manifest, mode="paired")
    manifest = stratified_split(manifest, SplitSpec(seed=3))
    train_set = load_split(manifest, space, "train", side=32)
    val_set = load_split(manifest, space, "val", side=32)
    print(f"   train {len(train_set.x)}, val {len(val_set.x)}, "
          f"{space.vector_length} label slots")

    print("2. training (Adam, batches of 16, stop after 10 flat epochs)")
    model = build_micro_cnn(MicroCNNConfig(input_side=32), space,
                            rng=np.random.default_rng(3))
    config = TrainConfig(learning_rate=0.003, batch_size=16,
                         max_epochs=args.epochs, patience=10, runs=1, seed=3)
    result = train(model, train_set, val_set, config)
    shown = {1, len(result.history), result.best_epoch} | \
        set(range(5, len(result.history) + 1, 5))
    for rec in result.history:
        if rec.epoch not in shown:
            continue
        marker = " <- best" if rec.epoch == result.best_epoch else ""
        print(f"   epoch {rec.epoch:3d}  train {rec.train_loss:7.4f}  "
              f"val {rec.val_loss:7.4f}  val_f1 {rec.val_f1:.3f}{marker}")
    print(f"   stopped early: {result.stopped_early}, "
          f"best epoch {result.best_epoch} "
          f"(weights rolled back to that epoch)")

    print("3. saving the best weights and predicting one held-out image")
    checkpoint = workdir / "checkpoint"
    save_checkpoint(model, checkpoint)
    test_sample = manifest.subset("test")[0]
    verdict = predict(test_sample.path, checkpoint)
    print(f"   truth     {test_sample.plant} / {test_sample.condition}")
    print(f"   predicted {verdict['plant']} / {verdict['condition']} "
          f"(confidences {verdict['plant_confidence']:.2f} / "
          f"{verdict['condition_confidence']:.2f})")


if __name__ == "__main__":
    main()

"""Dataset discovery, stratified splitting, and image loading.

The on-disk layout is ``<root>/<Plant>/<Condition>/<image>.{jpg,jpeg,png}``.
Directory names are matched against the label space after trimming
whitespace, case-insensitively. Images are loaded with PIL, resized to a
square with bilinear resampling, and normalized to [0,1] by dividing
every channel by 255.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (ClassTooSmall, ConfigError, DatasetError, DecodeError,
                     EmptyDataset, OutOfRange, UnknownLabel)
from .labels import LabelSpace, encode_label

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ImageSample:
    """One leaf image: where it lives, what it shows, which split owns it."""

    path: Path
    plant: str
    condition: str
    split: str = ""
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple = ()
    root: Path | None = None
    class_counts: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        counts: dict = {}
        for s in self.samples:
            key = (s.plant, s.condition)
            counts[key] = counts.get(key, 0) + 1
        object.__setattr__(self, "class_counts", counts)

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, split: str) -> tuple:
        if split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
        return tuple(s for s in self.samples if s.split == split)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.50
    val_fraction: float = 0.25
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        for f in fracs:
            if not 0.0 < f < 1.0:
                raise ConfigError(f"split fractions must lie in (0,1), got {f}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fracs)}")


def _match_dir(name: str, candidates: dict):
    """Case-insensitive, whitespace-trimmed lookup of a directory name."""
    return candidates.get(name.strip().lower())


def scan_dataset(root, space: LabelSpace) -> DatasetManifest:
    """Walk ``root/<plant>/<condition>/`` and manifest every image file.

    Ordering is lexicographic by path so repeated scans are identical.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyDataset(f"dataset root {root} is not a directory")

    plant_lookup = {p.strip().lower(): p for p in space.plants}
    cond_lookup: dict = {}
    for pi, ci in space.valid_pairs:
        name = space.condition_name(ci)
        cond_lookup.setdefault(space.plants[pi], {})[name.strip().lower()] = name

    samples = []
    for plant_dir in sorted(root.iterdir()):
        if not plant_dir.is_dir():
            continue
        plant = _match_dir(plant_dir.name, plant_lookup)
        if plant is None:
            raise UnknownLabel(
                f"directory {plant_dir.name!r} does not name a known plant")
        for cond_dir in sorted(plant_dir.iterdir()):
            if not cond_dir.is_dir():
                continue
            condition = _match_dir(cond_dir.name, cond_lookup.get(plant, {}))
            if condition is None:
                raise UnknownLabel(
                    f"directory {cond_dir.name!r} does not name a known "
                    f"condition of {plant}")
            for f in sorted(cond_dir.iterdir(), key=lambda p: str(p)):
                if f.is_file() and f.suffix.lower() in IMAGE_EXTENSIONS:
                    samples.append(ImageSample(path=f, plant=plant,
                                               condition=condition))
    if not samples:
        raise EmptyDataset(f"no image files found under {root}")
    samples.sort(key=lambda s: str(s.path))
    return DatasetManifest(samples=tuple(samples), root=root)


def stratified_split(manifest: DatasetManifest, spec: SplitSpec,
                     permissive: bool = False) -> DatasetManifest:
    """Assign train/val/test tags class by class with a seeded shuffle.

    Within each (plant, condition) class of size n the rule is
    n_val = floor(val_fraction*n), n_test = floor(test_fraction*n),
    and the remainder trains, so training never starves on tiny classes.
    The same seed always reproduces the same assignment.
    """
    by_class: dict = {}
    for i, s in enumerate(manifest.samples):
        by_class.setdefault((s.plant, s.condition), []).append(i)

    if not permissive:
        for key in sorted(by_class):
            if len(by_class[key]) < 3:
                raise ClassTooSmall(
                    f"class {key} has only {len(by_class[key])} samples; "
                    f"need at least 3 to populate every split")

    rng = np.random.default_rng(spec.seed)
    assignment: dict = {}
    for key in sorted(by_class):
        indices = by_class[key]
        n = len(indices)
        # tiny epsilon so 0.25*152 style products don't floor one short
        n_val = int(math.floor(spec.val_fraction * n + 1e-9))
        n_test = int(math.floor(spec.test_fraction * n + 1e-9))
        n_train = n - n_val - n_test
        order = rng.permutation(n)
        for rank, j in enumerate(order):
            if rank < n_train:
                tag = "train"
            elif rank < n_train + n_val:
                tag = "val"
            else:
                tag = "test"
            assignment[indices[j]] = tag

    tagged = tuple(replace(s, split=assignment[i])
                   for i, s in enumerate(manifest.samples))
    return DatasetManifest(samples=tagged, root=manifest.root)


def load_and_resize(sample: ImageSample, side: int = 120) -> np.ndarray:
    """Decode one image to a side x side x 3 float array in [0,255].

    Grayscale and alpha images are converted to plain RGB. Resampling is
    bilinear; an image already at the target size passes through
    untouched.
    """
    path = Path(sample.path)
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (side, side):
                img = img.resize((side, side), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    return arr


def normalize_image(raw: np.ndarray) -> np.ndarray:
    """Scale raw pixel values from [0,255] to [0,1] by exact division."""
    raw = np.asarray(raw)
    if raw.size and (raw.min() < 0 or raw.max() > 255):
        raise OutOfRange(
            f"pixel values outside [0,255]: min {raw.min()}, max {raw.max()}")
    return raw / 255.0


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Write the manifest as CSV: header path,plant,condition,split."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "plant", "condition", "split"])
        for s in manifest.samples:
            writer.writerow([str(s.path), s.plant, s.condition, s.split])


def read_manifest(path, root=None) -> DatasetManifest:
    """Read a manifest CSV written by write_manifest."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "plant", "condition", "split"]:
            raise DatasetError(
                f"{path} is not a manifest file (bad header: {header})")
        samples = tuple(
            ImageSample(path=Path(row[0]), plant=row[1], condition=row[2],
                        split=row[3])
            for row in reader if row)
    return DatasetManifest(samples=samples,
                           root=Path(root) if root else None)


@dataclass(frozen=True)
class ArrayDataset:
    """A split materialized as arrays: x is N x side x side x 3, y is N x L."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ConfigError(
                f"x and y disagree on sample count: {len(self.x)} vs {len(self.y)}")

    def __len__(self) -> int:
        return len(self.x)


def load_split(manifest: DatasetManifest, space: LabelSpace, split: str,
               side: int = 120, dtype=np.float32) -> ArrayDataset:
    """Materialize one split: load, resize, normalize, and encode labels."""
    chosen = manifest.subset(split)
    if not chosen:
        raise EmptyDataset(f"manifest has no samples tagged {split!r}")
    xs = np.empty((len(chosen), side, side, 3), dtype=dtype)
    ys = np.empty((len(chosen), space.vector_length), dtype=dtype)
    for i, s in enumerate(chosen):
        xs[i] = normalize_image(load_and_resize(s, side=side))
        ys[i] = encode_label(s.plant, s.condition, space)
    return ArrayDataset(x=xs, y=ys)

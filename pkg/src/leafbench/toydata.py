"""Procedural toy dataset: tiny colored-patch images, one look per class.

Each image is a flat background whose color encodes the plant, with a
square patch whose color encodes the condition. Position, size, and
color are jittered with a seeded generator, so the images are varied
but trivially separable: a small network can overfit them quickly,
which is exactly what the desk-scale training checks need.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

TOY_PAIRS = (
    ("Tomato", "Healthy"),
    ("Tomato", "Early Blight"),
    ("Potato", "Healthy"),
    ("Potato", "Early Blight"),
    ("Corn", "Healthy"),
    ("Corn", "Cercospora Leaf Spot"),
    ("Rice", "Healthy"),
    ("Rice", "Brown Spot"),
)

_PLANT_COLOR = {
    "Tomato": (178, 44, 44),
    "Potato": (150, 112, 64),
    "Corn": (206, 182, 48),
    "Rice": (62, 158, 66),
}

_CONDITION_COLOR = {
    "Healthy": (232, 232, 232),
    "Early Blight": (36, 36, 158),
    "Cercospora Leaf Spot": (140, 32, 150),
    "Brown Spot": (30, 120, 140),
}


def render_toy_image(plant: str, condition: str, side: int,
                     rng: np.random.Generator) -> np.ndarray:
    """One uint8 side x side x 3 image for a (plant, condition) class."""
    bg = np.array(_PLANT_COLOR[plant], dtype=np.int16)
    fg = np.array(_CONDITION_COLOR[condition], dtype=np.int16)
    bg = bg + rng.integers(-12, 13, size=3)
    fg = fg + rng.integers(-12, 13, size=3)

    img = np.broadcast_to(bg, (side, side, 3)).copy()
    patch = max(3, side // 3 + int(rng.integers(-2, 3)))
    r0 = int(rng.integers(side // 8, side - patch - side // 8 + 1))
    c0 = int(rng.integers(side // 8, side - patch - side // 8 + 1))
    img[r0:r0 + patch, c0:c0 + patch] = fg

    noise = rng.integers(-8, 9, size=img.shape)
    return np.clip(img + noise, 0, 255).astype(np.uint8)


def generate_toy_dataset(root, images_per_class: int = 8, side: int = 32,
                         seed: int = 7, pairs=TOY_PAIRS) -> list:
    """Write the toy tree under ``root`` and return (path, plant, condition) rows.

    The default settings produce 8 classes x 8 images = 64 PNG files in
    the standard ``<root>/<Plant>/<Condition>/`` layout.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    created = []
    for plant, condition in pairs:
        class_dir = root / plant / condition
        class_dir.mkdir(parents=True, exist_ok=True)
        for k in range(images_per_class):
            arr = render_toy_image(plant, condition, side, rng)
            path = class_dir / f"img_{k:03d}.png"
            Image.fromarray(arr).save(path)
            created.append((path, plant, condition))
    return created

"""Joint plant + condition label space and vector codec.

A target vector is laid out as two concatenated groups: six plant slots
followed by one slot per condition class. Exactly one plant slot and one
condition slot are hot in a target; predictions are sigmoid scores with
every entry strictly inside (0, 1).

Two condition layouts are supported:

* ``paired`` - every (plant, condition) combination is its own class,
  28 classes for the full vocabulary.
* ``shared`` - condition names are deduplicated across plants (e.g. one
  "Late Blight" class serves both tomato and potato), 20 classes for the
  full vocabulary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigError, EmptyDataset, InvalidPair, ShapeMismatch,
                     UnknownLabel)

PLANTS = ("Tomato", "Potato", "Corn", "Rice", "Apple", "Grape")

# Canonical vocabulary, in fixed row order. Order is part of the contract:
# serialized label spaces and trained heads depend on it.
CANONICAL_PAIRS = (
    ("Tomato", "Healthy"),
    ("Tomato", "Early Blight"),
    ("Tomato", "Late Blight"),
    ("Tomato", "Leaf Mold"),
    ("Tomato", "Septoria Leaf Spot"),
    ("Tomato", "Spider Mites"),
    ("Tomato", "Target Spot"),
    ("Tomato", "Tomato Mosaic Virus"),
    ("Tomato", "Yellow Leaf Curl Virus"),
    ("Potato", "Healthy"),
    ("Potato", "Early Blight"),
    ("Potato", "Late Blight"),
    ("Corn", "Healthy"),
    ("Corn", "Cercospora Leaf Spot"),
    ("Corn", "Common Rust"),
    ("Corn", "Northern Leaf Blight"),
    ("Rice", "Healthy"),
    ("Rice", "Brown Spot"),
    ("Rice", "Hispa"),
    ("Rice", "Leaf Blast"),
    ("Apple", "Healthy"),
    ("Apple", "Apple Scab"),
    ("Apple", "Black Rot"),
    ("Apple", "Cedar Apple Rust"),
    ("Grape", "Black Measles"),
    ("Grape", "Black Rot"),
    ("Grape", "Leaf Blight"),
    ("Grape", "Healthy"),
)

# Per-class image counts of the reference dataset the vocabulary comes from.
REFERENCE_COUNTS = {
    ("Tomato", "Healthy"): 1955,
    ("Tomato", "Early Blight"): 1955,
    ("Tomato", "Late Blight"): 1955,
    ("Tomato", "Leaf Mold"): 1955,
    ("Tomato", "Septoria Leaf Spot"): 1955,
    ("Tomato", "Spider Mites"): 1955,
    ("Tomato", "Target Spot"): 1955,
    ("Tomato", "Tomato Mosaic Virus"): 1955,
    ("Tomato", "Yellow Leaf Curl Virus"): 1955,
    ("Potato", "Healthy"): 152,
    ("Potato", "Early Blight"): 152,
    ("Potato", "Late Blight"): 152,
    ("Corn", "Healthy"): 2052,
    ("Corn", "Cercospora Leaf Spot"): 2052,
    ("Corn", "Common Rust"): 2052,
    ("Corn", "Northern Leaf Blight"): 2052,
    ("Rice", "Healthy"): 1046,
    ("Rice", "Brown Spot"): 1046,
    ("Rice", "Hispa"): 1046,
    ("Rice", "Leaf Blast"): 1046,
    ("Apple", "Healthy"): 2200,
    ("Apple", "Apple Scab"): 2200,
    ("Apple", "Black Rot"): 2200,
    ("Apple", "Cedar Apple Rust"): 2200,
    ("Grape", "Black Measles"): 2115,
    ("Grape", "Black Rot"): 2115,
    ("Grape", "Leaf Blight"): 2115,
    ("Grape", "Healthy"): 2115,
}

MODES = ("paired", "shared")


def _norm(name: str) -> str:
    return name.strip().lower()


_PLANT_LOOKUP = {_norm(p): p for p in PLANTS}
_PAIR_LOOKUP = {(_norm(p), _norm(c)): (p, c) for p, c in CANONICAL_PAIRS}


def canonical_plant(name: str) -> str:
    """Resolve a plant name case-insensitively, trimming whitespace."""
    try:
        return _PLANT_LOOKUP[_norm(name)]
    except KeyError:
        raise UnknownLabel(f"unknown plant name: {name!r}") from None


def canonical_pair(plant: str, condition: str, permissive: bool = False):
    """Resolve a (plant, condition) pair to its canonical spelling.

    With ``permissive``, a condition name outside the vocabulary is
    accepted verbatim (trimmed) for a known plant. Unknown plants are
    always an error: the plant group is fixed at six slots.
    """
    p = canonical_plant(plant)
    hit = _PAIR_LOOKUP.get((_norm(plant), _norm(condition)))
    if hit is not None:
        return hit
    if permissive:
        return (p, condition.strip())
    raise UnknownLabel(f"unknown condition {condition!r} for plant {p!r}")


@dataclass(frozen=True)
class LabelSpace:
    """Immutable registry defining the layout of label vectors.

    ``conditions`` holds condition identifiers in canonical order: in
    paired mode each identifier is a ``(plant, condition)`` tuple, in
    shared mode a bare condition name. ``valid_pairs`` is the set of
    allowed ``(plant_index, condition_index)`` combinations.
    """

    plants: tuple = PLANTS
    conditions: tuple = ()
    mode: str = "paired"
    valid_pairs: frozenset = frozenset()
    _pair_to_cond: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        lookup = {}
        for pi, ci in self.valid_pairs:
            cond = self.conditions[ci]
            name = cond[1] if self.mode == "paired" else cond
            lookup[(pi, _norm(name))] = ci
        object.__setattr__(self, "_pair_to_cond", lookup)

    @property
    def vector_length(self) -> int:
        return len(self.plants) + len(self.conditions)

    def plant_index(self, plant: str) -> int:
        p = canonical_plant(plant)
        return self.plants.index(p)

    def condition_name(self, condition_index: int) -> str:
        cond = self.conditions[condition_index]
        return cond[1] if self.mode == "paired" else cond

    def condition_labels(self) -> list:
        """Display strings for the condition group, e.g. 'Tomato/Healthy'."""
        if self.mode == "paired":
            return [f"{p}/{c}" for p, c in self.conditions]
        return list(self.conditions)

    def labels(self) -> list:
        """Display string per vector slot: plants first, then conditions."""
        return list(self.plants) + self.condition_labels()

    def pair_index(self, plant: str, condition: str):
        """(plant_index, condition_index) for a valid pair, else InvalidPair."""
        try:
            pi = self.plants.index(canonical_plant(plant))
        except (UnknownLabel, ValueError):
            raise InvalidPair(f"({plant!r}, {condition!r}) is not a valid pair") from None
        ci = self._pair_to_cond.get((pi, _norm(condition)))
        if ci is None:
            raise InvalidPair(f"({plant!r}, {condition!r}) is not a valid pair")
        return pi, ci

    def conditions_for_plant(self, plant_index: int) -> list:
        """Condition indices valid for one plant, ascending."""
        return sorted(ci for pi, ci in self.valid_pairs if pi == plant_index)

    def to_json(self) -> dict:
        pairs = sorted(self.valid_pairs, key=lambda t: (t[1], t[0]))
        return {
            "plants": list(self.plants),
            "conditions": [list(c) if self.mode == "paired" else c for c in self.conditions],
            "mode": self.mode,
            "valid_pairs": [
                [self.plants[pi], self.condition_name(ci)] for pi, ci in pairs
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabelSpace":
        mode = obj["mode"]
        if mode == "paired":
            conditions = tuple(tuple(c) for c in obj["conditions"])
        else:
            conditions = tuple(obj["conditions"])
        plants = tuple(obj["plants"])
        cond_index = {}
        for i, cond in enumerate(conditions):
            name = cond[1] if mode == "paired" else cond
            key = (plants.index(cond[0]), _norm(name)) if mode == "paired" else _norm(name)
            cond_index.setdefault(key, i)
        pairs = set()
        for plant, cond_name in obj["valid_pairs"]:
            pi = plants.index(plant)
            key = (pi, _norm(cond_name)) if mode == "paired" else _norm(cond_name)
            pairs.add((pi, cond_index[key]))
        return cls(plants=plants, conditions=conditions, mode=mode,
                   valid_pairs=frozenset(pairs))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LabelSpace":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _space_from_pairs(pairs, mode: str) -> LabelSpace:
    """Build a LabelSpace from canonicalized (plant, condition) name pairs."""
    ordered = [p for p in CANONICAL_PAIRS if p in set(pairs)]
    extras = [p for p in pairs if p not in set(CANONICAL_PAIRS)]
    seen = set()
    for p in extras:
        if p not in seen:
            ordered.append(p)
            seen.add(p)

    conditions: list = []
    valid = set()
    if mode == "paired":
        for plant, cond in ordered:
            ci = len(conditions)
            conditions.append((plant, cond))
            valid.add((PLANTS.index(plant), ci))
    elif mode == "shared":
        index: dict = {}
        for plant, cond in ordered:
            key = _norm(cond)
            if key not in index:
                index[key] = len(conditions)
                conditions.append(cond)
            valid.add((PLANTS.index(plant), index[key]))
    else:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    return LabelSpace(plants=PLANTS, conditions=tuple(conditions), mode=mode,
                      valid_pairs=frozenset(valid))


def full_space(mode: str = "paired") -> LabelSpace:
    """The label space covering the complete 28-pair vocabulary."""
    return _space_from_pairs(list(CANONICAL_PAIRS), mode)


def build_label_space(manifest, mode: str = "paired", permissive: bool = False) -> LabelSpace:
    """Derive the label space observed in a dataset manifest.

    Plants are always the fixed six; conditions are the ones present in
    the manifest, ordered canonically (vocabulary order first, then
    extra permissive names by first appearance).
    """
    if not manifest.samples and not permissive:
        raise EmptyDataset("manifest is empty; cannot build a label space")
    pairs = []
    seen = set()
    for s in manifest.samples:
        pair = canonical_pair(s.plant, s.condition, permissive=permissive)
        if pair not in seen:
            seen.add(pair)
            pairs.append(pair)
    return _space_from_pairs(pairs, mode)


def encode_label(plant: str, condition: str, space: LabelSpace) -> np.ndarray:
    """Binary target vector: one hot plant slot, one hot condition slot."""
    pi, ci = space.pair_index(plant, condition)
    vec = np.zeros(space.vector_length, dtype=np.float64)
    vec[pi] = 1.0
    vec[len(space.plants) + ci] = 1.0
    return vec


def decode_indices(pred: np.ndarray, space: LabelSpace,
                   constrained: bool = True):
    """Group-wise argmax as (plant_index, condition_index).

    When ``constrained``, the condition argmax is restricted to the
    conditions valid for the decoded plant (falling back to the full
    group if that plant has none in this space). Ties break toward the
    lowest index.
    """
    pred = np.asarray(pred)
    if pred.shape != (space.vector_length,):
        raise ShapeMismatch(
            f"prediction has shape {pred.shape}, expected ({space.vector_length},)")
    n_plants = len(space.plants)
    pi = int(np.argmax(pred[:n_plants]))
    cond_scores = pred[n_plants:]
    if constrained:
        allowed = space.conditions_for_plant(pi)
        if allowed:
            ci = allowed[int(np.argmax(cond_scores[allowed]))]
        else:
            ci = int(np.argmax(cond_scores))
    else:
        ci = int(np.argmax(cond_scores))
    return pi, ci


def decode_prediction(pred: np.ndarray, space: LabelSpace,
                      constrained: bool = True):
    """Turn a score vector into (plant name, condition name): the argmax
    of the plant group paired with the argmax of the condition group
    (restricted to the decoded plant's conditions when constrained)."""
    pi, ci = decode_indices(pred, space, constrained=constrained)
    return space.plants[pi], space.condition_name(ci)


def valid_pairs(space: LabelSpace) -> set:
    """The allowed (plant name, condition name) combinations."""
    return {
        (space.plants[pi], space.condition_name(ci))
        for pi, ci in space.valid_pairs
    }

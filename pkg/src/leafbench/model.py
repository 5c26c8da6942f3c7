"""Model assembly: the MicroCNN reference network and the sigmoid head.

Every model here is a stack of layer objects ending in one dense layer
whose width is the label-vector length; the forward pass finishes with a
sigmoid, so outputs are multi-label scores in (0,1). MicroCNN is built
entirely from the numpy layers in this package and supports full
backpropagation; pretrained backbones from the registry slot in as the
first element of the stack and reuse the identical head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointCorrupt, ConfigError, ShapeMismatch
from .labels import LabelSpace
from .layers import (BatchNorm, Conv2D, Dense, Flatten, MaxPool2x2, ReLU,
                     sigmoid)
from .training import bce_loss

DEFAULT_BLOCKS = ((8, 3, 1), (16, 3, 1), (32, 3, 1))


@dataclass(frozen=True)
class MicroCNNConfig:
    """Architecture knobs for the small reference CNN.

    ``blocks`` lists (out_channels, kernel_size, stride) per
    conv-bn-relu-pool block. The head width is not stored here; it comes
    from the label space (or an explicit override) at build time.
    """

    blocks: tuple = DEFAULT_BLOCKS
    input_side: int = 120
    input_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "blocks",
                           tuple(tuple(b) for b in self.blocks))
        if not self.blocks:
            raise ConfigError("config needs at least one conv block")
        for out_ch, k, s in self.blocks:
            if k > 5:
                raise ConfigError(f"kernel size must be <= 5, got {k}")
            if out_ch < 1 or k < 1 or s < 1:
                raise ConfigError(
                    f"block entries must be positive, got {(out_ch, k, s)}")
        if self.input_side < 1 or self.input_channels < 1:
            raise ConfigError("input dimensions must be positive")

    def flatten_dim(self) -> int:
        """Flattened feature width after all blocks, or ConfigError."""
        side = self.input_side
        for _, _, stride in self.blocks:
            side = -(-side // stride)   # conv with 'same' padding
            side = side // 2            # 2x2 max pool
            if side < 1:
                raise ConfigError(
                    f"input side {self.input_side} collapses to zero "
                    f"before the head; fewer blocks needed")
        return side * side * self.blocks[-1][0]

    def to_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks],
                "input_side": self.input_side,
                "input_channels": self.input_channels}

    @classmethod
    def from_json(cls, obj: dict) -> "MicroCNNConfig":
        return cls(blocks=tuple(tuple(b) for b in obj["blocks"]),
                   input_side=obj["input_side"],
                   input_channels=obj["input_channels"])


def _layer_state(layer) -> list:
    """Arrays that must persist for this layer: weights plus any running
    statistics (batch norm keeps two beyond its trainable pair)."""
    if isinstance(layer, BatchNorm):
        return [layer.gamma, layer.beta, layer.running_mean, layer.running_var]
    if hasattr(layer, "state_list"):
        return layer.state_list()
    return layer.parameters()


def _restore_layer_state(layer, arrays: list) -> int:
    """Copy persisted arrays back into the layer; returns count consumed."""
    targets = _layer_state(layer)
    for t, a in zip(targets, arrays):
        if t.shape != a.shape:
            raise CheckpointCorrupt(
                f"stored array shape {a.shape} does not match model "
                f"shape {t.shape}")
        t[...] = a
    return len(targets)


class SigmoidHeadModel:
    """A layer stack ending in a dense layer, read through a sigmoid.

    The model computes multi-label scores; training code reads logits
    through loss_and_grads, which fuses the sigmoid with the
    cross-entropy gradient for numerical stability.
    """

    def __init__(self, layers: list, space: LabelSpace | None = None,
                 backbone_name: str = "MicroCNN",
                 micro_cnn_config: MicroCNNConfig | None = None,
                 freeze_backbone: bool = False, dtype=np.float32):
        self.layers = list(layers)
        self.space = space
        self.backbone_name = backbone_name
        self.micro_cnn_config = micro_cnn_config
        self.freeze_backbone = freeze_backbone
        self.dtype = dtype
        head = self.layers[-1]
        if not isinstance(head, Dense):
            raise ConfigError("model must end in a dense head")
        self.head_dim = head.weights.shape[0]
        if space is not None and space.vector_length != self.head_dim:
            raise ConfigError(
                f"head width {self.head_dim} does not match label space "
                f"length {space.vector_length}")

    # ---- forward / backward ------------------------------------------------

    def forward_logits(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            h = layer.forward(h, training=training)
        return h

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Multi-label scores in (0,1), one row per input."""
        return sigmoid(self.forward_logits(x, training=training))

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference-mode scores, computed in bounded-size chunks."""
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size], training=False)
                for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def loss_on(self, x: np.ndarray, y: np.ndarray,
                training: bool = True) -> float:
        """Forward-only loss; the finite-difference oracle calls this."""
        return bce_loss(y, self.forward(x, training=training))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray) -> float:
        """Training-mode forward, loss, and full backward pass.

        Gradients land in each layer's gradient buffers. The head
        gradient uses the fused sigmoid + cross-entropy form
        (scores - targets) / batch.
        """
        y = np.asarray(y)
        logits = self.forward_logits(x, training=True)
        if logits.shape != y.shape:
            raise ShapeMismatch(
                f"targets have shape {y.shape}, model produced "
                f"{logits.shape}")
        probs = sigmoid(logits)
        loss = bce_loss(y, probs)
        d = ((probs - y) / y.shape[0]).astype(logits.dtype)
        for layer in reversed(self.layers):
            d = layer.backward(d)
            if d is None:
                break
        return loss

    # ---- parameter access ----------------------------------------------------

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def gradients(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.gradients())
        return out

    def state_arrays(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(_layer_state(layer))
        return out

    def snapshot(self) -> list:
        """Deep copy of all persistent arrays (weights + running stats)."""
        return [np.array(a, copy=True) for a in self.state_arrays()]

    def restore(self, snap: list) -> None:
        state = self.state_arrays()
        if len(snap) != len(state):
            raise CheckpointCorrupt(
                f"snapshot holds {len(snap)} arrays, model needs "
                f"{len(state)}")
        i = 0
        for layer in self.layers:
            i += _restore_layer_state(layer, snap[i:])


def count_parameters(model) -> int:
    """Total trainable scalar count."""
    return int(sum(p.size for p in model.parameters()))


def micro_cnn_layers(config: MicroCNNConfig, head_dim: int, rng=None,
                     dtype=np.float32) -> list:
    """The raw layer stack for a MicroCNN with an arbitrary head width."""
    rng = rng or np.random.default_rng()
    config.flatten_dim()
    layers: list = []
    in_ch = config.input_channels
    for out_ch, k, s in config.blocks:
        layers.append(Conv2D(in_ch, out_ch, k, stride=s, padding="same",
                             rng=rng, dtype=dtype))
        layers.append(BatchNorm(out_ch, dtype=dtype))
        layers.append(ReLU())
        layers.append(MaxPool2x2())
        in_ch = out_ch
    layers.append(Flatten())
    layers.append(Dense(config.flatten_dim(), head_dim, rng=rng, dtype=dtype))
    return layers


def build_micro_cnn(config: MicroCNNConfig, space: LabelSpace, rng=None,
                    dtype=np.float32) -> SigmoidHeadModel:
    """Assemble the reference CNN: conv-bn-relu-pool blocks, flatten,
    one sigmoid dense head sized by the label space."""
    layers = micro_cnn_layers(config, space.vector_length, rng=rng,
                              dtype=dtype)
    return SigmoidHeadModel(layers, space=space, backbone_name="MicroCNN",
                            micro_cnn_config=config, dtype=dtype)


def attach_multilabel_head(backbone, space: LabelSpace,
                           freeze_backbone: bool = False, rng=None,
                           dtype=np.float32) -> SigmoidHeadModel:
    """Put the standard sigmoid dense head on a feature extractor.

    The backbone must expose forward/backward/parameters/gradients and a
    ``feature_dim``; freezing excludes its parameters from training but
    keeps them in checkpoints.
    """
    rng = rng or np.random.default_rng()
    if freeze_backbone and hasattr(backbone, "freeze"):
        backbone.freeze()
    head = Dense(backbone.feature_dim, space.vector_length, rng=rng,
                 dtype=dtype)
    return SigmoidHeadModel(
        [backbone, head], space=space,
        backbone_name=getattr(backbone, "name", type(backbone).__name__),
        freeze_backbone=freeze_backbone, dtype=dtype)


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(model: SigmoidHeadModel, directory) -> None:
    """Write weights.npz + labelspace.json + model.json into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {f"arr_{i:04d}": a for i, a in enumerate(model.state_arrays())}
    np.savez(directory / "weights.npz", **arrays)
    if model.space is None:
        raise ConfigError("cannot checkpoint a model without a label space")
    model.space.save(directory / "labelspace.json")
    meta = {
        "backbone_name": model.backbone_name,
        "head_dim": model.head_dim,
        "freeze_backbone": model.freeze_backbone,
        "micro_cnn_config": (model.micro_cnn_config.to_json()
                             if model.micro_cnn_config else None),
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2) + "\n",
                                          encoding="utf-8")


def load_checkpoint(directory) -> SigmoidHeadModel:
    """Rebuild a model from a checkpoint directory.

    Backbone-based models are reconstructed without downloading
    pretrained weights; everything needed is in the stored arrays.
    """
    directory = Path(directory)
    for name in ("weights.npz", "labelspace.json", "model.json"):
        if not (directory / name).is_file():
            raise CheckpointCorrupt(f"checkpoint is missing {name}")
    try:
        meta = json.loads((directory / "model.json").read_text(encoding="utf-8"))
        space = LabelSpace.load(directory / "labelspace.json")
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CheckpointCorrupt(f"unreadable checkpoint metadata: {exc}") from exc

    if meta.get("backbone_name") == "MicroCNN":
        config = MicroCNNConfig.from_json(meta["micro_cnn_config"])
        model = build_micro_cnn(config, space)
    else:
        from .backbones import get_backbone

        backbone = get_backbone(meta["backbone_name"], pretrained=False)
        model = attach_multilabel_head(backbone, space,
                                       freeze_backbone=meta["freeze_backbone"])

    with np.load(directory / "weights.npz") as stored:
        keys = sorted(stored.files)
        arrays = [stored[k] for k in keys]
    state = model.state_arrays()
    if len(arrays) != len(state):
        raise CheckpointCorrupt(
            f"checkpoint holds {len(arrays)} arrays, model needs "
            f"{len(state)}")
    model.restore(arrays)
    return model

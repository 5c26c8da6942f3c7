"""Registry of pretrained convolutional backbones and their adapter.

Fifteen published architectures are available by name, each consumed as
an opaque feature extractor: 120 x 120 x 3 in, one flat pooled feature
vector out. The tensorflow/keras implementations provide the weights
and the graph; this module keeps numpy mirrors of the variables so the
rest of the package can treat a backbone exactly like any other layer
(forward / backward / parameters / gradients). tensorflow is imported
lazily, only when a backbone is actually requested.

REFERENCE_RESULTS freezes the published benchmark scores for these
backbones on the full leaf dataset (percent precision / recall / F1 and
parameter counts in millions); the report generator and the consistency
checks read them from here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackboneUnavailable


@dataclass(frozen=True)
class ReferenceResult:
    name: str
    params_million: int
    precision: float
    recall: float
    f1: float


REFERENCE_RESULTS = (
    ReferenceResult("DenseNet121", 7, 94.34, 93.87, 94.1),
    ReferenceResult("DenseNet169", 13, 97.87, 96.85, 97.36),
    ReferenceResult("DenseNet201", 19, 97.51, 96.65, 97.08),
    ReferenceResult("InceptionV3", 23, 95.9, 95.19, 95.55),
    ReferenceResult("InceptionResNetV2", 54, 96.92, 93.95, 95.41),
    ReferenceResult("MobileNet", 3, 95.85, 95.75, 95.8),
    ReferenceResult("ResNet50", 24, 94.8, 92.35, 93.56),
    ReferenceResult("ResNet50V2", 24, 96.66, 95.15, 95.9),
    ReferenceResult("ResNet101", 43, 94.26, 91.44, 92.83),
    ReferenceResult("ResNet101V2", 43, 87.04, 84.07, 85.53),
    ReferenceResult("ResNet152", 59, 64.21, 59.93, 62.0),
    ReferenceResult("ResNet152V2", 59, 93.54, 92.01, 92.77),
    ReferenceResult("VGG16", 137, 92.53, 89.62, 91.05),
    ReferenceResult("VGG19", 142, 88.38, 85.05, 86.69),
    ReferenceResult("Xception", 21, 97.88, 96.9, 97.38),
)

# name -> attribute of keras.applications
KERAS_BUILDERS = {r.name: r.name for r in REFERENCE_RESULTS}

# extension point: name -> callable(pretrained, input_side) -> extractor
_CUSTOM_BUILDERS: dict = {}


def backbone_names() -> tuple:
    """Every requestable backbone name, registry order."""
    return tuple(KERAS_BUILDERS) + tuple(
        n for n in _CUSTOM_BUILDERS if n not in KERAS_BUILDERS)


def register_backbone(name: str, builder) -> None:
    """Add or override a backbone. ``builder(pretrained, input_side)``
    must return an object following the layer protocol with
    ``feature_dim`` and ``name`` attributes."""
    _CUSTOM_BUILDERS[name] = builder


def reference_result(name: str) -> ReferenceResult | None:
    for row in REFERENCE_RESULTS:
        if row.name == name:
            return row
    return None


class KerasBackboneExtractor:
    """Adapter exposing a keras model through the numpy layer protocol.

    Trainable variables are mirrored as numpy arrays; the optimizer
    updates the mirrors and every forward pass pushes them back into the
    graph. Non-trainable variables (batch-norm moving statistics) are
    mirrored too, so checkpoints capture the full inference state.
    Freezing empties parameters()/gradients() but keeps all weights in
    the persisted state.
    """

    def __init__(self, keras_model, name: str):
        import tensorflow as tf

        self._tf = tf
        self.model = keras_model
        self.name = name
        self.frozen = False
        out_shape = keras_model.output_shape
        if len(out_shape) != 2 or out_shape[-1] is None:
            raise BackboneUnavailable(
                f"{name} does not yield a flat feature vector "
                f"(output shape {out_shape})")
        self.feature_dim = int(out_shape[-1])
        self._train_vars = list(keras_model.trainable_variables)
        self._other_vars = list(keras_model.non_trainable_variables)
        self.mirror_train = [v.numpy() for v in self._train_vars]
        self.mirror_other = [v.numpy() for v in self._other_vars]
        self._grads = [np.zeros_like(a) for a in self.mirror_train]
        self._tape = None
        self._out = None

    def _push(self) -> None:
        for var, arr in zip(self._train_vars, self.mirror_train):
            var.assign(arr)
        for var, arr in zip(self._other_vars, self.mirror_other):
            var.assign(arr)

    def _pull_other(self) -> None:
        for i, var in enumerate(self._other_vars):
            self.mirror_other[i][...] = var.numpy()

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        tf = self._tf
        self._push()
        xt = tf.convert_to_tensor(np.asarray(x, dtype=np.float32))
        learn = training and not self.frozen
        if learn:
            with tf.GradientTape() as tape:
                out = self.model(xt, training=True)
            self._tape = tape
            self._out = out
            self._pull_other()   # keras advanced its moving statistics
        else:
            out = self.model(xt, training=False)
            self._tape = None
            self._out = None
        return out.numpy()

    def backward(self, dout: np.ndarray):
        if self.frozen:
            return None
        if self._tape is None:
            raise BackboneUnavailable(
                f"{self.name}: backward called without a training-mode "
                f"forward")
        tf = self._tf
        grads = self._tape.gradient(
            self._out, self._train_vars,
            output_gradients=tf.convert_to_tensor(
                np.asarray(dout, dtype=np.float32)))
        for i, g in enumerate(grads):
            self._grads[i][...] = 0.0 if g is None else g.numpy()
        self._tape = None
        self._out = None
        return None

    def freeze(self) -> None:
        self.frozen = True

    def parameters(self) -> list:
        return [] if self.frozen else list(self.mirror_train)

    def gradients(self) -> list:
        return [] if self.frozen else list(self._grads)

    def state_list(self) -> list:
        return list(self.mirror_train) + list(self.mirror_other)


def get_backbone(name: str, pretrained: bool = True, input_side: int = 120):
    """Build a registered backbone as a feature extractor.

    Raises BackboneUnavailable when the name is unknown, tensorflow is
    not installed, or the architecture/weights cannot be materialized
    (including refusing the 120 x 120 input).
    """
    if name in _CUSTOM_BUILDERS:
        return _CUSTOM_BUILDERS[name](pretrained, input_side)
    if name not in KERAS_BUILDERS:
        raise BackboneUnavailable(
            f"no backbone named {name!r}; known names: "
            f"{', '.join(backbone_names())}")
    try:
        from tensorflow.keras import applications
    except ImportError as exc:
        raise BackboneUnavailable(
            f"{name} needs tensorflow, which is not installed") from exc
    builder = getattr(applications, KERAS_BUILDERS[name], None)
    if builder is None:
        raise BackboneUnavailable(
            f"installed keras does not provide {name}")
    try:
        keras_model = builder(
            weights="imagenet" if pretrained else None,
            include_top=False, pooling="avg",
            input_shape=(input_side, input_side, 3))
    except Exception as exc:
        raise BackboneUnavailable(f"cannot build {name}: {exc}") from exc
    return KerasBackboneExtractor(keras_model, name)

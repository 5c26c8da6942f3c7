"""Network building blocks: convolution, batch norm, ReLU, pooling, dense.

Two levels live here. The functional operations (conv2d_forward,
batchnorm_forward, relu, dense_forward, sigmoid) compute the layer
mathematics on plain arrays and small parameter records; they are the
reference surface the oracle tests exercise. The layer classes (Conv2D,
BatchNorm, ReLU, MaxPool2x2, Flatten, Dense) add batching, parameter
storage, and hand-derived backward passes for training.

Convolution is cross-correlation (no kernel flip). Feature maps are
channels-last: a batch is [B, H, W, C].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateBatch, ShapeMismatch

MAX_KERNEL_SIDE = 5
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99


# ---------------------------------------------------------------------------
# parameter records for the functional surface

@dataclass(frozen=True)
class FeatureMap:
    """A single spatial feature map, height x width x channels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ShapeMismatch(
                f"feature map must be H x W x C with all dims >= 1, got {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ConvLayerParams:
    """kernels[out_channel][in_channel][kh][kw], one bias per out channel."""

    kernels: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: str = "valid"

    def __post_init__(self):
        k = np.asarray(self.kernels)
        b = np.asarray(self.bias)
        if k.ndim != 4:
            raise ShapeMismatch(f"kernels must be 4-d, got shape {k.shape}")
        if k.shape[2] > MAX_KERNEL_SIDE or k.shape[3] > MAX_KERNEL_SIDE:
            raise ConfigError(
                f"kernel sides must be <= {MAX_KERNEL_SIDE}, got "
                f"{k.shape[2]}x{k.shape[3]}")
        if b.shape != (k.shape[0],):
            raise ShapeMismatch(
                f"bias must have one entry per out channel ({k.shape[0]}), "
                f"got shape {b.shape}")
        if self.stride < 1:
            raise ConfigError(f"stride must be positive, got {self.stride}")
        if self.padding not in ("valid", "same"):
            raise ConfigError(
                f"padding must be 'valid' or 'same', got {self.padding!r}")
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "bias", b)


@dataclass
class BatchNormState:
    """Learned affine plus running statistics for one channel axis."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.running_mean = np.asarray(self.running_mean, dtype=np.float64)
        self.running_var = np.asarray(self.running_var, dtype=np.float64)
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError(f"momentum must be in (0,1), got {self.momentum}")
        if np.any(self.running_var < 0):
            raise ConfigError("running_var must be non-negative")


@dataclass(frozen=True)
class DenseParams:
    """weights[out_dim][in_dim] and bias[out_dim]."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ShapeMismatch(
                f"weights must be [out][in] with matching bias, got "
                f"{w.shape} and {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


# ---------------------------------------------------------------------------
# shared shape arithmetic

def _out_size(size: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)
    return (size - k) // stride + 1


def _pad_amounts(size: int, k: int, stride: int, out: int):
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def _conv_batch(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                stride: int, padding: str):
    """Batched cross-correlation on [B,H,W,Cin] via per-offset shifts.

    Each kernel offset (u,v) contributes one strided slice of the padded
    input times a [Cin,Cout] matrix, so the whole convolution is kh*kw
    matrix products instead of a materialized im2col buffer.
    Returns (output, padded input) for reuse in the backward pass.
    """
    b, h, w, cin = x.shape
    cout, kcin, kh, kw = kernels.shape
    if cin != kcin:
        raise ShapeMismatch(
            f"input has {cin} channels but kernels expect {kcin}")
    oh = _out_size(h, kh, stride, padding)
    ow = _out_size(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(
            f"kernel {kh}x{kw} does not fit input {h}x{w} with "
            f"padding={padding!r}")
    if padding == "same":
        pt, pb = _pad_amounts(h, kh, stride, oh)
        pl, pr = _pad_amounts(w, kw, stride, ow)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        xp = x
    out = np.empty((b, oh, ow, cout), dtype=x.dtype)
    out[:] = bias
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, u:u + stride * (oh - 1) + 1:stride,
                    v:v + stride * (ow - 1) + 1:stride, :]
            out += xs @ kernels[:, :, u, v].T
    return out, xp


# ---------------------------------------------------------------------------
# functional operations

def conv2d_forward(input: FeatureMap, params: ConvLayerParams) -> FeatureMap:
    """Cross-correlate one feature map with a bank of kernels.

    Output channel i is bias_i plus the sum over input channels j of the
    correlation of channel j with kernel (i, j).
    """
    x = input.values[None].astype(np.float64, copy=False)
    out, _ = _conv_batch(x, np.asarray(params.kernels, dtype=np.float64),
                         np.asarray(params.bias, dtype=np.float64),
                         params.stride, params.padding)
    return FeatureMap(values=out[0])


def batchnorm_forward(batch: np.ndarray, state: BatchNormState,
                      training: bool) -> np.ndarray:
    """Normalize per channel, then apply the learned affine.

    Training mode normalizes with batch statistics (population variance)
    and advances the running statistics by exponential moving average;
    inference mode uses the stored running statistics unchanged.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[-1] != state.gamma.shape[0]:
        raise ShapeMismatch(
            f"batch has {x.shape[-1]} channels, state has "
            f"{state.gamma.shape[0]}")
    axes = tuple(range(x.ndim - 1))
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatch(
                f"batch norm needs batch size >= 2 in training, got "
                f"{x.shape[0]}")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state.running_mean = (state.momentum * state.running_mean
                              + (1.0 - state.momentum) * mean)
        state.running_var = (state.momentum * state.running_var
                             + (1.0 - state.momentum) * var)
    else:
        mean = state.running_mean
        var = state.running_var
    xhat = (x - mean) / np.sqrt(var + state.epsilon)
    return state.gamma * xhat + state.beta


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x), 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic, stable for large |x|, output strictly in (0,1)."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    one = out.dtype.type(1)
    return np.clip(out, np.finfo(out.dtype).tiny, np.nextafter(one, one - one))


def dense_forward(x: np.ndarray, params: DenseParams,
                  activation: str = "none") -> np.ndarray:
    """Affine transform w @ x + b with an optional sigmoid on top."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(params.weights, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(
            f"input dim {x.shape[-1]} does not match weights "
            f"[{w.shape[0]}][{w.shape[1]}]")
    out = x @ w.T + np.asarray(params.bias, dtype=np.float64)
    if activation == "sigmoid":
        return sigmoid(out)
    if activation == "none":
        return out
    raise ConfigError(f"activation must be 'sigmoid' or 'none', got "
                      f"{activation!r}")


# ---------------------------------------------------------------------------
# trainable batched layers

class Conv2D:
    """Batched convolution layer with stored kernels and bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: str = "same", rng=None,
                 dtype=np.float32):
        if kernel_size > MAX_KERNEL_SIDE:
            raise ConfigError(
                f"kernel size must be <= {MAX_KERNEL_SIDE}, got {kernel_size}")
        if padding not in ("valid", "same"):
            raise ConfigError(
                f"padding must be 'valid' or 'same', got {padding!r}")
        rng = rng or np.random.default_rng()
        fan_in = in_channels * kernel_size * kernel_size
        scale = np.sqrt(2.0 / fan_in)
        self.kernels = (rng.standard_normal(
            (out_channels, in_channels, kernel_size, kernel_size)) * scale
        ).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.stride = stride
        self.padding = padding
        self.d_kernels = np.zeros_like(self.kernels)
        self.d_bias = np.zeros_like(self.bias)
        self._xp_shape = None
        self._xp = None
        self._pad = (0, 0, 0, 0)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out, xp = _conv_batch(x, self.kernels, self.bias, self.stride,
                              self.padding)
        if training:
            self._xp = xp
            self._pad = (xp.shape[1] - x.shape[1], xp.shape[2] - x.shape[2],
                         x.shape[1], x.shape[2])
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xp = self._xp
        s = self.stride
        _, oh, ow, _ = dout.shape
        kh, kw = self.kernels.shape[2], self.kernels.shape[3]
        dxp = np.zeros_like(xp)
        self.d_bias = dout.sum(axis=(0, 1, 2))
        for u in range(kh):
            for v in range(kw):
                rows = slice(u, u + s * (oh - 1) + 1, s)
                cols = slice(v, v + s * (ow - 1) + 1, s)
                xs = xp[:, rows, cols, :]
                self.d_kernels[:, :, u, v] = np.tensordot(
                    dout, xs, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, rows, cols, :] += dout @ self.kernels[:, :, u, v]
        pad_h, pad_w, h, w = self._pad
        pt, pl = pad_h // 2, pad_w // 2
        return dxp[:, pt:pt + h, pl:pl + w, :]

    def parameters(self):
        return [self.kernels, self.bias]

    def gradients(self):
        return [self.d_kernels, self.d_bias]


class BatchNorm:
    """Batched batch normalization over every axis except the last."""

    def __init__(self, channels: int, epsilon: float = BN_EPSILON,
                 momentum: float = BN_MOMENTUM, dtype=np.float32):
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.epsilon = epsilon
        self.momentum = momentum
        self.d_gamma = np.zeros_like(self.gamma)
        self.d_beta = np.zeros_like(self.beta)
        self._xhat = None
        self._inv_std = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        axes = tuple(range(x.ndim - 1))
        if training:
            if x.shape[0] < 2:
                raise DegenerateBatch(
                    f"batch norm needs batch size >= 2 in training, got "
                    f"{x.shape[0]}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (self.momentum * self.running_mean
                                 + (1 - self.momentum) * mean
                                 ).astype(self.running_mean.dtype)
            self.running_var = (self.momentum * self.running_var
                                + (1 - self.momentum) * var
                                ).astype(self.running_var.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        if training:
            self._xhat = xhat
            self._inv_std = inv_std
        return self.gamma * xhat + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        axes = tuple(range(dout.ndim - 1))
        n = dout.size // dout.shape[-1]
        xhat = self._xhat
        self.d_gamma = (dout * xhat).sum(axis=axes)
        self.d_beta = dout.sum(axis=axes)
        dxhat = dout * self.gamma
        return (self._inv_std / n) * (
            n * dxhat
            - dxhat.sum(axis=axes)
            - xhat * (dxhat * xhat).sum(axis=axes))

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.d_gamma, self.d_beta]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if training:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._mask

    def parameters(self):
        return []

    def gradients(self):
        return []


class MaxPool2x2:
    """2x2 max pooling with stride 2; odd trailing rows/columns drop."""

    def __init__(self):
        self._argmax = None
        self._shape = None

    @staticmethod
    def _windows(x: np.ndarray) -> np.ndarray:
        b, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        v = x[:, :h2 * 2, :w2 * 2, :].reshape(b, h2, 2, w2, 2, c)
        return v.transpose(0, 1, 3, 5, 2, 4).reshape(b, h2, w2, c, 4)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        win = self._windows(x)
        if training:
            self._argmax = win.argmax(axis=-1)
            self._shape = x.shape
        return win.max(axis=-1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        b, h, w, c = self._shape
        h2, w2 = h // 2, w // 2
        flat = np.zeros((b, h2, w2, c, 4), dtype=dout.dtype)
        np.put_along_axis(flat, self._argmax[..., None], dout[..., None],
                          axis=-1)
        dx = np.zeros((b, h, w, c), dtype=dout.dtype)
        dx[:, :h2 * 2, :w2 * 2, :] = (
            flat.reshape(b, h2, w2, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(b, h2 * 2, w2 * 2, c))
        return dx

    def parameters(self):
        return []

    def gradients(self):
        return []


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if training:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout.reshape(self._shape)

    def parameters(self):
        return []

    def gradients(self):
        return []


class Dense:
    """Batched affine layer, weights stored as [out_dim][in_dim]."""

    def __init__(self, in_dim: int, out_dim: int, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        scale = np.sqrt(2.0 / in_dim)
        self.weights = (rng.standard_normal((out_dim, in_dim)) * scale
                        ).astype(dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.d_weights = np.zeros_like(self.weights)
        self.d_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] != self.weights.shape[1]:
            raise ShapeMismatch(
                f"input dim {x.shape[-1]} does not match weights "
                f"{self.weights.shape}")
        if training:
            self._x = x
        return x @ self.weights.T + self.bias

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.d_weights = dout.T @ self._x
        self.d_bias = dout.sum(axis=0)
        return dout @ self.weights

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.d_weights, self.d_bias]

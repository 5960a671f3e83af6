"""Layers with hand-written forward/backward passes.

All tensors are NHWC numpy arrays. Convolutions are stride 1 with "same"
padding and odd square kernels, lowered to a single matmul via im2col.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class Parameter:
    def __init__(self, values: np.ndarray, name: str = ""):
        self.values = values
        self.grad = np.zeros_like(values)
        self.locked = False
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()

    def __repr__(self):
        flag = " locked" if self.locked else ""
        return f"Parameter({self.name}, shape={self.values.shape}{flag})"


def _uniform(rng, shape, limit, dtype):
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_limit(scheme: str, fan_in: int, fan_out: int) -> float:
    if scheme == "he":
        return float(np.sqrt(6.0 / fan_in))
    if scheme == "glorot":
        return float(np.sqrt(6.0 / (fan_in + fan_out)))
    raise ValueError(f"unknown init scheme {scheme!r}")


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: list[Parameter] = []
        self.tag = "interior"
        self.stage = 0
        self._cache = None

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, **self.config(), "tag": self.tag, "stage": self.stage}

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called without a training forward pass")
        return self._cache

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{self.kind}({cfg})"


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, H, W, C) -> (B*H*W, k*k*C) patches with zero "same" padding."""
    p = k // 2
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))   # (B, H, W, C, k, k)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, k * k * c)


def conv_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Cross-correlation of NHWC ``x`` with a (k, k, Cin, Cout) kernel."""
    k, _, cin, cout = kernel.shape
    b, h, w, _ = x.shape
    return (_im2col(x, k) @ kernel.reshape(k * k * cin, cout)).reshape(b, h, w, cout)


def _input_grad_kernel(kernel: np.ndarray) -> np.ndarray:
    # correlation adjoint for stride 1 / same padding: flip spatially, swap channels
    return np.ascontiguousarray(kernel[::-1, ::-1].transpose(0, 1, 3, 2))


class _ConvBase(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 rng: np.random.Generator | None = None, init: str = "he",
                 dtype=np.float32):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.init = init
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel_size * kernel_size * in_channels
        fan_out = kernel_size * kernel_size * out_channels
        limit = init_limit(init, fan_in, fan_out)
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        self.weight = Parameter(_uniform(rng, shape, limit, dtype), f"{self.kind}.weight")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), f"{self.kind}.bias")
        self.params = [self.weight, self.bias]

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "init": self.init}

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.in_channels:
            raise ShapeError(f"{self!r} expects (H, W, {self.in_channels}), got {shape}")
        return (shape[0], shape[1], self.out_channels)

    def _effective_kernel(self):
        raise NotImplementedError

    def forward(self, x, training=False):
        kern = self._effective_kernel()
        k = self.kernel_size
        b, h, w, _ = x.shape
        cols = _im2col(x, k)
        y = (cols @ kern.reshape(-1, self.out_channels)).reshape(b, h, w, self.out_channels)
        y += self.bias.values
        self._cache = cols if training else None
        return y

    def backward(self, dy):
        cols = self._cached()
        k = self.kernel_size
        dy2 = dy.reshape(-1, self.out_channels)
        dkern = (cols.T @ dy2).reshape(k, k, self.in_channels, self.out_channels)
        self.bias.grad += dy2.sum(axis=0)
        self._accumulate_weight_grad(dkern)
        return conv_same(dy, _input_grad_kernel(self._effective_kernel()))


class Conv2D(_ConvBase):
    kind = "Conv2D"

    def _effective_kernel(self):
        return self.weight.values

    def _accumulate_weight_grad(self, dkern):
        self.weight.grad += dkern


class Deconv2D(_ConvBase):
    """Stride-1 transposed convolution.

    Every input pixel scatters ``x[i, j] * W[u, v]`` onto output position
    ``(i + u - p, j + v - p)``; at stride 1 this is a correlation with the
    spatially flipped kernel, which is how it is evaluated.
    """

    kind = "Deconv2D"

    def _effective_kernel(self):
        return self.weight.values[::-1, ::-1]

    def _accumulate_weight_grad(self, dkern):
        self.weight.grad += dkern[::-1, ::-1]


class Dense(Layer):
    kind = "Dense"

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, init: str = "he", dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.init = init
        rng = rng if rng is not None else np.random.default_rng(0)
        limit = init_limit(init, in_features, out_features)
        self.weight = Parameter(_uniform(rng, (in_features, out_features), limit, dtype),
                                "Dense.weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), "Dense.bias")
        self.params = [self.weight, self.bias]

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features,
                "init": self.init}

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ShapeError(f"{self!r} expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    def forward(self, x, training=False):
        self._cache = x if training else None
        return x @ self.weight.values + self.bias.values

    def backward(self, dy):
        x = self._cached()
        self.weight.grad += x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.values.T


class MaxPool2x2(Layer):
    kind = "MaxPool2x2"

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] % 2 or shape[1] % 2:
            raise ShapeError(f"MaxPool2x2 needs even (H, W, C), got {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])

    def forward(self, x, training=False):
        b, h, w, c = x.shape
        blocks = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(b, h // 2, w // 2, c, 4)
        idx = blocks.argmax(axis=-1)
        self._cache = (idx, x.shape) if training else None
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, shape = self._cached()
        b, h, w, c = shape
        grad = np.zeros((b, h // 2, w // 2, c, 4), dtype=dy.dtype)
        np.put_along_axis(grad, idx[..., None], dy[..., None], axis=-1)
        grad = grad.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return grad.reshape(shape)


class Upsample2x2(Layer):
    """Nearest-neighbour 2x upsampling."""

    kind = "Upsample2x2"

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"Upsample2x2 needs (H, W, C), got {shape}")
        return (shape[0] * 2, shape[1] * 2, shape[2])

    def forward(self, x, training=False):
        self._cache = True if training else None
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, dy):
        self._cached()
        b, h, w, c = dy.shape
        return dy.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, training=False):
        self._cache = (x > 0) if training else None
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._cached()


class Sigmoid(Layer):
    kind = "Sigmoid"

    def forward(self, x, training=False):
        # split by sign to stay finite for large |x|
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._cache = y if training else None
        return y

    def backward(self, dy):
        y = self._cached()
        return dy * y * (1.0 - y)


class Dropout(Layer):
    """Inverted dropout; identity unless ``training`` and ``enabled``."""

    kind = "Dropout"

    def __init__(self, rate: float = 0.25, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.seed = seed
        self.enabled = True
        self.rng = np.random.default_rng(seed)

    def config(self):
        return {"rate": self.rate, "seed": self.seed}

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def forward(self, x, training=False):
        if not (training and self.enabled) or self.rate == 0.0:
            self._cache = None if not training else 1.0
            return x
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = keep
        return x * keep

    def backward(self, dy):
        return dy * self._cached()


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False):
        self._cache = x.shape if training else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._cached())


class Reshape(Layer):
    kind = "Reshape"

    def __init__(self, shape: tuple):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    def config(self):
        return {"shape": list(self.shape)}

    def output_shape(self, shape):
        if int(np.prod(shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {shape} to {self.shape}")
        return self.shape

    def forward(self, x, training=False):
        self._cache = x.shape if training else None
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(self._cached())


LAYER_KINDS = {cls.kind: cls for cls in
               (Conv2D, Deconv2D, Dense, MaxPool2x2, Upsample2x2, ReLU, Sigmoid,
                Dropout, Flatten, Reshape)}


def layer_from_config(desc: dict, rng=None, dtype=np.float32) -> Layer:
    desc = dict(desc)
    kind = desc.pop("kind")
    tag = desc.pop("tag", "interior")
    stage = desc.pop("stage", 0)
    cls = LAYER_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown layer kind {kind!r}")
    if cls in (Conv2D, Deconv2D, Dense):
        layer = cls(**desc, rng=rng, dtype=dtype)
    elif cls is Reshape:
        layer = cls(tuple(desc["shape"]))
    else:
        layer = cls(**desc)
    layer.tag = tag
    layer.stage = stage
    return layer

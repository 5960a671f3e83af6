from __future__ import annotations

import copy
import hashlib
from typing import Iterable, Sequence

import numpy as np

from .layers import Dropout, Layer, Parameter, ShapeError, StateError, layer_from_config


class Network:
    """Ordered layer stack over NHWC batches."""

    def __init__(self, layers: Sequence[Layer], input_shape: tuple):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.output_shape = self._infer_shapes()
        self._ready_for_backward = False

    def _infer_shapes(self) -> tuple:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = tuple(layer.output_shape(shape))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        return shape

    def parameters(self) -> list[Parameter]:
        seen, out = set(), []
        for layer in self.layers:
            for p in layer.params:
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].values.dtype if params else np.dtype(np.float32)

    def forward(self, batch: np.ndarray, training: bool = False) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.ndim != len(self.input_shape) + 1 or batch.shape[1:] != self.input_shape:
            raise ShapeError(f"batch shape {batch.shape} does not match input "
                             f"(B,)+{self.input_shape}")
        x = batch.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, training)
        self._ready_for_backward = training
        return x

    __call__ = forward

    def predict(self, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
        outs = [self.forward(batch[i:i + batch_size]) for i in range(0, len(batch), batch_size)]
        return np.concatenate(outs)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0

    def backward(self, loss_grad: np.ndarray) -> np.ndarray:
        """Populate parameter gradients; locked parameters end with zero grad."""
        if not self._ready_for_backward:
            raise StateError("backward requires a preceding forward(training=True)")
        self.zero_grad()
        g = loss_grad.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        for p in self.parameters():
            if p.locked:
                p.grad[...] = 0
        self._ready_for_backward = False
        return g

    def set_dropout(self, enabled: bool) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.enabled = enabled

    def reseed_dropout(self, seed: int) -> None:
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dropout):
                layer.reseed(seed * 1000003 + i)

    def describe(self) -> list[dict]:
        return [layer.describe() for layer in self.layers]

    def digest(self, params: Iterable[Parameter] | None = None) -> str:
        h = hashlib.sha256()
        for p in (self.parameters() if params is None else params):
            h.update(np.ascontiguousarray(p.values).tobytes())
        return h.hexdigest()

    def astype(self, dtype) -> "Network":
        """Deep copy with every parameter cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.values = p.values.astype(dtype)
            p.grad = np.zeros_like(p.values)
        return clone

    @classmethod
    def from_description(cls, desc: list[dict], input_shape: tuple,
                         dtype=np.float32) -> "Network":
        return cls([layer_from_config(d, dtype=dtype) for d in desc], input_shape)

    def __repr__(self):
        body = "\n".join(f"  [{i}] {l!r} tag={l.tag} stage={l.stage}"
                         for i, l in enumerate(self.layers))
        return f"Network(input={self.input_shape}, output={self.output_shape})\n{body}"

from __future__ import annotations

import numpy as np

from .losses import LossKind, LossSpec, batch_loss
from .network import Network


def _frozen_loss(pred, ref, mults):
    b = pred.shape[0]
    diff = pred - ref.reshape(pred.shape)
    per_sample = (diff * diff).reshape(b, -1).mean(axis=1)
    return float(np.mean(per_sample * mults))


def grad_check(net: Network, loss: LossSpec = LossSpec(), probe_count: int = 200,
               epsilon: float = 1e-6, x: np.ndarray | None = None,
               y: np.ndarray | None = None, seed: int = 0, batch_size: int = 2,
               dtype=np.float64) -> float:
    """Max relative error between backprop and central finite differences.

    Runs on a ``dtype`` copy of ``net`` with dropout disabled. For FLoss the
    per-sample multiplier is held at its unperturbed value, matching the
    constant-multiplier gradient contract.
    """
    rng = np.random.default_rng(seed)
    net = net.astype(dtype)
    net.set_dropout(False)
    if x is None:
        x = rng.random((batch_size,) + net.input_shape)
    if y is None:
        y = (rng.random((len(x),) + net.output_shape) < 0.2).astype(dtype)
    x = np.asarray(x, dtype=dtype)
    y = np.asarray(y, dtype=dtype)

    pred = net.forward(x, training=True)
    spec = loss if loss.kind is LossKind.FLOSS else LossSpec(LossKind.MSE)
    _, grad, dists = batch_loss(pred, y, spec)
    if spec.kind is LossKind.FLOSS:
        mults = 1.0 + spec.k_sub_opt * (spec.k_err * np.sign(dists - 1) + 1.0) * dists
    else:
        mults = np.ones(len(x))
    net.backward(grad)

    params = [p for p in net.parameters() if not p.locked]
    if not params:
        return 0.0
    worst = 0.0
    for k in range(probe_count):
        # cycle through tensors so small ones (biases) are probed as often as kernels
        p = params[k % len(params)]
        flat = p.values.reshape(-1)
        i = int(rng.integers(flat.size))
        analytic = float(p.grad.reshape(-1)[i])
        orig = flat[i]
        flat[i] = orig + epsilon
        up = _frozen_loss(net.forward(x), y, mults)
        flat[i] = orig - epsilon
        down = _frozen_loss(net.forward(x), y, mults)
        flat[i] = orig
        numeric = (up - down) / (2 * epsilon)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst


PROBE_KINDS = ("conv", "pool", "dense", "upsample", "deconv")


def probe_network(kinds=PROBE_KINDS, seed: int = 0, side: int = 4) -> Network:
    """Small sigmoid-headed network containing the requested layer kinds, in canonical order."""
    from .layers import (Conv2D, Deconv2D, Dense, Dropout, Flatten, MaxPool2x2, ReLU, Reshape,
                         Sigmoid, Upsample2x2)

    unknown = set(kinds) - set(PROBE_KINDS)
    if unknown:
        raise ValueError(f"unknown layer kinds {sorted(unknown)}; choose from {PROBE_KINDS}")
    rng = np.random.default_rng(seed)
    layers, ch, hw = [], 3, side
    if "conv" in kinds:
        layers += [Conv2D(ch, 4, 3, rng), ReLU()]
        ch = 4
    if "pool" in kinds:
        layers.append(MaxPool2x2())
        hw //= 2
    if "dense" in kinds:
        flat = hw * hw * ch
        layers += [Flatten(), Dense(flat, 8, rng), ReLU(), Dropout(0.25, seed=seed),
                   Dense(8, flat, rng), ReLU(), Reshape((hw, hw, ch))]
    if "upsample" in kinds:
        layers.append(Upsample2x2())
        hw *= 2
    if "deconv" in kinds:
        layers += [Deconv2D(ch, 5, 3, rng), ReLU()]
        ch = 5
    layers += [Conv2D(ch, 1, 1, rng, init="glorot"), Sigmoid()]
    net = Network(layers, (side, side, 3))
    # zero biases behind a dead unit leave pre-activations exactly on the ReLU
    # kink, where central differences see half a slope
    for p in net.parameters():
        if p.name.endswith(".bias"):
            p.values = rng.uniform(0.01, 0.1, p.values.shape).astype(p.values.dtype)
    return net

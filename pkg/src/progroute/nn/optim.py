from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .network import Network


class Algorithm(str, enum.Enum):
    SGD = "SGD"
    RMSPROP = "RMSProp"


@dataclass
class OptimizerState:
    algorithm: Algorithm = Algorithm.RMSPROP
    learning_rate: float = 1e-4
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    accumulators: dict = field(default_factory=dict)   # id(Parameter) -> mean-square array

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.rms_decay < 1.0:
            raise ValueError("rms_decay must lie in (0, 1)")


def optimizer_step(net: Network, state: OptimizerState, lr: float | None = None) -> None:
    """Apply one update to every unlocked parameter of ``net``."""
    lr = state.learning_rate if lr is None else lr
    for p in net.parameters():
        if p.locked:
            continue
        g = p.grad
        if state.algorithm is Algorithm.SGD:
            p.values -= (lr * g).astype(p.values.dtype)
            continue
        acc = state.accumulators.get(id(p))
        if acc is None or acc.shape != g.shape:
            acc = np.zeros_like(p.values)
            state.accumulators[id(p)] = acc
        acc *= state.rms_decay
        acc += (1.0 - state.rms_decay) * g * g
        p.values -= (lr * g / np.sqrt(acc + state.epsilon)).astype(p.values.dtype)


def cyclical_lr(step_index: int, base: float, peak: float, period: int) -> float:
    """Triangular schedule: base -> peak over the first half-period, back down after."""
    if not 0 < base <= peak:
        raise ValueError("need 0 < base <= peak")
    if period <= 0 or period % 2:
        raise ValueError("period must be a positive even integer")
    half = period // 2
    pos = step_index % period
    frac = pos / half if pos <= half else (period - pos) / half
    return base + (peak - base) * frac

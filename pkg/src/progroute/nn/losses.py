"""MSE and the tile-count-aware loss for sparse route bitmaps.

The count-aware loss scales MSE by ``1 + k_sub_opt * step * distance`` where
``distance`` is the predicted minus reference included-tile count and
``step = k_err * sign(distance - 1) + 1``. Predicting too few tiles gets a
large positive multiplier (``step`` is negative when ``distance`` is), too
many tiles a mild one. The multiplier is a per-sample constant for the
gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

INCLUDE_THRESHOLD = 0.5


class LossKind(str, enum.Enum):
    MSE = "MSE"
    FLOSS = "FLoss"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.FLOSS
    k_sub_opt: float = 1e-3
    k_err: float = 1e2

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.FLOSS and not (self.k_sub_opt > 0 and self.k_err > 1):
            raise ValueError("FLoss needs k_sub_opt > 0 and k_err > 1")


def _check_shapes(pred, ref):
    if np.shape(pred) != np.shape(ref):
        raise ValueError(f"shape mismatch: {np.shape(pred)} vs {np.shape(ref)}")


def mse(pred: np.ndarray, ref: np.ndarray) -> float:
    _check_shapes(pred, ref)
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(ref, dtype=np.float64)
    return float(np.mean(diff * diff))


def distance(pred: np.ndarray, ref: np.ndarray) -> int:
    """Predicted included-tile count minus reference count (H(v - 0.5), H(0) = 1)."""
    _check_shapes(pred, ref)
    return int(np.count_nonzero(np.asarray(pred) >= INCLUDE_THRESHOLD)
               - np.count_nonzero(np.asarray(ref) >= INCLUDE_THRESHOLD))


def step_factor(d: int, k_err: float = 1e2) -> float:
    return k_err * float(np.sign(d - 1)) + 1.0


def multiplier(d: int, spec: LossSpec = LossSpec()) -> float:
    if spec.kind is LossKind.MSE:
        return 1.0
    return 1.0 + spec.k_sub_opt * step_factor(d, spec.k_err) * d


def f_loss(pred: np.ndarray, ref: np.ndarray, spec: LossSpec = LossSpec()) -> tuple[float, float]:
    """Return (loss, multiplier) for a single prediction/reference pair."""
    mult = multiplier(distance(pred, ref), spec)
    return mse(pred, ref) * mult, mult


def batch_loss(pred: np.ndarray, ref: np.ndarray, spec: LossSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean per-sample loss over a batch, its gradient w.r.t. ``pred``, and distances.

    ``pred`` is (B, ...) and ``ref`` broadcast-compatible after reshaping to
    ``pred.shape``.
    """
    ref = np.asarray(ref).reshape(pred.shape)
    b = pred.shape[0]
    per = int(np.prod(pred.shape[1:]))
    diff = pred.astype(np.float64) - ref.astype(np.float64)
    sample_mse = (diff * diff).reshape(b, per).mean(axis=1)
    counts_pred = (pred >= INCLUDE_THRESHOLD).reshape(b, per).sum(axis=1)
    counts_ref = (ref >= INCLUDE_THRESHOLD).reshape(b, per).sum(axis=1)
    dists = (counts_pred - counts_ref).astype(np.int64)
    if spec.kind is LossKind.FLOSS:
        mults = 1.0 + spec.k_sub_opt * (spec.k_err * np.sign(dists - 1) + 1.0) * dists
    else:
        mults = np.ones(b)
    loss = float(np.mean(sample_mse * mults))
    scale = (2.0 / (per * b)) * mults
    grad = diff * scale.reshape((b,) + (1,) * (pred.ndim - 1))
    return loss, grad.astype(pred.dtype), dists

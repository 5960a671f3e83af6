"""Small NHWC layer engine with explicit backward passes."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import PROBE_KINDS, grad_check, probe_network
from .layers import (Conv2D, Deconv2D, Dense, Dropout, Flatten, Layer, MaxPool2x2, Parameter,
                     ReLU, Reshape, ShapeError, Sigmoid, StateError, Upsample2x2, conv_same)
from .losses import LossKind, LossSpec, batch_loss, distance, f_loss, mse, multiplier, step_factor
from .network import Network
from .optim import Algorithm, OptimizerState, cyclical_lr, optimizer_step

__all__ = [
    "Algorithm", "CheckpointError", "Conv2D", "Deconv2D", "Dense", "Dropout", "Flatten",
    "Layer", "LossKind", "LossSpec", "MaxPool2x2", "Network", "OptimizerState", "Parameter",
    "ReLU", "Reshape", "ShapeError", "Sigmoid", "StateError", "Upsample2x2", "batch_loss",
    "conv_same", "cyclical_lr", "distance", "f_loss", "grad_check", "load_checkpoint", "mse", "probe_network", "PROBE_KINDS",
    "multiplier", "optimizer_step", "save_checkpoint", "step_factor",
]

"""Progressive autoencoder construction and training.

A stage-k network reads ``n0 * 2**k`` square inputs. Its layers carry two
labels: ``tag`` (``input_adapter``, ``output_head`` or ``interior``) and
``stage`` (the growth step that created them). Growing strips the two
resolution-specific adapters, wraps the remaining interior in a new
conv + max-pool pair and a new upsample + deconv pair, and adds a fresh
3-channel input convolution and 1-channel sigmoid head outside those. The
interior ``Layer`` objects, and therefore their ``Parameter`` storage, are
reused as-is.
"""

from __future__ import annotations

import contextlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, DatasetKind
from .nn import (Conv2D, Deconv2D, Dense, Dropout, Flatten, LossKind, LossSpec, MaxPool2x2,
                 Network, OptimizerState, ReLU, Reshape, ShapeError, Sigmoid, Upsample2x2,
                 batch_loss, cyclical_lr, optimizer_step, save_checkpoint)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class GrowthConfig:
    core_resolution: int = 8
    target_resolution: int = 64
    core_channels: tuple[int, int] = (32, 64)
    bottleneck: int = 128
    dropout: float = 0.25
    # outer width per growth step (index 0 -> first grow); last value repeats.
    # Empty: the outermost shell gets ``outer_width`` and each shell further in
    # doubles it, up to ``width_cap``.
    stage_widths: tuple[int, ...] = ()
    outer_width: int = 16
    width_cap: int = 64
    loss: LossSpec = field(default_factory=LossSpec)
    algorithm: str = "RMSProp"
    learning_rate: float = 1e-4
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    schedule: str = "constant"          # or "cyclical"
    lr_base: float = 1e-5
    lr_peak: float = 1e-3
    lr_period: int = 2000
    batch_size: int = 32
    core_epochs: int = 50
    stage_epochs: int = 30
    route_free_epochs: int = 5
    fine_tune_epochs: int = 0
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossSpec(**self.loss)
        self.core_channels = tuple(self.core_channels)
        self.stage_widths = tuple(self.stage_widths)
        n0, tgt = self.core_resolution, self.target_resolution
        if n0 < 2 or n0 % 2:
            raise ConfigError("core resolution must be even and >= 2")
        ratio = tgt // n0
        if tgt % n0 or ratio < 1 or ratio & (ratio - 1):
            raise ConfigError(f"target {tgt} is not {n0} times a power of two")
        if len(self.core_channels) != 2 or min(self.core_channels) < 1:
            raise ConfigError("core_channels needs two positive widths")
        if self.stage_widths and min(self.stage_widths) < 1:
            raise ConfigError("stage_widths must list positive widths")
        if self.outer_width < 1 or self.width_cap < self.outer_width:
            raise ConfigError("need 1 <= outer_width <= width_cap")
        if self.schedule not in ("constant", "cyclical"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")

    @property
    def ladder(self) -> list[int]:
        out, r = [], self.core_resolution
        while r <= self.target_resolution:
            out.append(r)
            r *= 2
        return out

    def width_for(self, stage: int) -> int:
        if self.stage_widths:
            return self.stage_widths[min(stage - 1, len(self.stage_widths) - 1)]
        depth = len(self.ladder) - 1 - stage     # 0 for the outermost shell
        return min(self.outer_width << max(depth, 0), self.width_cap)

    def lr_at(self, step: int) -> float:
        if self.schedule == "cyclical":
            return cyclical_lr(step, self.lr_base, self.lr_peak, self.lr_period)
        return self.learning_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = {"kind": self.loss.kind.value, "k_sub_opt": self.loss.k_sub_opt,
                     "k_err": self.loss.k_err}
        return d


@dataclass
class TrainLog:
    stage: int
    resolution: int
    kind: str                     # "Routed" or "RouteFree"
    epoch_loss: list[float] = field(default_factory=list)
    epoch_distance: list[float] = field(default_factory=list)
    epoch_abs_distance: list[float] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)
    steps: list[tuple[int, float, float, float]] = field(default_factory=list)
    skipped: bool = False
    locked_scalars: int = 0       # parameter entries held frozen during this run

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelSeries:
    stages: list[tuple[int, Network]] = field(default_factory=list)

    def shared_parameters(self, i: int) -> list:
        """Parameters of stage ``i`` that are physically shared with stage ``i - 1``."""
        prev = {id(p) for p in self.stages[i - 1][1].parameters()}
        return [p for p in self.stages[i][1].parameters() if id(p) in prev]

    @property
    def resolutions(self) -> list[int]:
        return [r for r, _ in self.stages]


def _rng(cfg: GrowthConfig, stage: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stage, stream])


def _tagged(layers, tag, stage):
    for layer in layers:
        layer.tag = tag
        layer.stage = stage
    return layers


def build_core(cfg: GrowthConfig) -> Network:
    n0 = cfg.core_resolution
    c0, c1 = cfg.core_channels
    q = n0 // 2
    rng = _rng(cfg, 0, 0)
    flat = q * q * c1
    layers = (
        _tagged([Conv2D(3, c0, 3, rng), ReLU()], "input_adapter", 0)
        + _tagged([
            MaxPool2x2(),
            Conv2D(c0, c1, 3, rng), ReLU(),
            Flatten(), Dense(flat, cfg.bottleneck, rng), ReLU(),
            Dropout(cfg.dropout, seed=cfg.seed),
            Dense(cfg.bottleneck, flat, rng), ReLU(), Reshape((q, q, c1)),
            Upsample2x2(),
            Deconv2D(c1, c0, 3, rng), ReLU(),
        ], "interior", 0)
        + _tagged([Conv2D(c0, 1, 1, rng, init="glorot"), Sigmoid()], "output_head", 0)
    )
    return Network(layers, (n0, n0, 3))


def current_stage(net: Network) -> int:
    return max(layer.stage for layer in net.layers)


def grow(net: Network, stage: int, cfg: GrowthConfig) -> Network:
    """Wrap ``net`` with one more resolution-doubling shell."""
    prev = current_stage(net)
    if stage != prev + 1:
        raise ConfigError(f"grow to stage {stage} from a stage-{prev} network")
    res = net.input_shape[0] * 2
    if res > cfg.target_resolution:
        raise ConfigError(f"stage {stage} ({res}x{res}) exceeds target "
                          f"{cfg.target_resolution}")
    in_adapter = [l for l in net.layers if l.tag == "input_adapter"]
    head = [l for l in net.layers if l.tag == "output_head"]
    interior = [l for l in net.layers if l.tag == "interior"]
    c_in = in_adapter[0].out_channels
    c_out = head[0].in_channels
    w = cfg.width_for(stage)
    rng = _rng(cfg, stage, 0)
    layers = (
        _tagged([Conv2D(3, w, 3, rng), ReLU()], "input_adapter", stage)
        + _tagged([Conv2D(w, c_in, 3, rng), ReLU(), MaxPool2x2()], "interior", stage)
        + interior
        + _tagged([Upsample2x2(), Deconv2D(c_out, w, 3, rng), ReLU()], "interior", stage)
        + _tagged([Conv2D(w, 1, 1, rng, init="glorot"), Sigmoid()], "output_head", stage)
    )
    return Network(layers, (res, res, 3))


def build_flat(cfg: GrowthConfig, resolution: int) -> Network:
    """Monolithic network with the same topology as the grown one at ``resolution``."""
    net = build_core(cfg)
    stage = 0
    while net.input_shape[0] < resolution:
        stage += 1
        net = grow(net, stage, replace(cfg, target_resolution=max(cfg.target_resolution,
                                                                   resolution)))
    if net.input_shape[0] != resolution:
        raise ConfigError(f"resolution {resolution} is not on the growth ladder")
    return net


@contextlib.contextmanager
def _locks(net: Network, lock_interior: bool):
    """Freeze earlier-stage parameters for the duration of one training run."""
    params = net.parameters()
    saved = [p.locked for p in params]
    try:
        if lock_interior:
            lock_inherited(net)
        yield sum(p.values.size for p in params if p.locked)
    finally:
        for p, flag in zip(params, saved):
            p.locked = flag


def lock_inherited(net: Network) -> list:
    """Lock every parameter created before the network's newest stage."""
    top = current_stage(net)
    locked = []
    for layer in net.layers:
        if layer.stage < top:
            for p in layer.params:
                p.locked = True
                locked.append(p)
    return locked


@contextlib.contextmanager
def _determinism(flag: bool):
    if not flag:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


def _fit(net: Network, ds: Dataset, cfg: GrowthConfig, epochs: int, stage: int,
         kind: str, loss: LossSpec, seed_stream: int) -> TrainLog:
    if ds.resolution != net.input_shape[0]:
        raise ShapeError(f"dataset resolution {ds.resolution} does not match network "
                         f"input {net.input_shape[0]}")
    tlog = TrainLog(stage, ds.resolution, kind)
    state = OptimizerState(cfg.algorithm, cfg.learning_rate, cfg.rms_decay, cfg.epsilon)
    rng = _rng(cfg, stage, seed_stream)
    net.reseed_dropout(cfg.seed * 7919 + stage * 31 + seed_stream)
    labels = ds.labels.reshape(len(ds), ds.resolution, ds.resolution, 1)
    step = 0
    with _determinism(cfg.deterministic):
        for _ in range(epochs):
            order = rng.permutation(len(ds))
            losses, dists, absd = [], [], []
            lr = cfg.lr_at(step)
            for start in range(0, len(ds), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                pred = net.forward(ds.features[idx], training=True)
                value, grad, d = batch_loss(pred, labels[idx], loss)
                net.backward(grad)
                lr = cfg.lr_at(step)
                optimizer_step(net, state, lr)
                tlog.steps.append((step, value, lr, float(d.mean())))
                losses.append(value * len(idx))
                dists.extend(d.tolist())
                absd.extend(np.abs(d).tolist())
                step += 1
            tlog.epoch_loss.append(float(np.sum(losses) / len(ds)))
            tlog.epoch_distance.append(float(np.mean(dists)))
            tlog.epoch_abs_distance.append(float(np.mean(absd)))
            tlog.epoch_lr.append(lr)
            log.info("stage %d %s epoch %d: loss %.5f dist %.2f", stage, kind,
                     len(tlog.epoch_loss), tlog.epoch_loss[-1], tlog.epoch_distance[-1])
    return tlog


def train_stage(net: Network, ds: Dataset, cfg: GrowthConfig, lock_interior: bool,
                epochs: int | None = None, loss: LossSpec | None = None) -> TrainLog:
    """Train ``net`` on ``ds``; with ``lock_interior`` earlier-stage weights stay frozen."""
    stage = current_stage(net)
    if epochs is None:
        epochs = cfg.core_epochs if stage == 0 else cfg.stage_epochs
    with _locks(net, lock_interior) as frozen:
        tlog = _fit(net, ds, cfg, epochs, stage, ds.kind.value, loss or cfg.loss,
                    seed_stream=1)
    tlog.locked_scalars = frozen
    return tlog


def pretrain_route_free(net: Network, ds: Dataset, cfg: GrowthConfig,
                        lock_interior: bool = True) -> TrainLog:
    """Preliminary training on pin-only labels."""
    if ds.kind is not DatasetKind.ROUTE_FREE:
        raise ConfigError(f"route-free pretraining needs a RouteFree dataset, got {ds.kind.value}")
    stage = current_stage(net)
    with _locks(net, lock_interior and stage > 0) as frozen:
        tlog = _fit(net, ds, cfg, cfg.route_free_epochs, stage, DatasetKind.ROUTE_FREE.value,
                    cfg.loss, seed_stream=2)
    tlog.locked_scalars = frozen
    return tlog


def _by_resolution(datasets: Sequence[Dataset] | None) -> dict[int, Dataset]:
    out = {}
    for ds in datasets or ():
        if ds.resolution in out:
            raise ConfigError(f"two datasets for resolution {ds.resolution}")
        out[ds.resolution] = ds
    return out


def train_progressive(cfg: GrowthConfig, datasets: Sequence[Dataset],
                      route_free: Sequence[Dataset] | None = None,
                      checkpoint_dir=None) -> tuple[Network, ModelSeries, list[TrainLog]]:
    """Core training followed by grow / pretrain / train for every ladder step.

    Stages whose routed dataset is missing are still constructed but not
    trained. The core dataset is mandatory.
    """
    routed = _by_resolution(datasets)
    pins = _by_resolution(route_free)
    for ds in routed.values():
        if ds.kind is not DatasetKind.ROUTED:
            raise ConfigError("main datasets must be Routed")
        if ds.resolution not in cfg.ladder:
            raise ConfigError(f"dataset resolution {ds.resolution} not on ladder {cfg.ladder}")
    if cfg.core_resolution not in routed:
        raise ConfigError(f"no dataset for the {cfg.core_resolution}x{cfg.core_resolution} core")

    series = ModelSeries()
    logs: list[TrainLog] = []
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "stages": []}

    def record(stage, net):
        series.stages.append((net.input_shape[0], net))
        if ckdir is None:
            return
        name = f"stage{stage}_{net.input_shape[0]}.pvwt"
        save_checkpoint(net, ckdir / name)
        ds = routed.get(net.input_shape[0])
        manifest["stages"].append({
            "stage": stage, "resolution": net.input_shape[0], "file": name,
            "dataset_seed": ds.seed if ds is not None else None,
            "trained": ds is not None,
        })

    net = build_core(cfg)
    if cfg.core_resolution in pins and cfg.route_free_epochs > 0:
        logs.append(pretrain_route_free(net, pins[cfg.core_resolution], cfg))
    logs.append(train_stage(net, routed[cfg.core_resolution], cfg, lock_interior=False))
    record(0, net)
    for stage, res in enumerate(cfg.ladder[1:], start=1):
        net = grow(net, stage, cfg)
        ds = routed.get(res)
        if ds is None:
            log.info("stage %d (%dx%d): no training data, skipped", stage, res, res)
            logs.append(TrainLog(stage, res, DatasetKind.ROUTED.value, skipped=True))
        else:
            if res in pins and cfg.route_free_epochs > 0:
                logs.append(pretrain_route_free(net, pins[res], cfg))
            logs.append(train_stage(net, ds, cfg, lock_interior=True))
        record(stage, net)
    if cfg.fine_tune_epochs > 0 and net.input_shape[0] in routed:
        logs.append(train_stage(net, routed[net.input_shape[0]], cfg, lock_interior=False,
                                epochs=cfg.fine_tune_epochs))
        if ckdir is not None:
            save_checkpoint(net, ckdir / "final.pvwt")
    if ckdir is not None:
        (ckdir / "series.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return net, series, logs


def train_flat(cfg: GrowthConfig, ds: Dataset, epochs: int | None = None,
               loss: LossSpec | None = None) -> tuple[Network, TrainLog]:
    """Baseline: train the full-resolution network directly, nothing locked."""
    net = build_flat(cfg, ds.resolution)
    loss = loss or LossSpec(LossKind.MSE)
    tlog = _fit(net, ds, cfg, cfg.stage_epochs if epochs is None else epochs,
                current_stage(net), ds.kind.value, loss, seed_stream=3)
    return net, tlog

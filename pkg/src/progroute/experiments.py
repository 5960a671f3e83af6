"""Seeded end-to-end experiments: all-zeros collapse and desk-scale routability.

Both return plain dataclasses so scripts, tests and reference-run files
share one protocol.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import SynthParams, build_dataset, derive_seed, synth_benchmark
from .evaluation import EvalReport, evaluate_model
from .nn import LossKind, LossSpec
from .progressive import GrowthConfig, train_flat, train_progressive

log = logging.getLogger(__name__)

# Benchmark and training distribution for the routability experiment: two-pin
# nets, 10% obstacles, capacity 8 so that 200 nets on a 16x16 grid contend for
# tracks without exhausting them outright.
ROUTABILITY_PARAMS = SynthParams(pin_count_range=(2, 2), obstacle_density=0.1,
                                 cap_default=8, cap_max=8)

ROUTABILITY_CONFIG = GrowthConfig(
    target_resolution=16,
    learning_rate=1e-3,
    core_epochs=150,
    stage_epochs=40,
    route_free_epochs=3,
    fine_tune_epochs=80,
)


def nonincreasing_trend(values) -> bool:
    """Least-squares slope of ``values`` is <= 0 and the run ends no higher than it began."""
    y = np.asarray(values, dtype=float)
    if len(y) < 2:
        return True
    slope = np.polyfit(np.arange(len(y)), y, 1)[0]
    return bool(slope <= 0 and y[-1] <= y[0])


# ---------------------------------------------------------------------------
# collapse

@dataclass
class CollapseRun:
    seed: int
    epoch_loss: list[float]
    mean_inclusion: float
    collapse_flag: bool
    seconds: float


@dataclass
class CollapseResult:
    runs: list[CollapseRun] = field(default_factory=list)

    @property
    def collapsed(self) -> int:
        return sum(r.collapse_flag for r in self.runs)


def collapse_experiment(seeds=(0, 1, 2), resolution: int = 64, count: int = 2000,
                        epochs: int = 4, bench_nets: int = 50, data_seed: int = 0,
                        cfg: GrowthConfig | None = None) -> CollapseResult:
    """Flat training with plain MSE on a sparse routed set, one run per seed.

    The dataset and held-out benchmark are shared; the seed drives weight
    initialisation, dropout and batch order.
    """
    params = SynthParams()
    ds = build_dataset(resolution, count, params, seed=data_seed)
    bench = synth_benchmark(resolution, bench_nets, params, seed=data_seed + 1,
                            name=f"heldout{resolution}")
    base = cfg or GrowthConfig(target_resolution=resolution)
    out = CollapseResult()
    for seed in seeds:
        start = time.perf_counter()
        net, tlog = train_flat(replace(base, seed=seed), ds, epochs=epochs,
                               loss=LossSpec(LossKind.MSE))
        report = evaluate_model(net, bench, cap_max=params.cap_max)
        out.runs.append(CollapseRun(seed, tlog.epoch_loss, report.mean_inclusion,
                                    report.collapse_flag, time.perf_counter() - start))
        log.info("collapse seed %d: inclusion %.2e flag %s", seed, report.mean_inclusion,
                 report.collapse_flag)
    return out


# ---------------------------------------------------------------------------
# routability

@dataclass
class RoutabilityResult:
    config: dict
    progressive: EvalReport
    flat: EvalReport
    seconds: dict[str, float]


def routability_experiment(cfg: GrowthConfig | None = None, seed: int = 0,
                           core_count: int = 4000, stage_count: int = 2000,
                           route_free_count: int = 1000, bench_nets: int = 200,
                           params: SynthParams = ROUTABILITY_PARAMS,
                           flat_epochs: int | None = None) -> RoutabilityResult:
    """Progressive FLoss training on an [8, 16] ladder against a flat MSE baseline.

    Both models are scored on one held-out 16x16 benchmark. The flat model gets
    as many 16x16 epochs as the progressive model's stage plus fine-tune passes.
    """
    cfg = cfg or ROUTABILITY_CONFIG
    cfg = replace(cfg, seed=seed)
    seconds = {}
    t = time.perf_counter()
    n0, n1 = cfg.core_resolution, cfg.core_resolution * 2
    d0 = build_dataset(n0, core_count, params, seed=derive_seed(seed, n0))
    d1 = build_dataset(n1, stage_count, params, seed=derive_seed(seed, n1))
    rf = [build_dataset(r, route_free_count, params, seed=derive_seed(seed + 1, r),
                        kind="RouteFree") for r in (n0, n1)]
    bench = synth_benchmark(n1, bench_nets, params, seed=derive_seed(seed + 2, n1),
                            name=f"heldout{n1}")
    seconds["data"] = time.perf_counter() - t

    t = time.perf_counter()
    ladder_cfg = replace(cfg, target_resolution=n1)
    net, _, logs = train_progressive(ladder_cfg, [d0, d1], rf)
    seconds["progressive"] = time.perf_counter() - t
    curves = {f"stage{l.stage}_{l.kind.lower()}_{i}": l.steps for i, l in enumerate(logs)}
    prog = evaluate_model(net, bench, cap_max=params.cap_max, curves=curves)

    t = time.perf_counter()
    epochs = flat_epochs if flat_epochs is not None else cfg.stage_epochs + cfg.fine_tune_epochs
    flat_net, flat_log = train_flat(ladder_cfg, d1, epochs=epochs, loss=LossSpec(LossKind.MSE))
    seconds["flat"] = time.perf_counter() - t
    flat = evaluate_model(flat_net, bench, cap_max=params.cap_max,
                          curves={"flat": flat_log.steps})
    log.info("routability: progressive %.1f%%, flat %.1f%%", prog.relative_routability or 0,
             flat.relative_routability or 0)
    return RoutabilityResult(cfg.to_dict(), prog, flat, seconds)


def write_reference(result: RoutabilityResult, path) -> None:
    """Store the headline numbers of a routability run as JSON."""
    def brief(rep: EvalReport) -> dict:
        return {k: getattr(rep, k) for k in (
            "nontrivial", "model_routed", "oracle_routed", "routability_model",
            "routability_oracle", "relative_routability", "mean_inclusion", "collapse_flag",
            "wirelength_model", "wirelength_oracle")}

    payload = {"config": result.config, "seconds": result.seconds,
               "progressive": brief(result.progressive), "flat_mse": brief(result.flat)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

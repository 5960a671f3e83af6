"""Grow an 8x8 core into a 16x16 router and compare it with a flat MSE model.

This is a scaled-down version of the routability experiment that runs in a
few minutes. Run with ``python demos/03_progressive_growth.py``.
"""
import logging

from progroute.data import build_dataset, synth_benchmark
from progroute.evaluation import evaluate_model
from progroute.experiments import ROUTABILITY_PARAMS as P
from progroute.nn import LossKind, LossSpec
from progroute.progressive import GrowthConfig, train_flat, train_progressive

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = GrowthConfig(target_resolution=16, learning_rate=1e-3, core_epochs=15,
                   stage_epochs=10, route_free_epochs=2, fine_tune_epochs=10)
d8 = build_dataset(8, 2000, P, seed=1)
d16 = build_dataset(16, 1000, P, seed=2)
pins = [build_dataset(r, 500, P, seed=3 + r, kind="RouteFree") for r in (8, 16)]
bench = synth_benchmark(16, 100, P, seed=42)

net, series, logs = train_progressive(cfg, [d8, d16], pins)
print("\nstages:", series.resolutions)
for l in logs:
    print(f"  stage {l.stage} {l.kind:9s} {len(l.epoch_loss):3d} epochs, "
          f"final loss {l.epoch_loss[-1]:.4f}, locked entries {l.locked_scalars}")

flat, _ = train_flat(cfg, d16, epochs=20, loss=LossSpec(LossKind.MSE))

for name, model in (("progressive", net), ("flat MSE", flat)):
    rep = evaluate_model(model, bench, cap_max=P.cap_max)
    print(f"{name:12s} relative routability {rep.relative_routability:5.1f}%  "
          f"mean inclusion {rep.mean_inclusion:.4f}  collapse {rep.collapse_flag}")

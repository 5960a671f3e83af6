"""Rerun the seeded reference experiments and store their headline numbers.

Writes ``reference_runs/routability.json`` (progressive FLoss against flat
MSE on the 16x16 benchmark) and ``reference_runs/collapse.json`` (flat MSE at
64x64, one run per seed). Expect roughly an hour and a half on one CPU core.

Run with ``python demos/reference_routability.py [--skip-collapse]``.
"""
import argparse
import json
import logging
from pathlib import Path

from progroute.experiments import collapse_experiment, routability_experiment, write_reference

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

parser = argparse.ArgumentParser()
parser.add_argument("--out", default=Path(__file__).resolve().parent.parent / "reference_runs",
                    type=Path)
parser.add_argument("--skip-collapse", action="store_true")
args = parser.parse_args()
args.out.mkdir(parents=True, exist_ok=True)

result = routability_experiment()
write_reference(result, args.out / "routability.json")
print(f"progressive {result.progressive.relative_routability:.1f}%  "
      f"flat MSE {result.flat.relative_routability:.1f}%")

if not args.skip_collapse:
    collapse = collapse_experiment()
    runs = [{"seed": r.seed, "epoch_loss": r.epoch_loss, "mean_inclusion": r.mean_inclusion,
             "collapse_flag": r.collapse_flag, "seconds": r.seconds} for r in collapse.runs]
    (args.out / "collapse.json").write_text(json.dumps({"runs": runs}, indent=2) + "\n")
    print(f"collapsed {collapse.collapsed}/{len(collapse.runs)}")

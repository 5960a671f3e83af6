"""Routing verdicts for model outputs: connectivity, legality, routability."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid import (NEIGHBOR_OFFSETS, Benchmark, CapacityError, Net, apply_route,
                   check_legality, encode_features, is_trivial)
from .nn import Network, ShapeError
from .oracle import route_net

COLLAPSE_INCLUSION = 1e-3

Predictor = Callable[[np.ndarray], np.ndarray]


def threshold(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    if pred.ndim == 3 and pred.shape[-1] == 1:
        pred = pred[..., 0]
    return (pred >= 0.5).astype(np.uint8)


def wirelength(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def check_connectivity(mask: np.ndarray, net: Net) -> bool:
    """Breadth-first walk from the first pin over the mask's 1-tiles."""
    mask = np.asarray(mask)
    n = mask.shape[0]
    start = net.pins[0]
    if not all(mask[p] for p in net.pins):
        return False
    seen = np.zeros(mask.shape, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in NEIGHBOR_OFFSETS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < n and 0 <= nc < n and mask[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return all(seen[p] for p in net.pins)


@dataclass
class NetRecord:
    net_id: str
    trivial: bool
    routed: bool
    wirelength: int
    reason: str = ""
    oracle_routed: bool = False
    oracle_wirelength: int = 0


@dataclass
class EvalReport:
    benchmark: str
    records: list[NetRecord]
    nontrivial: int
    model_routed: int
    oracle_routed: int
    routability_model: float
    routability_oracle: float
    relative_routability: float | None
    mean_inclusion: float
    collapse_flag: bool
    wirelength_model: int
    wirelength_oracle: int
    curves: dict[str, list[tuple[int, float, float, float]]] = field(default_factory=dict)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("curves")
        d["records"] = [asdict(r) for r in self.records]
        return d


def _as_predictor(model) -> Predictor:
    if isinstance(model, Network):
        return lambda feats: model.forward(feats[None])[0, ..., 0]
    if callable(model):
        return model
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def evaluate_model(model: Network | Predictor, benchmark: Benchmark,
                   cap_max: int | None = None, curves: dict | None = None) -> EvalReport:
    """Route the benchmark sequentially with the model and with the oracle.

    ``model`` is a Network or any callable mapping an (n, n, 3) feature map to
    an (n, n) probability map.
    """
    n = benchmark.grid.n
    if isinstance(model, Network) and model.input_shape[:2] != (n, n):
        raise ShapeError(f"model input {model.input_shape} does not match {n}x{n} benchmark")
    predict = _as_predictor(model)
    cap_max = cap_max or max(benchmark.grid.max_capacity(), 1)
    model_grid = benchmark.grid.copy()
    oracle_grid = benchmark.grid.copy()
    records = []
    inclusion = []
    wl_model = wl_oracle = 0
    for net in benchmark.nets:
        trivial = is_trivial(net)
        rec = NetRecord(net.id, trivial, False, 0)
        ores = route_net(oracle_grid, net)
        if ores.routed:
            oracle_grid = apply_route(oracle_grid, ores.mask)
            rec.oracle_routed = True
            rec.oracle_wirelength = ores.wirelength
            wl_oracle += ores.wirelength
        if trivial:
            rec.routed = True
            rec.wirelength = 1
            rec.reason = "trivial"
            wl_model += 1
            records.append(rec)
            continue
        pred = np.asarray(predict(encode_features(model_grid, net, cap_max)))
        if pred.shape != (n, n):
            raise ShapeError(f"prediction shape {pred.shape} != ({n}, {n})")
        mask = threshold(pred)
        inclusion.append(mask.mean())
        if not check_connectivity(mask, net):
            rec.reason = "disconnected"
        elif not check_legality(mask, model_grid):
            rec.reason = "over capacity"
        else:
            try:
                model_grid = apply_route(model_grid, mask)
            except CapacityError:  # pragma: no cover - legality already checked
                rec.reason = "over capacity"
            else:
                rec.routed = True
                rec.wirelength = wirelength(mask)
                wl_model += rec.wirelength
        records.append(rec)
    nontrivial = sum(not r.trivial for r in records)
    m_ok = sum(r.routed and not r.trivial for r in records)
    o_ok = sum(r.oracle_routed and not r.trivial for r in records)
    pct = (lambda k: 100.0 * k / nontrivial) if nontrivial else (lambda k: 0.0)
    mean_inc = float(np.mean(inclusion)) if inclusion else 0.0
    return EvalReport(
        benchmark=benchmark.name, records=records, nontrivial=nontrivial,
        model_routed=m_ok, oracle_routed=o_ok,
        routability_model=pct(m_ok), routability_oracle=pct(o_ok),
        relative_routability=(100.0 * m_ok / o_ok) if o_ok else None,
        mean_inclusion=mean_inc, collapse_flag=mean_inc < COLLAPSE_INCLUSION,
        wirelength_model=wl_model, wirelength_oracle=wl_oracle,
        curves=dict(curves or {}),
    )


# ---------------------------------------------------------------------------
# report files

def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_curves(rows: Sequence[tuple], path) -> None:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "lr", "distance_mean"])
    for step, loss, lr, dist in rows:
        w.writerow([int(step), repr(float(loss)), repr(float(lr)), repr(float(dist))])
    _write_atomic(Path(path), buf.getvalue())


def read_curves(path) -> list[tuple[int, float, float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["step"]), float(r["loss"]), float(r["lr"]), float(r["distance_mean"]))
            for r in rows]


def emit_report(report: EvalReport, path) -> list[Path]:
    """Write ``summary.json`` plus one ``curves_<name>.csv`` per curve into ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "summary.json"]
        summary = report.summary()
        summary["curve_files"] = {k: f"curves_{k}.csv" for k in report.curves}
        _write_atomic(written[0], json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for name, rows in report.curves.items():
            written.append(out / f"curves_{name}.csv")
            write_curves(rows, written[-1])
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written


def read_report(path) -> EvalReport:
    root = Path(path)
    d = json.loads((root / "summary.json").read_text())
    files = d.pop("curve_files", {})
    d["records"] = [NetRecord(**r) for r in d["records"]]
    d["curves"] = {k: read_curves(root / f) for k, f in files.items()}
    return EvalReport(**d)

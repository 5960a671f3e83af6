"""``progroute`` command line: synth, train, eval, route, gradcheck, report.

Exit codes: 0 success, 1 usage error, 2 validation error (bad input files,
inconsistent configs, failed checks), 3 runtime error (I/O and everything
else).  Commands that write files take ``--out``; when omitted, the run
directory comes from ``$PROGROUTE_RUN_DIR`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import (DatasetKind, SynthParams, build_dataset, load_dataset,
                   multi_resolution_suite, save_dataset, synth_benchmark)
from .evaluation import emit_report, evaluate_model, read_report
from .grid import check_resolution, emit_benchmark, parse_benchmark
from .nn import (PROBE_KINDS, LossKind, LossSpec, grad_check, load_checkpoint, probe_network,
                 save_checkpoint)
from .oracle import route_benchmark
from .progressive import (GrowthConfig, build_core, pretrain_route_free, train_flat,
                          train_progressive, train_stage)

RUN_DIR_ENV = "PROGROUTE_RUN_DIR"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
EMPTY_BASELINE = "empty-baseline"

log = logging.getLogger("progroute")


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _run_dir(args) -> Path:
    return Path(args.out or os.environ.get(RUN_DIR_ENV, "runs"))


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _existing_dir(path: Path) -> Path:
    if not path.is_dir():
        raise FileNotFoundError(f"output directory {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# synth

def _synth_params(args) -> SynthParams:
    lo, hi = args.pins
    return SynthParams((lo, hi), args.density, args.cap_default, args.cap_max)


def cmd_synth(args) -> int:
    out = _existing_dir(_run_dir(args))
    params = _synth_params(args)
    kind = DatasetKind.ROUTE_FREE if args.kind == "route-free" else DatasetKind.ROUTED
    resolutions = args.resolutions or [args.resolution]
    counts = args.counts or [args.count] * len(resolutions)
    if len(counts) != len(resolutions):
        raise UsageError("--counts must list one count per resolution")
    for n in resolutions:
        check_resolution(n)       # datasets feed the doubling ladder
    if args.benchmark:
        written = []
        for n in resolutions:
            bench = synth_benchmark(n, args.benchmark, params, args.seed, name=f"synth{n}")
            path = out / f"bench_{n}.txt"
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(emit_benchmark(bench))
            os.replace(tmp, path)
            written.append(path)
    else:
        if len(resolutions) == 1:
            suite = [build_dataset(resolutions[0], counts[0], params, args.seed, kind,
                                   workers=args.workers)]
        else:
            suite = multi_resolution_suite(resolutions, counts, params, args.seed, kind,
                                           workers=args.workers)
        prefix = "routefree" if kind is DatasetKind.ROUTE_FREE else "routed"
        written = []
        for ds in suite:
            path = out / f"{prefix}_{ds.resolution}.pvae"
            save_dataset(ds, path)
            written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

_OVERRIDES = ("seed", "learning_rate", "core_epochs", "stage_epochs", "route_free_epochs",
              "fine_tune_epochs", "batch_size", "target_resolution")


def resolve_config(args) -> GrowthConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{args.config}: not valid JSON ({exc})") from None
        if not isinstance(base, dict):
            raise ValueError(f"{args.config}: top level must be an object")
        known = {f.name for f in dataclasses.fields(GrowthConfig)}
        unknown = set(base) - known
        if unknown:
            raise ValueError(f"{args.config}: unknown keys {sorted(unknown)}")
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    args.loss_explicit = bool(args.loss) or "loss" in base
    if args.loss:
        loss = dict(base.get("loss") or {})
        loss["kind"] = LossKind.MSE.value if args.loss == "mse" else LossKind.FLOSS.value
        base["loss"] = loss
    if args.deterministic is not None:
        base["deterministic"] = args.deterministic
    return GrowthConfig(**base)


def cmd_train(args) -> int:
    out = _run_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    datasets = [load_dataset(p) for p in args.data]
    route_free = [load_dataset(p) for p in args.route_free or ()]
    cfg = resolve_config(args)
    if args.mode == "core":
        cfg = dataclasses.replace(cfg, target_resolution=cfg.core_resolution)
    _write_json(out / "config.json", {"mode": args.mode, "config": cfg.to_dict()})

    if args.mode == "flat":
        if len(datasets) != 1:
            raise UsageError("train flat takes exactly one --data file")
        # the flat baseline defaults to plain MSE unless a loss was asked for
        loss = cfg.loss if args.loss_explicit else LossSpec(LossKind.MSE)
        net, tlog = train_flat(cfg, datasets[0], loss=loss)
        logs = [tlog]
        save_checkpoint(net, out / "final.pvwt")
    elif args.mode == "core":
        core = [d for d in datasets if d.resolution == cfg.core_resolution]
        if len(core) != 1:
            raise ValueError(f"train core needs one {cfg.core_resolution}x"
                             f"{cfg.core_resolution} dataset")
        net, logs = build_core(cfg), []
        pins = [d for d in route_free if d.resolution == cfg.core_resolution]
        if pins and cfg.route_free_epochs > 0:
            logs.append(pretrain_route_free(net, pins[0], cfg))
        logs.append(train_stage(net, core[0], cfg, lock_interior=False))
        save_checkpoint(net, out / "final.pvwt")
    else:
        net, _, logs = train_progressive(cfg, datasets, route_free, checkpoint_dir=out)
        save_checkpoint(net, out / "final.pvwt")
    _write_json(out / "train_log.json", [l.to_dict() for l in logs])
    for l in logs:
        if l.epoch_loss:
            print(f"stage {l.stage} {l.resolution}x{l.resolution} {l.kind}: "
                  f"loss {l.epoch_loss[0]:.5f} -> {l.epoch_loss[-1]:.5f}")
        elif l.skipped:
            print(f"stage {l.stage} {l.resolution}x{l.resolution}: skipped (no data)")
    print(out / "final.pvwt")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / route / report

def _load_benchmark(path) -> "Benchmark":
    text = Path(path).read_text()
    return parse_benchmark(text, name=Path(path).stem)


def _curves_from_log(path) -> dict:
    entries = json.loads(Path(path).read_text())
    curves = {}
    for e in entries:
        if e.get("steps"):
            curves[f"stage{e['stage']}_{e['kind'].lower()}"] = [tuple(s) for s in e["steps"]]
    return curves


def cmd_eval(args) -> int:
    bench = _load_benchmark(args.benchmark)
    if args.model == EMPTY_BASELINE:
        model = lambda feats: np.zeros(feats.shape[:2])  # noqa: E731
    else:
        model = load_checkpoint(args.model)
    curves = _curves_from_log(args.log) if args.log else None
    report = evaluate_model(model, bench, cap_max=args.cap_max, curves=curves)
    out = _run_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, out)
    _print_report(report)
    return EXIT_OK


def _print_report(report) -> None:
    rel = report.relative_routability
    print(f"benchmark {report.benchmark}: {report.nontrivial} non-trivial nets")
    print(f"model  routed {report.model_routed} ({report.routability_model:.2f}%), "
          f"wirelength {report.wirelength_model}")
    print(f"oracle routed {report.oracle_routed} ({report.routability_oracle:.2f}%), "
          f"wirelength {report.wirelength_oracle}")
    print("relative routability " + ("n/a" if rel is None else f"{rel:.2f}%"))
    print(f"mean inclusion {report.mean_inclusion:.6f} collapse {report.collapse_flag}")


def cmd_route(args) -> int:
    bench = _load_benchmark(args.benchmark)
    results, summary = route_benchmark(bench)
    for net, res in zip(bench.nets, results):
        print(f"{net.id} {res.status.value} {res.wirelength}")
    print(f"routed {summary.routed}/{summary.nontrivial} non-trivial, "
          f"wirelength {summary.wirelength}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = read_report(args.report)
    if args.json:
        print(json.dumps(report.summary(), indent=2, sort_keys=True))
    else:
        _print_report(report)
        for name, rows in report.curves.items():
            print(f"curve {name}: {len(rows)} steps, final loss {rows[-1][1]:.6f}"
                  if rows else f"curve {name}: empty")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck

def cmd_gradcheck(args) -> int:
    kinds = tuple(k.strip() for k in args.layers.split(",") if k.strip())
    net = probe_network(kinds, seed=args.seed)
    worst = 0.0
    for kind in (LossKind.MSE, LossKind.FLOSS):
        err = grad_check(net, LossSpec(kind), probe_count=args.probes, seed=args.seed)
        print(f"{kind.value}: max relative error {err:.3e} over {args.probes} probes")
        worst = max(worst, err)
    if worst >= args.tolerance:
        raise CheckFailed(f"gradient check failed: {worst:.3e} >= {args.tolerance:g}")
    print("gradient check passed")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="progroute", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="synthesize datasets or benchmarks")
    s.add_argument("--out", help=f"output directory (must exist; default ${RUN_DIR_ENV})")
    s.add_argument("--resolution", type=int, default=8)
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--resolutions", type=_ints)
    s.add_argument("--counts", type=_ints)
    s.add_argument("--kind", choices=("routed", "route-free"), default="routed")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pins", type=_ints, default=[2, 5], help="min,max pins per net")
    s.add_argument("--density", type=float, default=0.1)
    s.add_argument("--cap-default", type=int, default=2)
    s.add_argument("--cap-max", type=int, default=2)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--benchmark", type=int, metavar="NETS",
                   help="write a NETS-net benchmark text file instead of a dataset")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a core, progressive or flat model")
    t.add_argument("mode", choices=("core", "progressive", "flat"))
    t.add_argument("--data", nargs="+", required=True, help="Routed dataset files")
    t.add_argument("--route-free", nargs="*", help="RouteFree dataset files")
    t.add_argument("--config", help="JSON file with GrowthConfig fields")
    t.add_argument("--out")
    t.add_argument("--loss", choices=("mse", "floss"))
    t.add_argument("--seed", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--core-epochs", type=int)
    t.add_argument("--stage-epochs", type=int)
    t.add_argument("--route-free-epochs", type=int)
    t.add_argument("--fine-tune-epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--target-resolution", type=int)
    t.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a model against the oracle on a benchmark")
    e.add_argument("--model", required=True, help=f"checkpoint path or '{EMPTY_BASELINE}'")
    e.add_argument("--benchmark", required=True)
    e.add_argument("--cap-max", type=int, help="capacity normaliser (default: grid maximum)")
    e.add_argument("--log", help="train_log.json whose curves go into the report")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("route", help="run the oracle router on a benchmark")
    r.add_argument("--benchmark", required=True)
    r.set_defaults(func=cmd_route)

    g = sub.add_parser("gradcheck", help="finite-difference check of backpropagation")
    g.add_argument("--layers", default=",".join(PROBE_KINDS))
    g.add_argument("--probes", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-3)
    g.set_defaults(func=cmd_gradcheck)

    rp = sub.add_parser("report", help="print a report directory")
    rp.add_argument("report")
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"progroute: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, CheckFailed) as exc:
        print(f"progroute: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"progroute: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

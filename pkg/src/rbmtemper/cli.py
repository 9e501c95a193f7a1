"""Command line entry point: ``rbmtemper {generate-data,train,evaluate,plot,verify}``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .evaluation import emit_metrics, read_metrics
from .plotting import SchemaError, plot_all
from .runner import CHECKPOINT, evaluate_checkpoint, run_cell, test_set
from .training import CheckpointVersionError
from .verify import run_checks

log = logging.getLogger("rbmtemper")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg


def cmd_generate_data(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out) / "data"
    try:
        out.mkdir(parents=True, exist_ok=True)
        spec = cfg.data.spec()
        test = test_set(cfg, spec) if args.n is None else ds.sample(spec, args.n, np.random.default_rng([cfg.data.seed, 1]))
        ds.write_set(out / "test.bmds", test, spec.height, spec.width)
        (out / "modes.json").write_text(spec.to_json())
    except OSError as exc:
        print(f"error: cannot write dataset to {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(test)} samples to {out / 'test.bmds'}")
    return EXIT_OK


def _cell(job):
    cfg, seed, lr, out, resume = job
    return str(run_cell(cfg, seed, lr, out, resume))


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    jobs = [(cfg, s + args.seed_offset, lr, out, args.resume) for lr in cfg.learning_rates for s in cfg.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            dirs = list(pool.map(_cell, jobs))
    else:
        dirs = [_cell(j) for j in jobs]
    for d in dirs:
        print(d)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    paths = [Path(p) for p in args.checkpoints] or sorted(Path(cfg.out).glob(f"*/{CHECKPOINT}"))
    if not paths:
        print(f"error: no checkpoints found under {cfg.out}", file=sys.stderr)
        return EXIT_CONFIG
    for path in paths:
        row = evaluate_checkpoint(path, cfg)
        target = path.parent / "evaluation.csv"
        emit_metrics([row], target, len(row.swap_rates))
        lls = ", ".join(f"{x:.3f}" for x in row.test_ll)
        print(f"{path.parent.name}: iteration={row.iteration} test_ll=[{lls}] dbn_bound={row.dbn_bound:.3f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out or ".")
    try:
        for p in plot_all(args.csv, out):
            print(p)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if r.status == "FAIL"]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed or skipped")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbmtemper", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")

    p = sub.add_parser("generate-data", help="write the fixed test set and dataset description")
    common(p)
    p.add_argument("-n", type=int, default=None, help="override the test-set size")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train every (seed, learning rate) cell")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed-offset", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="recompute metrics from checkpoints")
    common(p)
    p.add_argument("checkpoints", nargs="*")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="render mean +- sd curves to SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="run the exact-oracle self checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

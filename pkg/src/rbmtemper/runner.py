"""Runs one (seed, learning rate) cell of an experiment: training with periodic
exact evaluation, metrics CSV and checkpoints, resumable."""
from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from .config import ExperimentConfig, dump_config
from .evaluation import MetricsRow, dbn_lower_bound, emit_metrics, exact_test_ll, swap_report, truncate_metrics, up_pass_deterministic
from .training import Trainer, greedy_pretrain, load_checkpoint, modes_data_fn

log = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.npz"
METRICS = "metrics.csv"


def test_set(cfg: ExperimentConfig, spec: ds.ModesSpec | None = None) -> np.ndarray:
    spec = spec or cfg.data.spec()
    return ds.sample(spec, cfg.data.test_size, np.random.default_rng([cfg.data.seed, 1]))


def cell_name(cfg: ExperimentConfig, seed: int, lr: float) -> str:
    return f"{cfg.method}_lr{lr:g}_seed{seed}"


def make_trainer(cfg: ExperimentConfig, seed: int, lr: float, spec: ds.ModesSpec) -> Trainer:
    tc = cfg.train_config(seed, lr)
    kw = dict(window=cfg.train.swap_window, swaps=cfg.train.swaps, mean_field_up=cfg.train.mean_field_up)
    if cfg.tempering is not None:
        kw.update(n_temps=cfg.tempering.n_temps, gamma0=cfg.tempering.gamma0, t0=cfg.tempering.t0)
        if cfg.method == "cast":
            kw["cast_ratio"] = cfg.tempering.cast_ratio
    return Trainer(cfg.method, cfg.layers, tc, modes_data_fn(spec), **kw)


def evaluate(trainer: Trainer, test, cfg: ExperimentConfig, seconds: float = 0.0) -> MetricsRow:
    """Exact metrics for the trainer's current parameters (deterministic)."""
    layers = trainer.layers
    inputs = up_pass_deterministic(layers, test, trainer.cfg.seed)
    lls = [exact_test_ll(p, x) for p, x in zip(layers, inputs)]
    if len(layers) == 1:
        bound = lls[0]
    else:
        bound = dbn_lower_bound(layers, test, monte_carlo=cfg.eval.monte_carlo, n_samples=cfg.eval.mc_samples,
                                rng=np.random.default_rng(trainer.cfg.seed))
    rates = swap_report(trainer.stats) if trainer.stats is not None else []
    return MetricsRow(trainer.iteration, lls, bound, rates, trainer.cfg.learning_rate,
                      seconds if cfg.eval.timing else 0.0)


def run_cell(cfg: ExperimentConfig, seed: int, lr: float, out_dir, resume: bool = False) -> Path:
    """Train one cell to ``cfg.train.total_updates`` and return its run directory.

    The directory receives the config snapshot, the dataset description and test
    set, ``metrics.csv`` and ``checkpoint.npz`` (rewritten at every evaluation).
    """
    run_dir = Path(out_dir) / cell_name(cfg, seed, lr)
    run_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.data.spec()
    test = test_set(cfg, spec)
    trainer = make_trainer(cfg, seed, lr, spec)
    ckpt, metrics = run_dir / CHECKPOINT, run_dir / METRICS
    elapsed = 0.0
    if resume and ckpt.exists():
        meta = trainer.load(ckpt)
        elapsed = float(meta.get("extra", {}).get("seconds", 0.0))
        truncate_metrics(metrics, trainer.iteration)
        log.info("%s: resumed at iteration %d", run_dir.name, trainer.iteration)
    else:
        (run_dir / "config.ini").write_text(dump_config(cfg))
        (run_dir / "modes.json").write_text(spec.to_json())
        ds.write_set(run_dir / "test.bmds", test, spec.height, spec.width)
        if cfg.pretrain.enabled:
            rng = np.random.default_rng([seed, 2])
            pre = greedy_pretrain(trainer.layers, trainer.cfg, cfg.pretrain, trainer.data_fn, rng)
            for p, q in zip(trainer.layers, pre):
                p.W[...], p.c[...], p.b[...] = q.W, q.c, q.b
        emit_metrics([evaluate(trainer, test, cfg, elapsed)], metrics, trainer.n_pairs)
        trainer.save(ckpt, extra={"seconds": elapsed})
    total, every = cfg.train.total_updates, cfg.train.eval_interval
    while trainer.iteration < total:
        start = time.perf_counter()
        n = min(every - trainer.iteration % every, total - trainer.iteration)
        trainer.run(n)
        elapsed += time.perf_counter() - start
        emit_metrics([evaluate(trainer, test, cfg, elapsed)], metrics, trainer.n_pairs, append=True)
        trainer.save(ckpt, extra={"seconds": elapsed})
    return run_dir


def evaluate_checkpoint(path, cfg: ExperimentConfig) -> MetricsRow:
    """Recompute the metrics row of a saved checkpoint."""
    arrays, meta = load_checkpoint(path)
    spec = cfg.data.spec()
    trainer = make_trainer(cfg, int(meta["cfg"]["seed"]), float(meta["cfg"]["learning_rate"]), spec)
    trainer.load_state(arrays, meta)
    return evaluate(trainer, test_set(cfg, spec), cfg, float(meta.get("extra", {}).get("seconds", 0.0)))

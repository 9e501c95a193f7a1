"""Stochastic maximum likelihood training: gradients, the layer-wise joint
training step for stacked RBMs, greedy pretraining and resumable trainers for
every sampler (sml, pt, cast, dt)."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import dataset as ds
from .evaluation import exact_test_ll
from .rbm import RbmParams, cond_h_given_v, sample_h
from .samplers import (
    CastEnsemble,
    ChainBank,
    DeepEnsemble,
    SwapStats,
    TemperedEnsemble,
    cast_step,
    dt_neg_swaps,
    linear_betas,
    pt_step,
    sml_step,
)

log = logging.getLogger(__name__)

METHODS = ("sml", "pt", "cast", "dt")
CHECKPOINT_VERSION = 1


@dataclass
class GradientTriple:
    dW: np.ndarray
    dc: np.ndarray
    db: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    minibatch_size: int = 5
    gibbs_steps_per_update: int = 1
    total_updates: int = 50_000
    seed: int = 0
    eval_interval: int = 1000

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be at least 1")
        if self.gibbs_steps_per_update < 1:
            raise ValueError("gibbs_steps_per_update must be at least 1")
        if self.total_updates < 0 or self.eval_interval < 1:
            raise ValueError("total_updates must be >= 0 and eval_interval >= 1")


@dataclass
class PretrainConfig:
    enabled: bool = False
    oscillation_window: int = 50
    oscillation_threshold: float = 3.0

    def __post_init__(self):
        if self.oscillation_window < 2:
            raise ValueError("oscillation_window must be at least 2")


def sml_grad(params: RbmParams, v_plus, v_minus, w_plus=None, w_minus=None) -> GradientTriple:
    """Log-likelihood ascent direction: data statistics minus model statistics.

    Hidden statistics are conditional means. Optional per-row weights (summing
    to one) replace the plain batch means, e.g. to plug in exact model
    probabilities over an enumerated visible space.
    """
    v_plus = np.atleast_2d(np.asarray(v_plus, dtype=np.float64))
    v_minus = np.atleast_2d(np.asarray(v_minus, dtype=np.float64))
    if v_plus.shape[0] == 0 or v_minus.shape[0] == 0:
        raise ValueError("positive and negative batches must be non-empty")
    hp = cond_h_given_v(params, v_plus)
    hm = cond_h_given_v(params, v_minus)

    def stats(v, h, w):
        if w is None:
            return v.T @ h / v.shape[0], v.mean(axis=0), h.mean(axis=0)
        w = np.asarray(w, dtype=np.float64)
        return v.T @ (h * w[:, None]), w @ v, w @ h

    pw, pc, pb = stats(v_plus, hp, w_plus)
    mw, mc, mb = stats(v_minus, hm, w_minus)
    return GradientTriple(pw - mw, pc - mc, pb - mb)


def apply_update(params: RbmParams, grad: GradientTriple, lr: float) -> None:
    params.W += lr * grad.dW
    params.c += lr * grad.dc
    params.b += lr * grad.db


def up_pass(layers, v_data, rng: np.random.Generator, mean_field: bool = False) -> list:
    """Positive-phase inputs per layer: the data, then hidden samples pushed upward.

    With ``mean_field`` the conditional means are propagated instead of samples.
    """
    out = [np.asarray(v_data, dtype=np.float64)]
    for p in layers[:-1]:
        out.append(cond_h_given_v(p, out[-1]) if mean_field else sample_h(p, out[-1], rng))
    return out


def dt_learn_step(ens: DeepEnsemble, cfg: TrainConfig, data_batch, rng: np.random.Generator,
                  pos_rng: np.random.Generator | None = None, layer_rngs=None,
                  swaps: bool = True, mean_field: bool = False) -> DeepEnsemble:
    """One joint update of every layer of the stack.

    Negative samples come from :func:`dt_neg_swaps`, positive samples from an
    upward pass of ``data_batch``; each layer then takes an independent SML step
    and the parity flag flips.
    """
    _, neg = dt_neg_swaps(ens, rng, cfg.gibbs_steps_per_update, swaps=swaps, layer_rngs=layer_rngs)
    pos = up_pass(ens.layers, data_batch, pos_rng if pos_rng is not None else rng, mean_field)
    for p, vp, vm in zip(ens.layers, pos, neg):
        apply_update(p, sml_grad(p, vp, vm), cfg.learning_rate)
    ens.isodd = not ens.isodd
    return ens


# --------------------------------------------------------------------------- trainers


DataFn = Callable[[int, np.random.Generator], np.ndarray]

_STREAMS = ("init", "data", "pos", "swap")


def make_streams(seed: int, n_layers: int) -> dict:
    """Independent generators: init, data, pos, swap and one chain stream per layer."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS) + n_layers)
    streams = {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(_STREAMS, children)}
    for i, s in enumerate(children[len(_STREAMS):]):
        streams[f"chain{i}"] = np.random.Generator(np.random.PCG64(s))
    return streams


class Trainer:
    """Trains one RBM (sml, pt, cast) or a stack of RBMs (dt) on a data stream.

    ``data_fn(n, rng)`` yields a batch of ``n`` visible vectors. Layers are
    initialised from the ``init`` stream unless given. ``n_chains`` overrides the
    number of persistent chains for plain SML (default: the minibatch size). The
    sampler state, the
    parameters and every generator can be checkpointed and restored exactly.
    """

    def __init__(self, method: str, sizes, cfg: TrainConfig, data_fn: DataFn, *,
                 n_temps: int = 1, betas=None, cast_ratio: int = 1, gamma0: float = 1.0,
                 t0: float = 1e4, window: int = 10_000, swaps: bool = True,
                 mean_field_up: bool = False, layers=None, n_chains: int | None = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        sizes = list(sizes)
        if method != "dt" and len(sizes) != 2:
            raise ValueError(f"method {method} trains a single RBM; got layer sizes {sizes}")
        if len(sizes) < 2:
            raise ValueError("need at least visible and one hidden layer size")
        self.method = method
        self.sizes = sizes
        self.cfg = cfg
        self.data_fn = data_fn
        self.swaps = swaps
        self.mean_field_up = mean_field_up
        self.iteration = 0
        self.streams = make_streams(cfg.seed, len(sizes) - 1)
        init = self.streams["init"]
        if layers is None:
            layers = [RbmParams.init(a, b, init) for a, b in zip(sizes[:-1], sizes[1:])]
        self.layers = list(layers)
        k = cfg.minibatch_size
        if method == "sml":
            self.sampler = ChainBank.init(sizes[0], n_chains or k, init)
        elif method == "pt":
            b = linear_betas(n_temps) if betas is None else betas
            self.sampler = TemperedEnsemble.init(self.layers[0], b, k, init, window)
        elif method == "cast":
            b = linear_betas(n_temps) if betas is None else betas
            self.sampler = CastEnsemble.init(self.layers[0], b, cast_ratio, k, init, gamma0, t0, window)
        else:
            self.sampler = DeepEnsemble.init(self.layers, k, init, window)

    # ---- sampling

    @property
    def stats(self) -> SwapStats | None:
        return getattr(self.sampler, "stats", None)

    @property
    def n_pairs(self) -> int:
        return self.stats.n_pairs if self.stats is not None else 0

    def negative_phase(self) -> list:
        k = self.cfg.gibbs_steps_per_update
        chain = self.streams["chain0"]
        if self.method == "sml":
            return [sml_step(self.layers[0], self.sampler, k, chain).states]
        if self.method == "pt":
            return [pt_step(self.sampler, chain, k).nominal]
        if self.method == "cast":
            ens = cast_step(self.sampler, chain, k)
            return [ens.states[ens.nominal_mask()]]
        layer_rngs = [self.streams[f"chain{i}"] for i in range(len(self.layers))]
        _, neg = dt_neg_swaps(self.sampler, self.streams["swap"], k, swaps=self.swaps, layer_rngs=layer_rngs)
        return neg

    def step(self) -> None:
        batch = self.data_fn(self.cfg.minibatch_size, self.streams["data"])
        neg = self.negative_phase()
        pos = up_pass(self.layers, batch, self.streams["pos"], self.mean_field_up)
        for p, vp, vm in zip(self.layers, pos, neg):
            apply_update(p, sml_grad(p, vp, vm), self.cfg.learning_rate)
        if self.method == "dt":
            self.sampler.isodd = not self.sampler.isodd
        self.iteration += 1

    def run(self, n: int) -> None:
        for _ in range(n):
            self.step()

    # ---- checkpoints

    def state(self) -> tuple[dict, dict]:
        """``(arrays, meta)`` sufficient to restore this trainer exactly."""
        arrays = {}
        for i, p in enumerate(self.layers):
            arrays[f"layer{i}_W"], arrays[f"layer{i}_c"], arrays[f"layer{i}_b"] = p.W, p.c, p.b
        s = self.sampler
        meta = {
            "method": self.method,
            "sizes": self.sizes,
            "iteration": self.iteration,
            "cfg": asdict(self.cfg),
            "rng": {name: g.bit_generator.state for name, g in self.streams.items()},
        }
        if self.method == "sml":
            arrays["states"] = s.states
        elif self.method == "pt":
            arrays["states"], arrays["betas"] = s.states, s.betas
            meta["isodd"] = s.isodd
        elif self.method == "cast":
            arrays["states"], arrays["betas"] = s.states, s.betas
            arrays["temp_idx"], arrays["log_weights"], arrays["occupancy"] = s.temp_idx, s.log_weights, s.occupancy
            meta.update(x=s.x, gamma0=s.gamma0, t0=s.t0, t=s.t)
        else:
            for i in range(len(self.layers)):
                arrays[f"neg_v{i}"], arrays[f"neg_h{i}"] = s.v[i], s.h[i]
            meta["isodd"] = s.isodd
        if self.stats is not None:
            meta["stats"] = self.stats.to_dict()
        return arrays, meta

    def load_state(self, arrays: dict, meta: dict) -> None:
        if meta["method"] != self.method or list(meta["sizes"]) != self.sizes:
            raise ValueError("checkpoint was written for a different method or architecture")
        for i, p in enumerate(self.layers):
            p.W[...] = arrays[f"layer{i}_W"]
            p.c[...] = arrays[f"layer{i}_c"]
            p.b[...] = arrays[f"layer{i}_b"]
        self.iteration = int(meta["iteration"])
        for name, st in meta["rng"].items():
            self.streams[name].bit_generator.state = st
        s = self.sampler
        if self.method == "sml":
            s.states = np.array(arrays["states"])
        elif self.method == "pt":
            s.states, s.betas, s.isodd = np.array(arrays["states"]), np.array(arrays["betas"]), bool(meta["isodd"])
        elif self.method == "cast":
            s.states, s.betas = np.array(arrays["states"]), np.array(arrays["betas"])
            s.temp_idx = np.array(arrays["temp_idx"])
            s.log_weights = np.array(arrays["log_weights"])
            s.occupancy = np.array(arrays["occupancy"])
            s.x, s.gamma0, s.t0, s.t = int(meta["x"]), float(meta["gamma0"]), float(meta["t0"]), int(meta["t"])
        else:
            s.v = [np.array(arrays[f"neg_v{i}"]) for i in range(len(self.layers))]
            s.h = [np.array(arrays[f"neg_h{i}"]) for i in range(len(self.layers))]
            s.isodd = bool(meta["isodd"])
        if "stats" in meta:
            s.stats = SwapStats.from_dict(meta["stats"])

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(path, *self.state(), extra=extra)

    def load(self, path) -> dict:
        arrays, meta = load_checkpoint(path)
        self.load_state(arrays, meta)
        return meta


def save_checkpoint(path, arrays: dict, meta: dict, extra: dict | None = None) -> None:
    """Write an ``.npz`` container holding ``arrays`` plus a JSON ``meta`` entry.

    ``meta`` always carries ``format`` and ``version`` keys. The file is written
    to a temporary name first and then renamed into place.
    """
    path = Path(path)
    meta = dict(meta, format="rbmtemper-checkpoint", version=CHECKPOINT_VERSION)
    if extra:
        meta["extra"] = extra
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    tmp.replace(path)


class CheckpointVersionError(ValueError):
    pass


def load_checkpoint(path) -> tuple[dict, dict]:
    with np.load(path) as z:
        meta = json.loads(z["__meta__"].tobytes().decode())
        if meta.get("format") != "rbmtemper-checkpoint":
            raise CheckpointVersionError(f"{path}: not a checkpoint file")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"{path}: checkpoint version {meta.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
            )
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    return arrays, meta


# --------------------------------------------------------------------------- greedy


def oscillation_fired(history, window: int, threshold: float) -> bool:
    """True once the last ``window`` evaluations contain more than ``threshold`` decreases."""
    recent = np.asarray(history[-window:], dtype=np.float64)
    return int((np.diff(recent) < 0).sum()) > threshold


def greedy_pretrain(layers, cfg: TrainConfig, pcfg: PretrainConfig, data_fn: DataFn,
                    rng: np.random.Generator, train_size: int = 1000) -> list:
    """Train layers 1..M-1 one at a time with SML, each on samples pushed up
    through the already-frozen layers below it.

    Every ``cfg.eval_interval`` updates the exact likelihood of a fixed training
    sample is recorded; training of a layer stops when the oscillation detector
    fires (or after ``cfg.total_updates``) and the best parameters seen are kept.
    The top layer is returned untouched.
    """
    layers = [p.copy() for p in layers]
    if not pcfg.enabled or len(layers) == 1:
        return layers
    k = cfg.minibatch_size
    train = data_fn(train_size, rng)
    for i in range(len(layers) - 1):
        p = layers[i]
        frozen = layers[:i]

        def lift(v):
            for q in frozen:
                v = sample_h(q, v, rng)
            return v

        train_i = lift(train)
        bank = ChainBank.init(p.n1, k, rng)
        history = [exact_test_ll(p, train_i)]
        best, best_ll = p.copy(), history[0]
        for t in range(1, cfg.total_updates + 1):
            vm = sml_step(p, bank, cfg.gibbs_steps_per_update, rng).states
            vp = lift(data_fn(k, rng))
            apply_update(p, sml_grad(p, vp, vm), cfg.learning_rate)
            if t % cfg.eval_interval == 0:
                ll = exact_test_ll(p, train_i)
                history.append(ll)
                if ll > best_ll:
                    best, best_ll = p.copy(), ll
                if oscillation_fired(history, pcfg.oscillation_window, pcfg.oscillation_threshold):
                    log.info("layer %d: oscillation detected after %d updates", i + 1, t)
                    break
        layers[i] = best
    return layers


def modes_data_fn(spec: ds.ModesSpec) -> DataFn:
    return lambda n, rng: ds.sample(spec, n, rng)

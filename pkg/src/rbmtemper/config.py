"""Experiment configuration read from INI-style files.

Example::

    [experiment]
    method = dt
    layers = 64, 10, 10
    seeds = 0, 1, 2, 3, 4
    learning_rates = 0.001

    [data]
    height = 8
    width = 8
    n_modes = 3

    [train]
    minibatch_size = 5
    total_updates = 50000

The ``[tempering]`` section is only valid for ``pt`` and ``cast`` and
``cast_ratio`` only for ``cast``; stacks of more than one RBM only for ``dt``.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from . import dataset as ds
from .training import METHODS, PretrainConfig, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list:
    return [int(x) for x in text.replace(",", " ").split()]


def _join(xs) -> str:
    return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in xs)


@dataclass
class DataConfig:
    height: int = 8
    width: int = 8
    n_modes: int = 3
    seed: int = 1234
    test_size: int = 5000
    flip_probs: list | None = None
    weights: list | None = None

    def spec(self) -> ds.ModesSpec:
        return ds.make_spec(self.height, self.width, self.n_modes, self.seed, self.flip_probs, self.weights)


@dataclass
class TemperingConfig:
    n_temps: int = 50
    cast_ratio: int | None = None
    gamma0: float = 1.0
    t0: float = 1e4


@dataclass
class TrainSection:
    minibatch_size: int = 5
    gibbs_steps_per_update: int = 1
    total_updates: int = 50_000
    eval_interval: int = 1000
    swap_window: int = 10_000
    mean_field_up: bool = False
    swaps: bool = True


@dataclass
class EvalConfig:
    monte_carlo: bool = False
    mc_samples: int = 100
    timing: bool = False


@dataclass
class ExperimentConfig:
    method: str = "dt"
    layers: list = field(default_factory=lambda: [64, 10, 10])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    learning_rates: list = field(default_factory=lambda: [1e-3])
    out: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    tempering: TemperingConfig | None = None
    train: TrainSection = field(default_factory=TrainSection)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"experiment.method: {self.method!r} is not one of {METHODS}")
        if not self.seeds:
            raise ConfigError("experiment.seeds: at least one seed required")
        if not self.learning_rates or any(not lr >= 0 for lr in self.learning_rates):
            raise ConfigError("experiment.learning_rates: need non-negative values")
        if len(self.layers) < 2 or any(n < 1 for n in self.layers):
            raise ConfigError("experiment.layers: need a visible size and at least one positive hidden size")
        if self.method != "dt" and len(self.layers) != 2:
            raise ConfigError(f"experiment.layers: method {self.method} trains one RBM, got {self.layers}")
        if self.layers[0] != self.data.height * self.data.width:
            raise ConfigError(
                f"experiment.layers: visible size {self.layers[0]} != data.height*data.width "
                f"= {self.data.height * self.data.width}"
            )
        if self.method in ("pt", "cast"):
            if self.tempering is None:
                self.tempering = TemperingConfig(n_temps=50 if self.method == "pt" else 100)
            if self.tempering.n_temps < 1:
                raise ConfigError("tempering.n_temps: must be at least 1")
            if self.method == "cast":
                if self.tempering.cast_ratio is None:
                    self.tempering.cast_ratio = 1
                if self.tempering.cast_ratio < 1:
                    raise ConfigError("tempering.cast_ratio: must be at least 1")
            elif self.tempering.cast_ratio is not None:
                raise ConfigError("tempering.cast_ratio: only valid for method cast")
        elif self.tempering is not None:
            raise ConfigError(f"tempering: section not valid for method {self.method}")
        if self.pretrain.enabled and self.method != "dt":
            raise ConfigError("pretrain.enabled: greedy pretraining applies to method dt only")
        t = self.train
        for name in ("minibatch_size", "gibbs_steps_per_update", "eval_interval", "swap_window"):
            if getattr(t, name) < 1:
                raise ConfigError(f"train.{name}: must be at least 1")
        if t.total_updates < 0:
            raise ConfigError("train.total_updates: must be non-negative")
        if self.pretrain.oscillation_window < 2:
            raise ConfigError("pretrain.oscillation_window: must be at least 2")
        if self.data.test_size < 0:
            raise ConfigError("data.test_size: must be non-negative")
        try:
            self.data.spec()
        except ValueError as exc:
            raise ConfigError(f"data: {exc}") from exc

    def train_config(self, seed: int, lr: float) -> TrainConfig:
        t = self.train
        return TrainConfig(lr, t.minibatch_size, t.gibbs_steps_per_update, t.total_updates, seed, t.eval_interval)


# --------------------------------------------------------------------------- (de)serialisation


def _convert(section: str, key: str, raw: str, typ):
    try:
        if typ in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ == "floats":
            return _floats(raw)
        if typ == "ints":
            return _ints(raw)
        if typ == "optfloats":
            return _floats(raw) if raw.strip() else None
        if typ == "optint":
            return int(raw) if raw.strip() else None
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


_SCHEMA = {
    "data": (DataConfig, {"height": int, "width": int, "n_modes": int, "seed": int, "test_size": int,
                          "flip_probs": "optfloats", "weights": "optfloats"}),
    "tempering": (TemperingConfig, {"n_temps": int, "cast_ratio": "optint", "gamma0": float, "t0": float}),
    "train": (TrainSection, {"minibatch_size": int, "gibbs_steps_per_update": int, "total_updates": int,
                             "eval_interval": int, "swap_window": int, "mean_field_up": bool, "swaps": bool}),
    "pretrain": (PretrainConfig, {"enabled": bool, "oscillation_window": int, "oscillation_threshold": float}),
    "eval": (EvalConfig, {"monte_carlo": bool, "mc_samples": int, "timing": bool}),
}
_EXPERIMENT = {"method": str, "layers": "ints", "seeds": "ints", "learning_rates": "floats", "out": str}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"<file>: {exc}") from exc
    unknown = set(cp.sections()) - set(_SCHEMA) - {"experiment"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    kw = {}
    if cp.has_section("experiment"):
        for key, raw in cp.items("experiment"):
            if key not in _EXPERIMENT:
                raise ConfigError(f"experiment.{key}: unknown key")
            kw[key] = _convert("experiment", key, raw, _EXPERIMENT[key])
    for sec, (cls, types) in _SCHEMA.items():
        if not cp.has_section(sec):
            continue
        sub = {}
        for key, raw in cp.items(sec):
            if key not in types:
                raise ConfigError(f"{sec}.{key}: unknown key")
            sub[key] = _convert(sec, key, raw, types[key])
        try:
            kw[sec] = cls(**sub)
        except ValueError as exc:
            raise ConfigError(f"{sec}: {exc}") from exc
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc}") from exc


def _value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return _join(v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {k: _value(getattr(cfg, k)) for k in _EXPERIMENT}
    for sec in _SCHEMA:
        obj = getattr(cfg, sec)
        if obj is None:
            continue
        cp[sec] = {f.name: _value(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)

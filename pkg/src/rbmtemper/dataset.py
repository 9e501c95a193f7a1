"""Artificial-modes dataset: a mixture of noisy copies of a few random binary
images, with a closed-form density and a compact bit-packed file format.

File layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"BMDS"
    4       1     format version (1)
    5       4     u32 sample count N
    9       2     u16 height H
    11      2     u16 width W
    13      ...   N records of ceil(H*W / 8) bytes; each record is one image in
                  row-major pixel order, packed most-significant-bit first and
                  zero-padded to a whole byte
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

MAGIC = b"BMDS"
VERSION = 1
_HEADER = struct.Struct("<4sBIHH")

DEFAULT_FLIP_PROBS = (0.001, 0.005, 0.02, 0.05, 0.1)
DEFAULT_WEIGHTS = (0.35, 0.3, 0.2, 0.1, 0.05)


class DatasetFormatError(ValueError):
    pass


@dataclass
class ModesSpec:
    base_images: np.ndarray  # (n_modes, height * width) of 0/1
    flip_probs: np.ndarray
    mixture_weights: np.ndarray
    height: int
    width: int
    seed: int = 0

    def __post_init__(self):
        self.base_images = np.asarray(self.base_images, dtype=np.float64).reshape(-1, self.height * self.width)
        self.flip_probs = np.asarray(self.flip_probs, dtype=np.float64).reshape(-1)
        self.mixture_weights = np.asarray(self.mixture_weights, dtype=np.float64).reshape(-1)
        n = self.base_images.shape[0]
        if self.flip_probs.size != n or self.mixture_weights.size != n:
            raise ValueError("need one flip probability and one weight per mode")
        if ((self.flip_probs <= 0) | (self.flip_probs >= 0.5)).any():
            raise ValueError("flip probabilities must lie strictly inside (0, 0.5)")
        if (self.mixture_weights <= 0).any() or abs(self.mixture_weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")

    @property
    def n_modes(self) -> int:
        return self.base_images.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def to_json(self) -> str:
        d = asdict(self)
        d["base_images"] = ["".join(str(int(b)) for b in img) for img in self.base_images]
        d["flip_probs"] = self.flip_probs.tolist()
        d["mixture_weights"] = self.mixture_weights.tolist()
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModesSpec":
        d = json.loads(text)
        d["base_images"] = np.array([[float(ch) for ch in row] for row in d["base_images"]])
        return cls(**d)


def make_spec(height: int = 28, width: int = 28, n_modes: int = 5, seed: int = 0,
              flip_probs=None, weights=None) -> ModesSpec:
    """Draw ``n_modes`` uniform random base images from ``seed``.

    Without overrides the first ``n_modes`` default flip probabilities and
    (renormalised) weights are used, which pair the heaviest mode with the
    smallest flip probability.
    """
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}")
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if flip_probs is None:
        if n_modes > len(DEFAULT_FLIP_PROBS):
            raise ValueError(f"more than {len(DEFAULT_FLIP_PROBS)} modes requires explicit flip_probs")
        flip_probs = DEFAULT_FLIP_PROBS[:n_modes]
    if weights is None:
        if n_modes > len(DEFAULT_WEIGHTS):
            raise ValueError(f"more than {len(DEFAULT_WEIGHTS)} modes requires explicit weights")
        weights = np.asarray(DEFAULT_WEIGHTS[:n_modes])
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    base = (rng.random((n_modes, height * width)) < 0.5).astype(np.float64)
    return ModesSpec(base, flip_probs, weights, height, width, seed)


def sample(spec: ModesSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` images: a mode index per image, then independent pixel flips."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    modes = rng.choice(spec.n_modes, size=n, p=spec.mixture_weights)
    flips = rng.random((n, spec.n_pixels)) < spec.flip_probs[modes][:, None]
    return np.abs(spec.base_images[modes] - flips)


def exact_log_density(spec: ModesSpec, v) -> np.ndarray | float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != spec.n_pixels:
        raise ValueError(f"image has {v.shape[-1]} pixels, expected {spec.n_pixels}")
    d = np.abs(v[..., None, :] - spec.base_images).sum(axis=-1)
    rho = spec.flip_probs
    terms = np.log(spec.mixture_weights) + d * np.log(rho) + (spec.n_pixels - d) * np.log1p(-rho)
    out = logsumexp(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def write_set(path, batch, height: int, width: int) -> None:
    batch = np.asarray(batch).reshape(-1, height * width)
    if batch.size and not np.isin(batch, (0, 1)).all():
        raise ValueError("samples must be binary")
    packed = np.packbits(batch.astype(np.uint8), axis=1, bitorder="big")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, batch.shape[0], height, width))
        fh.write(packed.tobytes())


def read_set(path, height: int | None = None, width: int | None = None):
    """Read a sample file; returns ``(samples, height, width)``.

    ``height``/``width``, when given, must match the header.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file shorter than header")
    magic, version, count, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if (height is not None and height != h) or (width is not None and width != w):
        raise DatasetFormatError(f"{path}: stored images are {h}x{w}, expected {height}x{width}")
    row_bytes = (h * w + 7) // 8
    payload = raw[_HEADER.size:]
    if len(payload) != count * row_bytes:
        raise DatasetFormatError(f"{path}: payload has {len(payload)} bytes, expected {count * row_bytes}")
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(count, row_bytes)
    bits = np.unpackbits(packed, axis=1, count=h * w, bitorder="big") if count else np.zeros((0, h * w), np.uint8)
    return bits.astype(np.float64), h, w

"""Binary-binary restricted Boltzmann machine: energies, conditionals, Gibbs
transitions and exact enumeration oracles for small models.

States are float64 arrays of 0/1 values, either a single vector ``(n,)`` or a
batch ``(K, n)``. Every stochastic routine takes an explicit
``numpy.random.Generator``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

#: default enumeration budget, in states (2**25)
ENUM_CAP_BITS = 25


class DimensionError(ValueError):
    pass


class EnumerationCapError(ValueError):
    pass


@dataclass
class RbmParams:
    """Weights ``W`` (n1 x n2), visible bias ``c`` (n1) and hidden bias ``b`` (n2)."""

    W: np.ndarray
    c: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.c = np.array(self.c, dtype=np.float64).reshape(-1)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        n1, n2 = self.W.shape
        if n1 < 1 or n2 < 1:
            raise DimensionError(f"W must be at least 1x1, got {self.W.shape}")
        if self.c.shape != (n1,):
            raise DimensionError(f"visible bias has length {self.c.size}, expected {n1}")
        if self.b.shape != (n2,):
            raise DimensionError(f"hidden bias has length {self.b.size}, expected {n2}")
        if not (np.isfinite(self.W).all() and np.isfinite(self.c).all() and np.isfinite(self.b).all()):
            raise ValueError("RBM parameters must be finite")

    @property
    def n1(self) -> int:
        return self.W.shape[0]

    @property
    def n2(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, n1: int, n2: int) -> "RbmParams":
        return cls(np.zeros((n1, n2)), np.zeros(n1), np.zeros(n2))

    @classmethod
    def init(cls, n1: int, n2: int, rng: np.random.Generator) -> "RbmParams":
        """Uniform weights in +-1/sqrt(max(n1, n2)), zero biases."""
        a = 1.0 / np.sqrt(max(n1, n2))
        return cls(rng.uniform(-a, a, size=(n1, n2)), np.zeros(n1), np.zeros(n2))

    @classmethod
    def random(cls, n1: int, n2: int, rng: np.random.Generator, scale: float = 1.0) -> "RbmParams":
        """All parameters uniform in [-scale, scale]; used by oracles and tests."""
        return cls(
            rng.uniform(-scale, scale, size=(n1, n2)),
            rng.uniform(-scale, scale, size=n1),
            rng.uniform(-scale, scale, size=n2),
        )

    def copy(self) -> "RbmParams":
        return RbmParams(self.W.copy(), self.c.copy(), self.b.copy())

    def scaled(self, beta: float) -> "RbmParams":
        """The tempered model exp(-beta * E(v, h)) as an RBM in its own right."""
        return RbmParams(beta * self.W, beta * self.c, beta * self.b)

    def transposed(self) -> "RbmParams":
        """Swap the roles of visible and hidden layers."""
        return RbmParams(self.W.T.copy(), self.b.copy(), self.c.copy())


def _check(x: np.ndarray, n: int, side: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != n:
        got = x.shape[-1] if x.ndim else 0
        raise DimensionError(f"{side} state has length {got}, expected {n}")
    return x


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def energy(params: RbmParams, v, h):
    """E(v, h) = -v'Wh - v'c - h'b (batched over leading axes)."""
    v = _check(v, params.n1, "visible")
    h = _check(h, params.n2, "hidden")
    return -np.einsum("...i,ij,...j->...", v, params.W, h) - v @ params.c - h @ params.b


def free_energy_v(params: RbmParams, v, beta=1.0):
    """Visible free energy F(v), hiddens summed out.

    ``beta`` evaluates the tempered model with all parameters scaled by beta; an
    array of per-row inverse temperatures is accepted for batches.
    """
    v = _check(v, params.n1, "visible")
    beta = np.asarray(beta, dtype=np.float64)
    bcol = beta[..., None] if beta.ndim else beta
    return -beta * (v @ params.c) - softplus(bcol * (params.b + v @ params.W)).sum(axis=-1)


def free_energy_h(params: RbmParams, h, beta=1.0):
    """Hidden free energy, visibles summed out."""
    h = _check(h, params.n2, "hidden")
    beta = np.asarray(beta, dtype=np.float64)
    bcol = beta[..., None] if beta.ndim else beta
    return -beta * (h @ params.b) - softplus(bcol * (params.c + h @ params.W.T)).sum(axis=-1)


def cond_h_given_v(params: RbmParams, v, beta=1.0):
    v = _check(v, params.n1, "visible")
    return expit(beta * (params.b + v @ params.W))


def cond_v_given_h(params: RbmParams, h, beta=1.0):
    h = _check(h, params.n2, "hidden")
    return expit(beta * (params.c + h @ params.W.T))


def sample_h(params: RbmParams, v, rng: np.random.Generator, beta=1.0):
    p = cond_h_given_v(params, v, beta)
    return (rng.random(p.shape) < p).astype(np.float64)


def sample_v(params: RbmParams, h, rng: np.random.Generator, beta=1.0):
    p = cond_v_given_h(params, h, beta)
    return (rng.random(p.shape) < p).astype(np.float64)


def gibbs_step(params: RbmParams, v, rng: np.random.Generator, beta=1.0):
    """One block-Gibbs sweep v -> h -> v'.

    Draw order is fixed: all hidden uniforms (row-major over the batch), then all
    visible uniforms. ``beta`` may be a per-row column for mixed temperatures.
    Returns ``(v_new, h)``.
    """
    h = sample_h(params, v, rng, beta)
    return sample_v(params, h, rng, beta), h


def all_states(n: int) -> np.ndarray:
    """Every binary vector of length n, shape (2**n, n), first bit most significant."""
    if n > 30:
        raise EnumerationCapError(f"refusing to enumerate 2**{n} states")
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)), dtype=np.float64).reshape(2**n, n)


def state_index(x) -> np.ndarray:
    """Integer code of binary rows, consistent with the ordering of all_states."""
    x = np.asarray(x)
    weights = 1 << np.arange(x.shape[-1] - 1, -1, -1, dtype=np.int64)
    return (x.astype(np.int64) * weights).sum(axis=-1)


def exact_log_z(params: RbmParams, cap_bits: int = ENUM_CAP_BITS, beta: float = 1.0) -> float:
    """log Z by summing out the smaller layer analytically and enumerating the other."""
    if min(params.n1, params.n2) > cap_bits:
        raise EnumerationCapError(
            f"both layers exceed the enumeration cap of 2**{cap_bits} states "
            f"(n1={params.n1}, n2={params.n2})"
        )
    if params.n2 <= params.n1:
        return float(logsumexp(-free_energy_h(params, all_states(params.n2), beta)))
    return float(logsumexp(-free_energy_v(params, all_states(params.n1), beta)))


def exact_log_prob_v(params: RbmParams, v, cap_bits: int = ENUM_CAP_BITS, log_z: float | None = None):
    if log_z is None:
        log_z = exact_log_z(params, cap_bits)
    return -free_energy_v(params, v) - log_z


def exact_log_prob_h(params: RbmParams, h, cap_bits: int = ENUM_CAP_BITS, log_z: float | None = None):
    if log_z is None:
        log_z = exact_log_z(params, cap_bits)
    return -free_energy_h(params, h) - log_z


def exact_marginal_v(params: RbmParams, cap_bits: int = 20, beta: float = 1.0):
    """Full visible marginal as ``(states, probs)``, states ordered as all_states."""
    if params.n1 > cap_bits:
        raise EnumerationCapError(f"visible layer of {params.n1} units exceeds cap of {cap_bits}")
    states = all_states(params.n1)
    logp = -free_energy_v(params, states, beta)
    return states, np.exp(logp - logsumexp(logp))


def exact_marginal_h(params: RbmParams, cap_bits: int = 20, beta: float = 1.0):
    if params.n2 > cap_bits:
        raise EnumerationCapError(f"hidden layer of {params.n2} units exceeds cap of {cap_bits}")
    states = all_states(params.n2)
    logp = -free_energy_h(params, states, beta)
    return states, np.exp(logp - logsumexp(logp))

"""Negative-phase samplers: persistent Gibbs chains, parallel tempering,
coupled adaptive simulated tempering and deep-tempering cross-model swaps.

Ensembles are mutated in place by their step functions, which also return them
for convenience. Each ensemble is driven by a single ``numpy.random.Generator``
whose draw order is documented per step function, so runs are reproducible and
degenerate configurations (one temperature, one layer) consume exactly the same
draws as plain persistent Gibbs sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rbm import DimensionError, RbmParams, free_energy_h, free_energy_v, gibbs_step, sample_h, sample_v


class SwapStats:
    """Per-pair (proposed, accepted) counters, cumulative and windowed.

    A window closes every ``window`` calls to :meth:`tick`; closed windows are
    kept in ``history`` as ``(proposed, accepted)`` array pairs.
    """

    def __init__(self, n_pairs: int, window: int = 10_000):
        self.n_pairs = n_pairs
        self.window = window
        self.proposed = np.zeros(n_pairs, dtype=np.int64)
        self.accepted = np.zeros(n_pairs, dtype=np.int64)
        self.win_proposed = np.zeros(n_pairs, dtype=np.int64)
        self.win_accepted = np.zeros(n_pairs, dtype=np.int64)
        self.ticks = 0
        self.history: list[tuple[np.ndarray, np.ndarray]] = []

    def record(self, pair: int, proposed: int, accepted: int) -> None:
        self.proposed[pair] += proposed
        self.accepted[pair] += accepted
        self.win_proposed[pair] += proposed
        self.win_accepted[pair] += accepted

    def tick(self) -> None:
        self.ticks += 1
        if self.ticks % self.window == 0:
            self.history.append((self.win_proposed.copy(), self.win_accepted.copy()))
            self.win_proposed[:] = 0
            self.win_accepted[:] = 0

    def window_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Counts of the open window, or of the last closed one if the open window is empty."""
        if self.win_proposed.sum() == 0 and self.history:
            return self.history[-1]
        return self.win_proposed, self.win_accepted

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "window": self.window,
            "ticks": self.ticks,
            "proposed": self.proposed.tolist(),
            "accepted": self.accepted.tolist(),
            "win_proposed": self.win_proposed.tolist(),
            "win_accepted": self.win_accepted.tolist(),
            "history": [[p.tolist(), a.tolist()] for p, a in self.history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwapStats":
        s = cls(d["n_pairs"], d["window"])
        s.ticks = d["ticks"]
        for name in ("proposed", "accepted", "win_proposed", "win_accepted"):
            getattr(s, name)[:] = d[name]
        s.history = [(np.array(p, dtype=np.int64), np.array(a, dtype=np.int64)) for p, a in d["history"]]
        return s


def random_states(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.random(shape) < 0.5).astype(np.float64)


def _check_states(states: np.ndarray, n: int, what: str) -> None:
    if states.shape[-1] != n:
        raise DimensionError(f"{what} states have length {states.shape[-1]}, expected {n}")


# --------------------------------------------------------------------------- SML


@dataclass
class ChainBank:
    """K persistent visible configurations, one row per chain."""

    states: np.ndarray

    @classmethod
    def init(cls, n1: int, k: int, rng: np.random.Generator) -> "ChainBank":
        return cls(random_states(rng, (k, n1)))


def sml_step(params: RbmParams, bank: ChainBank, k: int, rng: np.random.Generator) -> ChainBank:
    """Advance every chain of the bank by ``k`` block-Gibbs sweeps."""
    _check_states(bank.states, params.n1, "chain")
    v = bank.states
    for _ in range(k):
        v, _h = gibbs_step(params, v, rng)
    bank.states = v
    return bank


# --------------------------------------------------------------------------- PT


def linear_betas(m: int) -> np.ndarray:
    """M inverse temperatures spaced uniformly from 1 down to 0 (just [1] for M=1)."""
    if m < 1:
        raise ValueError("need at least one temperature")
    return np.linspace(1.0, 0.0, m) if m > 1 else np.ones(1)


def check_betas(betas) -> np.ndarray:
    betas = np.asarray(betas, dtype=np.float64).reshape(-1)
    if betas.size == 0 or betas[0] != 1.0:
        raise ValueError("the first inverse temperature must be exactly 1")
    if (betas < 0).any() or (betas > 1).any():
        raise ValueError("inverse temperatures must lie in [0, 1]")
    if (np.diff(betas) > 0).any():
        raise ValueError("inverse temperatures must be non-increasing")
    return betas


def pt_swap_log_ratio(params: RbmParams, beta_lo, beta_hi, v_lo, v_hi):
    """Log acceptance ratio for exchanging states between two temperatures.

    ``v_lo`` is the state at ``beta_lo`` (the colder/earlier chain). Each tempered
    model is the RBM with every parameter scaled by its beta, so its free energy
    is ``free_energy_v(params, v, beta)``. Batched over rows.
    """
    f = free_energy_v
    return (f(params, v_lo, beta_lo) - f(params, v_lo, beta_hi)) + (
        f(params, v_hi, beta_hi) - f(params, v_hi, beta_lo)
    )


@dataclass
class TemperedEnsemble:
    params: RbmParams
    betas: np.ndarray
    states: np.ndarray  # (M, K, n1)
    isodd: bool = True
    stats: SwapStats = None

    def __post_init__(self):
        self.betas = check_betas(self.betas)
        if self.states.shape[0] != self.betas.size:
            raise ValueError("one chain bank per temperature required")
        _check_states(self.states, self.params.n1, "tempered")
        if self.stats is None:
            self.stats = SwapStats(self.betas.size - 1)

    @classmethod
    def init(cls, params: RbmParams, betas, k: int, rng: np.random.Generator, window: int = 10_000):
        betas = check_betas(betas)
        states = random_states(rng, (betas.size * k, params.n1)).reshape(betas.size, k, params.n1)
        return cls(params, betas, states, True, SwapStats(betas.size - 1, window))

    @property
    def m(self) -> int:
        return self.betas.size

    @property
    def nominal(self) -> np.ndarray:
        return self.states[0]


def _parity_pairs(m: int, isodd: bool) -> range:
    # 0-based lower index of each pair: (0,1),(2,3)... when odd, (1,2),(3,4)... otherwise
    return range(0 if isodd else 1, m - 1, 2)


def pt_step(ens: TemperedEnsemble, rng: np.random.Generator, k: int = 1) -> TemperedEnsemble:
    """One PT iteration: Gibbs at every temperature, then a parity sweep of swaps.

    Draws: ``k`` Gibbs sweeps over the stacked (temperature-major) chains, then for
    each selected pair in ascending order one uniform per chain. The parity flag
    flips on every call.
    """
    m, kk, n1 = ens.states.shape
    v = ens.states.reshape(m * kk, n1)
    beta_col = np.repeat(ens.betas, kk)[:, None]
    for _ in range(k):
        v, _h = gibbs_step(ens.params, v, rng, beta_col)
    states = v.reshape(m, kk, n1)
    for i in _parity_pairs(m, ens.isodd):
        log_r = pt_swap_log_ratio(ens.params, ens.betas[i], ens.betas[i + 1], states[i], states[i + 1])
        u = rng.random(kk)
        acc = np.log(u) < log_r
        if acc.any():
            lo = states[i, acc].copy()
            states[i, acc] = states[i + 1, acc]
            states[i + 1, acc] = lo
        ens.stats.record(i, kk, int(acc.sum()))
    ens.states = states
    ens.isodd = not ens.isodd
    ens.stats.tick()
    return ens


# --------------------------------------------------------------------------- DT


def dt_swap_log_ratio(lower: RbmParams, upper: RbmParams, h_lower, v_upper):
    """Log acceptance ratio for exchanging the lower model's hidden state with the
    upper model's visible state. Partition functions cancel. Batched over rows."""
    if lower.n2 != upper.n1:
        raise DimensionError(f"adjacent layers disagree: lower has {lower.n2} hiddens, upper has {upper.n1} visibles")
    # grouped so that identical states cancel exactly
    return (free_energy_h(lower, h_lower) - free_energy_h(lower, v_upper)) + (
        free_energy_v(upper, v_upper) - free_energy_v(upper, h_lower)
    )


@dataclass
class DeepEnsemble:
    """A stack of RBMs with one persistent (v, h) chain bank per layer."""

    layers: list
    v: list
    h: list
    isodd: bool = True
    stats: SwapStats = None

    def __post_init__(self):
        check_adjacency(self.layers)
        if not (len(self.v) == len(self.h) == len(self.layers)):
            raise ValueError("one (v, h) bank per layer required")
        for i, (p, v, h) in enumerate(zip(self.layers, self.v, self.h)):
            _check_states(v, p.n1, f"layer {i + 1} visible")
            _check_states(h, p.n2, f"layer {i + 1} hidden")
        if self.stats is None:
            self.stats = SwapStats(len(self.layers) - 1)

    @classmethod
    def init(cls, layers, k: int, rng: np.random.Generator, window: int = 10_000):
        check_adjacency(layers)
        v, h = [], []
        for p in layers:
            v.append(random_states(rng, (k, p.n1)))
            h.append(random_states(rng, (k, p.n2)))
        return cls(list(layers), v, h, True, SwapStats(len(layers) - 1, window))

    @property
    def m(self) -> int:
        return len(self.layers)


def check_adjacency(layers) -> None:
    if not layers:
        raise ValueError("need at least one layer")
    for i in range(len(layers) - 1):
        if layers[i].n2 != layers[i + 1].n1:
            raise DimensionError(
                f"layer {i + 1} has {layers[i].n2} hidden units but layer {i + 2} has {layers[i + 1].n1} visible units"
            )


def dt_neg_swaps(ens: DeepEnsemble, rng: np.random.Generator, k: int = 1, swaps: bool = True,
                 layer_rngs=None):
    """Cross-model swap sweep followed by Gibbs updates at every layer.

    For each pair selected by ``ens.isodd`` (ascending), one uniform per chain
    decides the exchange of the lower hidden bank with the upper visible bank,
    after which the lower visibles are resampled given their (possibly new)
    hiddens. Then every layer in order takes ``k`` sweeps h ~ p(h|v), v ~ p(v|h).
    The caller owns the parity flag.

    Acceptance uniforms come from ``rng``; conditional samples for layer i come
    from ``layer_rngs[i]`` (default: ``rng`` as well). ``swaps=False`` skips the
    swap sweep entirely, leaving independent persistent chains per layer.

    Returns ``(ens, [v_1, ..., v_M])``.
    """
    layers = ens.layers
    lr = list(layer_rngs) if layer_rngs is not None else [rng] * ens.m
    if len(lr) != ens.m:
        raise ValueError("need one generator per layer")
    if swaps:
        for i in _parity_pairs(ens.m, ens.isodd):
            lower, upper = layers[i], layers[i + 1]
            h_lo, v_up = ens.h[i], ens.v[i + 1]
            log_r = dt_swap_log_ratio(lower, upper, h_lo, v_up)
            acc = np.log(rng.random(h_lo.shape[0])) < log_r
            if acc.any():
                tmp = h_lo[acc].copy()
                h_lo[acc] = v_up[acc]
                v_up[acc] = tmp
            ens.stats.record(i, h_lo.shape[0], int(acc.sum()))
            ens.v[i] = sample_v(lower, h_lo, lr[i])
    for i, p in enumerate(layers):
        v = ens.v[i]
        for _ in range(k):
            h = sample_h(p, v, lr[i])
            v = sample_v(p, h, lr[i])
        ens.v[i], ens.h[i] = v, h
    ens.stats.tick()
    return ens, list(ens.v)


# --------------------------------------------------------------------------- CAST


@dataclass
class CastEnsemble:
    """Simulated-tempering chains with shared adaptive log-weights, each coupled to
    ``x`` chains at the nominal temperature.

    ``states`` stacks the ``groups * x`` coupled chains (group-major) followed by
    the ``groups`` tempered chains. ``temp_idx`` holds each tempered chain's
    0-based temperature index.
    """

    params: RbmParams
    betas: np.ndarray
    x: int
    states: np.ndarray
    temp_idx: np.ndarray
    log_weights: np.ndarray
    gamma0: float = 1.0
    t0: float = 1e4
    t: int = 0
    stats: SwapStats = None
    occupancy: np.ndarray = field(default=None)
    rao_blackwell: bool = True

    def __post_init__(self):
        self.betas = check_betas(self.betas)
        if self.x < 1:
            raise ValueError("coupling ratio X must be at least 1")
        _check_states(self.states, self.params.n1, "CAST")
        if self.states.shape[0] != self.groups * (self.x + 1):
            raise ValueError("states must hold groups * (x + 1) chains")
        if ((self.temp_idx < 0) | (self.temp_idx >= self.m)).any():
            raise ValueError("temperature index out of range")
        if self.stats is None:
            self.stats = SwapStats(self.m - 1)
        if self.occupancy is None:
            self.occupancy = np.zeros(self.m, dtype=np.int64)

    @classmethod
    def init(cls, params: RbmParams, betas, x: int, groups: int, rng: np.random.Generator,
             gamma0: float = 1.0, t0: float = 1e4, window: int = 10_000):
        betas = check_betas(betas)
        states = random_states(rng, (groups * (x + 1), params.n1))
        return cls(params, betas, x, states, np.zeros(groups, dtype=np.int64), np.zeros(betas.size),
                   gamma0, t0, 0, SwapStats(betas.size - 1, window))

    @property
    def m(self) -> int:
        return self.betas.size

    @property
    def groups(self) -> int:
        return self.temp_idx.size

    @property
    def row_betas(self) -> np.ndarray:
        return np.concatenate([np.ones(self.groups * self.x), self.betas[self.temp_idx]])

    def nominal_mask(self) -> np.ndarray:
        """Rows currently at the nominal temperature."""
        return np.concatenate([np.ones(self.groups * self.x, dtype=bool), self.temp_idx == 0])

    def gamma(self) -> float:
        return self.gamma0 / (1.0 + self.t / self.t0)


def cast_step(ens: CastEnsemble, rng: np.random.Generator, k: int = 1) -> CastEnsemble:
    """One CAST iteration.

    Draws: ``k`` Gibbs sweeps over all stacked chains (coupled rows at beta=1,
    tempered rows at their current beta); then, when M > 1, one direction
    uniform per tempered chain, one acceptance uniform per tempered chain and one
    coupled-chain index per tempered chain. With M = 1 nothing beyond the Gibbs
    sweeps is drawn, which makes the kernel identical to persistent Gibbs on all
    ``groups * (x + 1)`` chains.
    """
    v = ens.states
    for _ in range(k):
        v, _h = gibbs_step(ens.params, v, rng, ens.row_betas[:, None])
    ens.states = v
    if ens.m > 1:
        g = ens.groups
        st_rows = np.arange(g) + g * ens.x
        direction = np.where(rng.random(g) < 0.5, -1, 1)
        u = rng.random(g)
        pick = rng.integers(0, ens.x, size=g)
        cur = ens.temp_idx
        prop = cur + direction
        valid = (prop >= 0) & (prop < ens.m)
        prop_c = np.clip(prop, 0, ens.m - 1)
        vs = v[st_rows]
        log_a = (
            free_energy_v(ens.params, vs, ens.betas[cur])
            - free_energy_v(ens.params, vs, ens.betas[prop_c])
            + ens.log_weights[prop_c]
            - ens.log_weights[cur]
        )
        acc = valid & (np.log(u) < log_a)
        for j in range(g):
            if valid[j]:
                ens.stats.record(min(cur[j], prop[j]), 1, int(acc[j]))
        ens.temp_idx = np.where(acc, prop_c, cur)
        gamma = ens.gamma()
        if ens.rao_blackwell:
            vs = ens.states[st_rows]
            fe = free_energy_v(ens.params, np.repeat(vs, ens.m, axis=0), np.tile(ens.betas, g)).reshape(g, ens.m)
            logit = ens.log_weights - fe
            post = np.exp(logit - logit.max(axis=1, keepdims=True))
            post /= post.sum(axis=1, keepdims=True)
            ens.log_weights -= gamma * post.sum(axis=0)
        else:
            for j in range(g):
                ens.log_weights[ens.temp_idx[j]] -= gamma
        ens.log_weights -= ens.log_weights[0]
        # tempered chains at the nominal temperature trade places with a coupled chain
        for j in np.flatnonzero(ens.temp_idx == 0):
            r_c, r_s = j * ens.x + pick[j], st_rows[j]
            tmp = ens.states[r_c].copy()
            ens.states[r_c] = ens.states[r_s]
            ens.states[r_s] = tmp
    np.add.at(ens.occupancy, ens.temp_idx, 1)
    ens.t += 1
    ens.stats.tick()
    return ens

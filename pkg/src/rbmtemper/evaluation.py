"""Exact test-set likelihoods, the variational DBN lower bound, swap-rate
reports and the metrics CSV."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .rbm import (
    ENUM_CAP_BITS,
    EnumerationCapError,
    RbmParams,
    all_states,
    exact_log_z,
    free_energy_v,
    sample_h,
    softplus,
)

#: largest latent layer summed out exactly inside the DBN bound
BOUND_ENUM_BITS = 20
_CHUNK_ENTRIES = 1 << 22


def exact_test_ll(params: RbmParams, test, cap_bits: int = ENUM_CAP_BITS) -> float:
    """Mean exact log-likelihood (nats per sample) of ``test`` under the RBM."""
    test = np.atleast_2d(np.asarray(test, dtype=np.float64))
    log_z = exact_log_z(params, cap_bits)
    return float(np.mean(-free_energy_v(params, test)) - log_z)


def _log_bernoulli(a):
    """(log sigmoid(a), log sigmoid(-a))."""
    return -softplus(-a), -softplus(a)


def _entropy(a) -> np.ndarray:
    log_q, log_1mq = _log_bernoulli(a)
    q = np.exp(log_q)
    return -(q * log_q + (1.0 - q) * log_1mq).sum(axis=-1)


def _log_p_v_given_h(p: RbmParams, x, hs):
    """log p(x | h) for every row of ``x`` against every row of ``hs``: (len(x), len(hs))."""
    a = p.c + hs @ p.W.T
    return x @ a.T - softplus(a).sum(axis=1)


def _layer_bound(layers, idx, x, mc, n_samples, rng, top_log_z):
    p = layers[idx]
    if idx == len(layers) - 1:
        return -free_energy_v(p, x) - top_log_z
    a = p.b + x @ p.W
    entropy = _entropy(a)
    if not mc:
        if p.n2 > BOUND_ENUM_BITS:
            raise EnumerationCapError(
                f"layer {idx + 1} has {p.n2} hidden units; exact bound is limited to {BOUND_ENUM_BITS} "
                "(enable Monte Carlo)"
            )
        hs = all_states(p.n2)
        upper = _layer_bound(layers, idx + 1, hs, mc, n_samples, rng, top_log_z)
        out = np.empty(x.shape[0])
        step = max(1, _CHUNK_ENTRIES // hs.shape[0])
        for s in range(0, x.shape[0], step):
            xs, a_s = x[s:s + step], a[s:s + step]
            log_q, log_1mq = _log_bernoulli(a_s)
            q_h = np.exp(log_q @ hs.T + log_1mq @ (1.0 - hs).T)
            out[s:s + step] = (q_h * (_log_p_v_given_h(p, xs, hs) + upper)).sum(axis=1)
        return out + entropy
    q = np.exp(_log_bernoulli(a)[0])
    n = x.shape[0]
    hs = (rng.random((n_samples, n, p.n2)) < q).astype(np.float64).reshape(n_samples * n, p.n2)
    xr = np.tile(x, (n_samples, 1))
    a_h = p.c + hs @ p.W.T
    log_cond = (xr * a_h).sum(axis=1) - softplus(a_h).sum(axis=1)
    upper = _layer_bound(layers, idx + 1, hs, mc, n_samples, rng, top_log_z)
    return (log_cond + upper).reshape(n_samples, n).mean(axis=0) + entropy


def dbn_lower_bound_terms(layers, test, *, monte_carlo: bool = False, n_samples: int = 100,
                          rng: np.random.Generator | None = None, cap_bits: int = ENUM_CAP_BITS) -> np.ndarray:
    """Per-datum variational lower bound on log p(v) of the DBN formed by ``layers``.

    The recognition distribution at each level is the factorial upward
    conditional of that level's RBM; the top RBM's visible marginal is the prior
    and its partition function is computed exactly. Deeper levels recurse,
    replacing the log prior by its own bound. With ``monte_carlo`` the sums over
    latent states are replaced by ``n_samples`` posterior draws per datum.
    """
    layers = list(layers)
    test = np.atleast_2d(np.asarray(test, dtype=np.float64))
    if len(layers) == 1:
        return -free_energy_v(layers[0], test) - exact_log_z(layers[0], cap_bits)
    if monte_carlo and rng is None:
        rng = np.random.default_rng(0)
    top_log_z = exact_log_z(layers[-1], cap_bits)
    return _layer_bound(layers, 0, test, monte_carlo, n_samples, rng, top_log_z)


def dbn_lower_bound(layers, test, **kw) -> float:
    """Mean bound in nats per sample; equals :func:`exact_test_ll` for one layer."""
    layers = list(layers)
    if len(layers) == 1:
        return exact_test_ll(layers[0], test, kw.get("cap_bits", ENUM_CAP_BITS))
    return float(np.mean(dbn_lower_bound_terms(layers, test, **kw)))


def exact_dbn_log_prob(layers, v) -> np.ndarray:
    """Brute-force log p(v) of a DBN by enumerating every latent layer jointly."""
    layers = list(layers)
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    top = layers[-1]
    if len(layers) == 1:
        return -free_energy_v(top, v) - exact_log_z(top)
    # log prior over the top RBM's visible layer, then push down through the conditionals
    xs = all_states(top.n1)
    log_prior = -free_energy_v(top, xs) - exact_log_z(top)
    for p in reversed(layers[1:-1]):
        below = all_states(p.n1)
        log_prior = logsumexp(_log_p_v_given_h(p, below, xs) + log_prior, axis=1)
        xs = below
    return logsumexp(_log_p_v_given_h(layers[0], v, xs) + log_prior, axis=1)


def up_pass_deterministic(layers, data, seed: int):
    """Per-layer inputs obtained by sampling upward with a fixed seed."""
    rng = np.random.default_rng(seed)
    out = [np.asarray(data, dtype=np.float64)]
    for p in layers[:-1]:
        out.append(sample_h(p, out[-1], rng))
    return out


# --------------------------------------------------------------------------- swaps


def swap_report(stats, cumulative: bool = False) -> list:
    """Per-pair acceptance rates; ``None`` where nothing was proposed."""
    if cumulative:
        prop, acc = stats.proposed, stats.accepted
    else:
        prop, acc = stats.window_counts()
    return [float(a) / float(p) if p else None for p, a in zip(prop, acc)]


def window_rate_series(stats) -> list:
    """Per-window rates of every closed window followed by the open one."""
    windows = list(stats.history) + [(stats.win_proposed, stats.win_accepted)]
    return [[float(a) / float(p) if p else None for p, a in zip(ps, as_)] for ps, as_ in windows]


# --------------------------------------------------------------------------- metrics


@dataclass
class MetricsRow:
    iteration: int
    test_ll: list  # per layer, nats per sample
    dbn_bound: float
    swap_rates: list  # per adjacent pair, None when absent
    learning_rate: float
    seconds: float = 0.0

    def __post_init__(self):
        for r in self.swap_rates:
            if r is not None and not 0.0 <= r <= 1.0:
                raise ValueError(f"swap rate {r} outside [0, 1]")


def metrics_header(n_pairs: int) -> list:
    return (
        ["iteration", "layer", "test_ll_nats", "dbn_bound_nats"]
        + [f"swap_rate_pair_{i + 1}" for i in range(n_pairs)]
        + ["learning_rate", "seconds"]
    )


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def metrics_records(rows, n_pairs: int) -> list:
    """Flatten rows into CSV records, one per (iteration, layer)."""
    out = []
    for row in rows:
        if len(row.swap_rates) != n_pairs:
            raise ValueError(f"row has {len(row.swap_rates)} swap rates, header expects {n_pairs}")
        for layer, ll in enumerate(row.test_ll, start=1):
            out.append(
                [str(row.iteration), str(layer), _fmt(ll), _fmt(row.dbn_bound)]
                + [_fmt(r) for r in row.swap_rates]
                + [_fmt(row.learning_rate), _fmt(row.seconds)]
            )
    return out


def emit_metrics(rows, path, n_pairs: int, append: bool = False) -> None:
    """Write (or append) rows to a CSV file with a fixed header.

    Appending to an existing file checks its header first; a missing or empty
    file gets a header.
    """
    path = Path(path)
    header = metrics_header(n_pairs)
    try:
        exists = append and path.exists() and path.stat().st_size > 0
        if exists:
            with open(path, newline="") as fh:
                first = next(csv.reader(fh), None)
            if first != header:
                raise ValueError(f"{path}: existing header {first} does not match {header}")
        with open(path, "a" if exists else "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if not exists:
                writer.writerow(header)
            writer.writerows(metrics_records(rows, n_pairs))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics(path) -> list:
    """Parse a metrics CSV back into dicts with floats (None for empty cells)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for rec in reader:
            out.append({k: (None if v == "" else float(v)) for k, v in rec.items()})
        return out


def truncate_metrics(path, last_iteration: int) -> None:
    """Drop records beyond ``last_iteration`` (used when resuming)."""
    path = Path(path)
    if not path.exists():
        return
    with open(path, newline="") as fh:
        recs = list(csv.reader(fh))
    if not recs:
        return
    keep = [recs[0]] + [r for r in recs[1:] if int(r[0]) <= last_iteration]
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(keep)

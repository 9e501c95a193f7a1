"""SVG curves of metrics CSVs: mean and +-1 standard deviation across seeds."""
from __future__ import annotations

import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .evaluation import read_metrics

PLOT_METRICS = ("test_ll_nats", "dbn_bound_nats")


class SchemaError(ValueError):
    pass


def series_label(path) -> str:
    """Group label for a CSV: its run directory name with the seed suffix removed."""
    path = Path(path)
    name = path.parent.name if path.name == "metrics.csv" else path.stem
    return re.sub(r"_seed-?\d+$", "", name) or name


def load_series(paths, metric: str, layer: int = 1) -> dict:
    """``{label: [(iterations, values), ...]}`` with one entry per CSV."""
    if not paths:
        raise SchemaError("no CSV files given")
    out = defaultdict(list)
    for path in paths:
        recs = read_metrics(path)
        if not recs:
            raise SchemaError(f"{path}: no data rows")
        if metric not in recs[0] or "iteration" not in recs[0] or "layer" not in recs[0]:
            raise SchemaError(f"{path}: missing column {metric!r}")
        rows = [r for r in recs if int(r["layer"]) == layer and r[metric] is not None]
        it = np.array([r["iteration"] for r in rows])
        val = np.array([r[metric] for r in rows])
        out[series_label(path)].append((it, val))
    return dict(out)


def band(runs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-iteration mean and population standard deviation over runs, on the
    iterations common to every run."""
    common = sorted(set.intersection(*(set(it.tolist()) for it, _ in runs)))
    its = np.array(common, dtype=np.float64)
    stack = np.array([[dict(zip(it.tolist(), v.tolist()))[i] for i in common] for it, v in runs])
    return its, stack.mean(axis=0), stack.std(axis=0)


def plot_metric(paths, metric: str, out_path, layer: int = 1) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "rbmtemper"
    series = load_series(paths, metric, layer)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(series):
        its, mean, sd = band(series[label])
        if its.size == 1:
            ax.plot(its, mean, "o", label=label)
        else:
            (line,) = ax.plot(its, mean, label=label)
            ax.fill_between(its, mean - sd, mean + sd, alpha=0.25, color=line.get_color(), linewidth=0)
    ax.set_xlabel("parameter updates")
    ax.set_ylabel(f"{metric} (layer {layer})" if metric == "test_ll_nats" else metric)
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


def plot_all(paths, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [plot_metric(paths, m, out_dir / f"{m}.svg") for m in PLOT_METRICS]

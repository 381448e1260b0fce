"""Clustering metrics plus report and curve output."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    nmi: float
    ri: float
    n_samples: int
    k_true: int
    k_pred: int


def hard_assign(p) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest cluster index."""
    return np.asarray(p).argmax(axis=1)


def _check_pair(labels, preds, min_len):
    labels, preds = np.asarray(labels).ravel(), np.asarray(preds).ravel()
    if labels.shape != preds.shape:
        raise ValueError(f"length mismatch: {labels.size} vs {preds.size}")
    if labels.size < min_len:
        raise ValueError(f"need at least {min_len} samples")
    return labels, preds


def contingency(labels, preds) -> np.ndarray:
    _, li = np.unique(labels, return_inverse=True)
    _, pi = np.unique(preds, return_inverse=True)
    table = np.zeros((li.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (li, pi), 1)
    return table


def _entropy(counts, n):
    q = counts[counts > 0] / n
    return float(-(q * np.log(q)).sum())


def nmi(labels, preds) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    labels, preds = _check_pair(labels, preds, 1)
    table = contingency(labels, preds)
    n = table.sum()
    h_true = _entropy(table.sum(axis=1), n)
    h_pred = _entropy(table.sum(axis=0), n)
    if h_true == 0.0 or h_pred == 0.0:
        return 1.0 if h_true == h_pred else 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return float(np.clip(mi / np.sqrt(h_true * h_pred), 0.0, 1.0))


def rand_index(labels, preds) -> float:
    """Fraction of sample pairs on which the two partitions agree."""
    labels, preds = _check_pair(labels, preds, 2)
    table = contingency(labels, preds)
    n = labels.size

    def pairs(x):
        return float((x * (x - 1) // 2).sum())

    total = n * (n - 1) / 2
    together_both = pairs(table)
    together_true = pairs(table.sum(axis=1))
    together_pred = pairs(table.sum(axis=0))
    apart_both = total - together_true - together_pred + together_both
    return (together_both + apart_both) / total


def evaluate(labels, preds) -> MetricsReport:
    labels, preds = _check_pair(labels, preds, 2)
    return MetricsReport(nmi(labels, preds), rand_index(labels, preds), labels.size,
                         len(np.unique(labels)), len(np.unique(preds)))


def export_embeddings(z, labels, preds, path) -> Path:
    """One CSV row per sample: embedding columns, true label, predicted label."""
    z = np.asarray(z)
    labels = np.full(len(z), -1) if labels is None else np.asarray(labels)
    preds = np.asarray(preds)
    if not (len(z) == len(labels) == len(preds)):
        raise ValueError("embedding rows and label vectors differ in length")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"z{d}" for d in range(z.shape[1])] + ["label", "pred"])
        for row, y, c in zip(z, labels, preds):
            w.writerow([f"{v:.6f}" for v in row] + [int(y), int(c)])
    return path


METRICS_HEADER = ["dataset", "seed", "nmi", "ri", "runtime_s"]


def append_metrics_row(path, dataset: str, seed: int, report: MetricsReport, runtime_s: float):
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(METRICS_HEADER)
        w.writerow([dataset, seed, f"{report.nmi:.6f}", f"{report.ri:.6f}", f"{runtime_s:.2f}"])


def plot_history(history, out_dir, prefix: str = "") -> list[Path]:
    """Training-history curves as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    rows = history.records if hasattr(history, "records") else history
    epochs = [r.epoch for r in rows]
    panels = {
        "loss": [("contrast_loss", "contrastive"), ("cluster_loss", "cluster"),
                 ("total_loss", "total")],
        "metrics": [("nmi", "NMI"), ("ri", "RI")],
        "aware_count": [("aware_count", "cluster-aware samples")],
    }
    paths = []
    for name, series in panels.items():
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for key, label in series:
            ax.plot(epochs, [getattr(r, key) for r in rows], label=label)
        ax.set_xlabel("epoch")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{prefix}{name}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths

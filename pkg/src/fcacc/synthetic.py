"""Generators for stand-ins of the two synthetic UCR datasets used in the
reproduction harness, plus a tiny toy set for smoke tests.

Both archive datasets are themselves simulated, so when the real files are
not available the same generating processes give a comparable benchmark.
The outputs are *not* the archive files; numbers obtained on them are not
directly comparable to published tables.

Run ``python -m fcacc.synthetic DATA_ROOT`` to write UCR-format folders.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .dataio import Dataset, write_ucr_tsv


def synthetic_control(n_per_class: int = 100, length: int = 60, seed: int = 0) -> Dataset:
    """Six control-chart patterns (Alcock & Manolopoulos process).

    Classes: normal, cyclic, increasing trend, decreasing trend, upward
    shift, downward shift. Base level 30, noise amplitude drawn in [-3, 3]
    scaled by 2.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(1, length + 1, dtype=np.float64)
    rows, labels = [], []
    for cls in range(6):
        for _ in range(n_per_class):
            y = 30.0 + 2.0 * rng.uniform(-3.0, 3.0, size=length)
            if cls == 1:
                a, period = rng.uniform(10, 15), rng.uniform(10, 15)
                y += a * np.sin(2 * np.pi * t / period)
            elif cls in (2, 3):
                g = rng.uniform(0.2, 0.5)
                y += g * t if cls == 2 else -g * t
            elif cls in (4, 5):
                x = rng.uniform(7.5, 20.0)
                t3 = rng.uniform(length / 3, 2 * length / 3)
                step = x * (t >= t3)
                y += step if cls == 4 else -step
            rows.append(y)
            labels.append(cls)
    return Dataset(np.array(rows), np.array(labels), name="SyntheticControl", n_classes=6,
                   classes=tuple(str(c + 1) for c in range(6)))


def shapelet_sim(n: int = 200, length: int = 500, shapelet_length: int = 30,
                 seed: int = 0) -> Dataset:
    """Gaussian noise with one class-specific shapelet at a random position.

    Class 0 carries a sine period, class 1 a square pulse train; classes
    alternate so the set is balanced.
    """
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, shapelet_length)
    shapes = [
        3.0 * np.sin(2 * np.pi * u),
        3.0 * np.where((u * 2).astype(int) % 2 == 0, 1.0, -1.0),
    ]
    rows, labels = [], []
    for i in range(n):
        cls = i % 2
        y = rng.standard_normal(length)
        start = rng.integers(0, length - shapelet_length + 1)
        y[start:start + shapelet_length] += shapes[cls]
        rows.append(y)
        labels.append(cls)
    return Dataset(np.array(rows), np.array(labels), name="ShapeletSim", n_classes=2,
                   classes=("0", "1"))


def toy_dataset(n: int = 20, length: int = 32, seed: int = 0) -> Dataset:
    """Two easy classes (sine vs. ramp) for fast end-to-end checks."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    rows = [np.sin(2 * np.pi * 2 * t) if i % 2 == 0 else 2 * t - 1 for i in range(n)]
    values = np.array(rows) + 0.1 * rng.standard_normal((n, length))
    labels = np.arange(n) % 2
    return Dataset(values, labels, name="Toy", n_classes=2, classes=("0", "1"))


# archive split sizes (train, test)
SPLITS = {"SyntheticControl": (300, 300), "ShapeletSim": (20, 180)}
GENERATORS = {"SyntheticControl": synthetic_control, "ShapeletSim": shapelet_sim}


def write_archive(d: Dataset, root, n_train: int, seed: int = 0) -> Path:
    """Write ``d`` as ``root/name/name_{TRAIN,TEST}.tsv`` with a shuffled split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(d.n_series)
    tokens = [d.classes[i] if d.classes else str(i) for i in d.labels]
    folder = Path(root) / d.name
    for part, idx in (("TRAIN", order[:n_train]), ("TEST", order[n_train:])):
        write_ucr_tsv(folder / f"{d.name}_{part}.tsv", d.values[idx], [tokens[i] for i in idx])
    return folder


def write_standins(root, names=("SyntheticControl", "ShapeletSim"), seed: int = 0) -> list[Path]:
    return [write_archive(GENERATORS[n](seed=seed), root, SPLITS[n][0], seed=seed) for n in names]


def main(argv=None):
    ap = argparse.ArgumentParser(description="write stand-in UCR folders")
    ap.add_argument("data_root")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    for folder in write_standins(args.data_root, seed=args.seed):
        print(folder)


if __name__ == "__main__":
    main()

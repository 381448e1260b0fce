"""Loading and preprocessing of UCR-2018 format univariate datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or missing dataset files."""


@dataclass(frozen=True)
class Dataset:
    """N univariate series of common length T, with optional labels.

    ``classes`` holds the original label tokens in the order they were
    remapped to ``0..n_classes-1``; it lets two splits be merged without
    scrambling the label alphabet.
    """

    values: np.ndarray
    labels: np.ndarray | None
    name: str = "dataset"
    n_classes: int = 0
    classes: tuple = field(default=())

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D (N x T), got shape {self.values.shape}")
        if self.values.shape[1] < 2:
            raise DataError("series length T must be at least 2")
        if self.labels is not None and len(self.labels) != len(self.values):
            raise DataError("labels and values disagree on N")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


def _remap(tokens):
    """Map raw label tokens onto contiguous integers, sorted by numeric value."""
    classes = tuple(sorted(set(tokens), key=_label_sort_key))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[t] for t in tokens], dtype=np.int64), classes


def _label_sort_key(token):
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


def _normalize_token(token: str) -> str:
    # "1" and "1.0" name the same class in the archive
    try:
        value = float(token)
    except ValueError:
        return token
    return str(int(value)) if value.is_integer() else repr(value)


def read_ucr_tsv(path) -> tuple[np.ndarray, list[str]]:
    """Parse one UCR-2018 TSV file into (values, raw label tokens)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    rows, tokens = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split("\t")
            tokens.append(_normalize_token(cells[0].strip()))
            try:
                row = [float(c) for c in cells[1:]]
            except ValueError as exc:
                raise DataError(f"{path.name}:{lineno}: non-numeric cell ({exc})") from None
            if any(np.isnan(row)):
                raise DataError(f"{path.name}:{lineno}: missing values (NaN) are not supported")
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{path.name}:{lineno}: ragged rows ({len(row)} values, expected {len(rows[0])})"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path.name}: no rows")
    return np.asarray(rows, dtype=np.float64), tokens


def write_ucr_tsv(path, values: np.ndarray, labels) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for label, row in zip(labels, values):
            fh.write("\t".join([str(label)] + [repr(float(v)) for v in row]) + "\n")


def _build(values, tokens, name) -> Dataset:
    labels, classes = _remap(tokens)
    if len(classes) < 2:
        raise DataError(f"{name}: fewer than 2 distinct labels")
    return Dataset(values, labels, name=name, n_classes=len(classes), classes=classes)


def load_ucr_dataset(data_root, name: str, split: str = "merged") -> Dataset:
    """Load ``data_root/name/name_{TRAIN,TEST}.tsv``.

    ``split`` is ``"merged"`` (train rows then test rows), ``"train"`` or
    ``"test"``. Labels are remapped to ``0..K-1`` over the loaded rows.
    """
    folder = Path(data_root) / name
    if split not in ("merged", "train", "test"):
        raise ValueError(f"unknown split {split!r}")
    parts = []
    for part in ("TRAIN", "TEST"):
        if split != "merged" and part.lower() != split:
            continue
        parts.append(read_ucr_tsv(folder / f"{name}_{part}.tsv"))
    if len(parts) == 2 and parts[0][0].shape[1] != parts[1][0].shape[1]:
        raise DataError(f"{name}: TRAIN and TEST lengths differ")
    values = np.concatenate([p[0] for p in parts], axis=0)
    tokens = [t for p in parts for t in p[1]]
    return _build(values, tokens, name)


def znormalize(d: Dataset, eps: float = 1e-8) -> Dataset:
    """Per-row z-normalization with population std; flat rows become zeros."""
    x = d.values
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    flat = std < eps
    out = np.where(flat, 0.0, (x - mean) / np.where(flat, 1.0, std))
    return Dataset(out, d.labels, name=d.name, n_classes=d.n_classes, classes=d.classes)


def merge_splits(train: Dataset, test: Dataset) -> Dataset:
    """Concatenate two splits (train rows first) under one label alphabet."""
    if train.length != test.length:
        raise DataError(f"cannot merge: T={train.length} vs T={test.length}")
    values = np.concatenate([train.values, test.values], axis=0)
    if train.labels is None or test.labels is None:
        return Dataset(values, None, name=train.name)
    if train.classes and test.classes:
        tokens = [train.classes[i] for i in train.labels] + [test.classes[i] for i in test.labels]
    else:
        tokens = [int(i) for i in np.concatenate([train.labels, test.labels])]
    return _build(values, tokens, train.name)

"""Datasets: the 2D toy problems, CSV ingestion and seeded mini-batching."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from memlab.seeding import stream

GENERATORS = ("TwoGaussians", "TwoMoons")


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int = 2
    split: str = "train"
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise DataError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.shape != (len(self.inputs),):
            raise DataError("labels length does not match number of inputs")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if self.ids is None:
            self.ids = np.arange(len(self.labels))
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError("sample ids must be unique")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass
class ToySpec:
    generator: str = "TwoGaussians"
    n_per_class: int = 500
    noise_std: float = 0.45
    seed: int = 0
    # class centres for TwoGaussians
    means: list = field(default_factory=lambda: [[-1.0, 0.0], [1.0, 0.0]])

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise DataError(f"generator: expected one of {GENERATORS}, got {self.generator!r}")
        if self.n_per_class < 1:
            raise DataError("n_per_class: must be >= 1")
        if self.noise_std < 0:
            raise DataError("noise_std: must be >= 0")


def generate_toy(spec: ToySpec, split: str = "train", rng=None) -> Dataset:
    """Balanced 2-class points in the plane; class 0 first, then class 1."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n = spec.n_per_class
    if spec.generator == "TwoGaussians":
        means = np.asarray(spec.means, dtype=np.float64)
        parts = [means[c] + spec.noise_std * rng.standard_normal((n, 2)) for c in (0, 1)]
    else:
        t0 = rng.uniform(0.0, math.pi, n)
        t1 = rng.uniform(0.0, math.pi, n)
        upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
        lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
        parts = [upper + spec.noise_std * rng.standard_normal((n, 2)),
                 lower + spec.noise_std * rng.standard_normal((n, 2))]
    x = np.concatenate(parts)
    y = np.repeat([0, 1], n)
    return Dataset(x, y, n_classes=2, split=split)


@dataclass
class CsvSchema:
    label_column: str = "label"
    n_classes: int | None = None
    # declared (lo, hi) range of every feature; rescaled to [0, 1] when rescale is on
    feature_range: tuple | None = None
    rescale: bool = True


def load_csv(path, schema: CsvSchema | None = None, split: str = "train") -> Dataset:
    """Read a comma-separated file with a header row and a label column.

    Every non-label column is a numeric feature. Row numbers in error messages
    are file line numbers (the header is line 1).
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        if schema.label_column not in header:
            raise DataError(f"{path}: no {schema.label_column!r} column in header")
        li = header.index(schema.label_column)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                values = [float(c) for j, c in enumerate(row) if j != li]
                label_f = float(row[li])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: row {lineno}: non-finite feature")
            if not math.isfinite(label_f) or label_f != int(label_f):
                raise DataError(f"{path}: row {lineno}: label {row[li]!r} is not an integer")
            label = int(label_f)
            if label < 0 or (schema.n_classes is not None and label >= schema.n_classes):
                raise DataError(f"{path}: row {lineno}: label {label} out of range")
            if schema.feature_range is not None:
                lo, hi = schema.feature_range
                if any(v < lo or v > hi for v in values):
                    raise DataError(f"{path}: row {lineno}: feature outside declared range [{lo}, {hi}]")
            feats.append(values)
            labels.append(label)
    if not labels:
        raise DataError(f"{path}: no data rows")
    x = np.asarray(feats, dtype=np.float64)
    if schema.feature_range is not None and schema.rescale:
        lo, hi = schema.feature_range
        x = (x - lo) / (hi - lo)
    n_classes = schema.n_classes if schema.n_classes is not None else max(2, max(labels) + 1)
    return Dataset(x, np.asarray(labels), n_classes=n_classes, split=split)


def batch_iter(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Yield ``(ids, inputs, labels)`` for one epoch in a (seed, epoch)-seeded order.

    The last batch may be smaller than ``batch_size``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = stream(seed, "shuffle", epoch).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield dataset.ids[idx], dataset.inputs[idx], dataset.labels[idx]

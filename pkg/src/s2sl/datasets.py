"""Feature-vector datasets: CSV ingestion, z-score scaling, synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit import RngStream

STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError(f"features must be an N x d matrix with d >= 1, got {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain NaN or Inf")
        names = list(self.class_names) or [str(c) for c in range(int(y.max(initial=-1)) + 1)]
        if y.size and (y.min() < 0 or y.max() >= len(names)):
            raise DataError(f"labels must lie in [0, {len(names)})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", names)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names, self.name)


def load_csv(path, d: int | None = None, header: bool = False, name: str | None = None) -> Dataset:
    """Read rows of ``d`` numeric features followed by a label token.

    Labels get ids in order of first appearance. When ``d`` is omitted it is
    taken from the first data row.
    """
    path = Path(path)
    features, labels, names = [], [], {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if d is None:
                d = len(row) - 1
                if d < 1:
                    raise DataError(f"{path}:{lineno}: need at least one feature and a label")
            if len(row) != d + 1:
                raise DataError(f"{path}:{lineno}: expected {d + 1} fields, found {len(row)}")
            values = []
            for col, cell in enumerate(row[:d], start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: column {col} is not numeric: {cell.strip()!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {col} is not finite")
                values.append(v)
            token = row[d].strip()
            labels.append(names.setdefault(token, len(names)))
            features.append(values)
    if not features:
        raise DataError(f"{path}: no rows")
    return Dataset(
        np.array(features, dtype=np.float64),
        np.array(labels, dtype=np.int64),
        list(names),
        name or path.stem,
    )


def write_csv(dataset: Dataset, fh, header: bool = False) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    if header:
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
    for row, label in zip(dataset.features, dataset.labels):
        writer.writerow([repr(float(v)) for v in row] + [dataset.class_names[label]])


def save_csv(dataset: Dataset, path, header: bool = False) -> None:
    """Write ``dataset`` in the format :func:`load_csv` reads (reals via ``repr``)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        write_csv(dataset, fh, header)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        return Dataset(
            (dataset.features - self.mean) / self.std,
            dataset.labels,
            dataset.class_names,
            dataset.name,
        )


def fit_normalizer(train: Dataset) -> Normalizer:
    if len(train) == 0:
        raise DataError("cannot fit a normalizer on an empty set")
    mean = train.features.mean(axis=0)
    std = np.maximum(train.features.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def apply_normalizer(nz: Normalizer, dataset: Dataset) -> Dataset:
    return nz.apply(dataset)


def gen_gaussian_two_class(
    d: int = 13,
    n1: int = 60,
    n2: int = 60,
    separation: float = 1.0,
    rng: RngStream | None = None,
    seed: int = 0,
) -> Dataset:
    """Two unit-variance Gaussian blobs centred at -sep/2 and +sep/2 on every axis.

    Rows are class 0 first, then class 1.
    """
    if min(d, n1, n2) < 1:
        raise ValueError("d, n1 and n2 must all be >= 1")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = rng or RngStream(seed)
    half = separation / 2.0
    x0 = rng.gaussian(-half, 1.0, (n1, d))
    x1 = rng.gaussian(half, 1.0, (n2, d))
    labels = np.r_[np.zeros(n1, dtype=np.int64), np.ones(n2, dtype=np.int64)]
    return Dataset(
        np.vstack([x0, x1]),
        labels,
        ["class0", "class1"],
        f"gauss-d{d}-{n1}x{n2}-sep{separation:g}",
    )

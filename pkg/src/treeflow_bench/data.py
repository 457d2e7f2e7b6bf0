"""Dataset ingestion, synthetic blobs, scaling and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import stream


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    class_count: int = 0
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise DataError("dataset needs at least one sample")
        if y.shape != (X.shape[0],):
            raise DataError(f"labels shape {y.shape} does not match {X.shape[0]} samples")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        k = self.class_count or int(y.max()) + 1
        if y.min() < 0 or y.max() >= k:
            raise DataError(f"label ids must lie in [0, {k})")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "class_count", k)
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names,
                       self.class_count, self.label_names)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.labels, self.feature_names, self.class_count, self.label_names)

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.features, y, self.feature_names, self.class_count, self.label_names)


@dataclass(frozen=True)
class ScalerStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise DataError("scaler std entries must be strictly positive")

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}


@dataclass(frozen=True)
class BlobSpec:
    centers: Sequence[Sequence[float]]
    std_dev: float | Sequence[float]
    samples: int
    seed: int = 0
    name: str = field(default="blobs", compare=False)


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r} at row {row}, column {col!r}")
    return value


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")
    return header, rows


def load_csv(path, label_column: str = "label", class_count: int | None = None) -> Dataset:
    """Read a labelled CSV; labels are factorized in first-appearance order."""
    header, rows = _read_rows(path)
    if label_column not in header:
        raise DataError(f"{path}: unknown label column {label_column!r} (header: {header})")
    if not rows:
        raise DataError(f"{path}: no data rows")
    li = header.index(label_column)
    feat_cols = [j for j in range(len(header)) if j != li]
    X = np.empty((len(rows), len(feat_cols)))
    codes: dict[str, int] = {}
    y = np.empty(len(rows), dtype=np.int64)
    for i, r in enumerate(rows):
        for k, j in enumerate(feat_cols):
            X[i, k] = _parse_float(r[j], i + 2, header[j])
        y[i] = codes.setdefault(r[li].strip(), len(codes))
    k = len(codes) if class_count is None else int(class_count)
    if k < len(codes):
        raise DataError(f"{path}: found {len(codes)} labels but class_count={k}")
    return Dataset(X, y, tuple(header[j] for j in feat_cols), k, tuple(codes))


def load_regression_csv(path, target_column: str = "y") -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    header, rows = _read_rows(path)
    if target_column not in header:
        raise DataError(f"{path}: unknown target column {target_column!r} (header: {header})")
    if not rows:
        raise DataError(f"{path}: no data rows")
    ti = header.index(target_column)
    values = np.array([[_parse_float(c, i + 2, header[j]) for j, c in enumerate(r)]
                       for i, r in enumerate(rows)])
    keep = [j for j in range(len(header)) if j != ti]
    return values[:, keep], values[:, ti], tuple(header[j] for j in keep)


def write_csv(path, X: np.ndarray, names: Sequence[str], extra: dict[str, Sequence] | None = None) -> None:
    """Write a numeric matrix with optional trailing columns. ``repr`` floats round-trip exactly."""
    extra = extra or {}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + list(extra))
        cols = list(extra.values())
        for i, row in enumerate(np.asarray(X, dtype=np.float64)):
            w.writerow([repr(float(v)) for v in row] + [c[i] for c in cols])


def write_dataset_csv(path, ds: Dataset, label_column: str = "label") -> None:
    labels = [ds.label_names[c] if ds.label_names else str(c) for c in ds.labels]
    write_csv(path, ds.features, ds.feature_names, {label_column: labels})


def make_blobs(spec: BlobSpec) -> Dataset:
    centers = np.atleast_2d(np.asarray(spec.centers, dtype=np.float64))
    if centers.size == 0 or len(spec.centers) == 0:
        raise DataError("make_blobs needs at least one center")
    k, d = centers.shape
    std = np.broadcast_to(np.asarray(spec.std_dev, dtype=np.float64), (k,))
    if np.any(std < 0):
        raise DataError("std_dev must be non-negative")
    if spec.samples < 1:
        raise DataError("samples must be positive")
    counts = np.full(k, spec.samples // k)
    counts[: spec.samples % k] += 1
    rng = stream(spec.seed, "make_blobs")
    X = np.concatenate([centers[c] + std[c] * rng.standard_normal((counts[c], d)) for c in range(k)])
    y = np.repeat(np.arange(k), counts)
    return Dataset(X, y, tuple(f"x{j}" for j in range(d)), k)


def _grid(n: int) -> list[tuple[float, float]]:
    ticks = np.linspace(-2.0, 2.0, n)
    return [(float(a), float(b)) for a in ticks for b in ticks]


def builtin_blobs(name: str, seed: int = 0, samples: int = 3200) -> BlobSpec:
    key = name.lower().replace("-", "_")
    if key == "4_corners":
        return BlobSpec([(-2, -2), (-2, 2), (2, -2), (2, 2)], 0.3, samples, seed, "4_corners")
    if key == "9_grid":
        return BlobSpec(_grid(3), 0.25, samples, seed, "9_grid")
    if key == "8_gaussians":
        ang = 2 * np.pi * np.arange(8) / 8
        return BlobSpec([(2 * math.cos(a), 2 * math.sin(a)) for a in ang], 0.15, samples, seed, "8_gaussians")
    raise DataError(f"unknown builtin dataset {name!r}")


BUILTIN_BLOBS = ("4_corners", "9_grid", "8_gaussians")


def standardize(ds: Dataset, stats: ScalerStats | None = None) -> tuple[Dataset, ScalerStats]:
    """Z-score features; fit population statistics when ``stats`` is None."""
    if stats is None:
        mean = ds.features.mean(axis=0)
        std = ds.features.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        stats = ScalerStats(mean, std)
    elif len(stats.mean) != ds.n_features or len(stats.std) != ds.n_features:
        raise DataError(f"scaler has {len(stats.mean)} features, dataset has {ds.n_features}")
    return ds.with_features((ds.features - stats.mean) / stats.std), stats


def split_indices(labels: np.ndarray, test_fraction: float, seed: int,
                  stratified: bool = False) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    n = len(labels)
    n_test = int(math.floor(n * test_fraction + 0.5))
    rng = stream(seed, "train_test_split")
    if not stratified:
        perm = rng.permutation(n)
        test, train = perm[:n_test], perm[n_test:]
    else:
        classes, counts = np.unique(labels, return_counts=True)
        if np.any(counts < 2):
            bad = classes[counts < 2][0]
            raise DataError(f"class {bad} has fewer than 2 samples; cannot stratify")
        exact = counts * test_fraction
        alloc = np.floor(exact).astype(int)
        # largest remainder, ties to lowest class id
        order = sorted(range(len(classes)), key=lambda c: (-(exact[c] - alloc[c]), c))
        for c in order[: max(0, n_test - alloc.sum())]:
            alloc[c] += 1
        test_parts, train_parts = [], []
        for c, k in zip(classes, alloc):
            members = rng.permutation(np.flatnonzero(labels == c))
            test_parts.append(members[:k])
            train_parts.append(members[k:])
        test = rng.permutation(np.concatenate(test_parts))
        train = rng.permutation(np.concatenate(train_parts))
    if len(test) == 0 or len(train) == 0:
        raise DataError(f"split of {n} samples at fraction {test_fraction} leaves an empty side")
    return train, test


def train_test_split(ds: Dataset, test_fraction: float, seed: int,
                     stratified: bool = False) -> tuple[Dataset, Dataset]:
    train, test = split_indices(ds.labels, test_fraction, seed, stratified)
    return ds.subset(train), ds.subset(test)

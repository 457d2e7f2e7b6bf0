"""Synthetic-data utility/fidelity metrics and a classification report."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Callable

import numpy as np

from .data import Dataset
from .tree.forest import fit_forest

TSTR_TREES = 100
TSTR_DEPTH = 15
TSTR_SEED = 0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    tstr_accuracy: float
    wasserstein: float
    correlation_error: float
    runtime_seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassReport:
    accuracy: float
    macro_f1: float
    cohen_kappa: float

    def to_dict(self) -> dict:
        return asdict(self)


def tstr(synthetic: Dataset, real_test: Dataset, seed: int = TSTR_SEED) -> float:
    """Fit Forest(100, depth 15) on synthetic rows, score accuracy on real rows."""
    if synthetic.n_features != real_test.n_features:
        raise MetricError(f"schema mismatch: {synthetic.n_features} vs {real_test.n_features} features")
    missing = sorted(set(np.unique(real_test.labels)) - set(np.unique(synthetic.labels)))
    if missing:
        warnings.warn(f"classes {missing} absent from synthetic data; their test rows cannot be right",
                      RuntimeWarning, stacklevel=2)
    k = max(synthetic.class_count, real_test.class_count)
    train = Dataset(synthetic.features, synthetic.labels, synthetic.feature_names, k)
    forest = fit_forest(train, TSTR_TREES, TSTR_DEPTH, seed)
    return float(np.mean(forest.predict(real_test.features) == real_test.labels))


def _as_matrix(a) -> np.ndarray:
    X = a.features if isinstance(a, Dataset) else np.asarray(a, dtype=np.float64)
    return X[:, None] if X.ndim == 1 else X


def wasserstein_1d(u, v) -> float:
    """W1 between two empirical distributions via the quantile-function integral."""
    u = np.sort(np.asarray(u, dtype=np.float64))
    v = np.sort(np.asarray(v, dtype=np.float64))
    if u.size == 0 or v.size == 0:
        raise MetricError("empty sample")
    if u.size == v.size:
        return float(np.mean(np.abs(u - v)))
    n, m = u.size, v.size
    # breakpoints of both quantile step functions on (0, 1]
    cuts = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], cuts]))
    mids = cuts - widths / 2
    qu = u[np.minimum((mids * n).astype(np.int64), n - 1)]
    qv = v[np.minimum((mids * m).astype(np.int64), m - 1)]
    return float(np.sum(widths * np.abs(qu - qv)))


def wasserstein_1d_mean(a, b) -> float:
    A, B = _as_matrix(a), _as_matrix(b)
    if A.shape[1] != B.shape[1]:
        raise MetricError(f"feature count mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise MetricError("empty input")
    return float(np.mean([wasserstein_1d(A[:, j], B[:, j]) for j in range(A.shape[1])]))


def correlation_matrix(X) -> np.ndarray:
    """Pearson correlations; zero-variance columns get an identity row/column."""
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise MetricError("correlation needs at least two rows")
    dev = X - X.mean(axis=0)
    ss = np.sqrt(np.sum(dev * dev, axis=0))
    live = ss > 0
    C = np.eye(X.shape[1])
    if live.any():
        Z = dev[:, live] / ss[live]
        C[np.ix_(live, live)] = np.clip(Z.T @ Z, -1.0, 1.0)
        np.fill_diagonal(C, 1.0)
    return C


def correlation_error(a, b) -> float:
    A, B = _as_matrix(a), _as_matrix(b)
    if A.shape[1] != B.shape[1]:
        raise MetricError(f"feature count mismatch: {A.shape[1]} vs {B.shape[1]}")
    return float(np.linalg.norm(correlation_matrix(A) - correlation_matrix(B)))


def classification_report(y_true, y_pred, class_count: int | None = None) -> ClassReport:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise MetricError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise MetricError("need at least one prediction")
    k = class_count or int(max(t.max(), p.max())) + 1
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    n = t.size
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    f1 = np.divide(2 * tp, denom, out=np.zeros(k), where=denom > 0)
    po = tp.sum() / n
    pe = float(np.sum(cm.sum(axis=0) * cm.sum(axis=1))) / (n * n)
    if pe == 1.0:
        kappa = 1.0 if po == 1.0 else 0.0
    else:
        kappa = (po - pe) / (1.0 - pe)
    return ClassReport(float(po), float(f1.mean()), float(kappa))


def timed(run: Callable[[], Any]) -> tuple[Any, float]:
    start = time.perf_counter()
    result = run()
    return result, time.perf_counter() - start

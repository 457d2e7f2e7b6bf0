"""Squared-error gradient boosting with net-partition tracing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cart import RegressionTree, TreeError, fit_regression_tree


@dataclass
class BoostedEnsemble:
    f0: float
    eta: float
    stages: list[RegressionTree] = field(default_factory=list)
    dgtsm_trace: list[float] = field(default_factory=list)
    partition_trace: list[int] = field(default_factory=list)

    def predict(self, X, stages: int | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        F = np.full(X.shape[0], self.f0)
        for h in self.stages[:stages]:
            F = F + self.eta * h.predict(X)
        return F

    def trace_rows(self) -> list[tuple[int, float, int]]:
        return [(m + 1, d, p) for m, (d, p) in enumerate(zip(self.dgtsm_trace, self.partition_trace))]


def fit_boosted(X, y, stages: int, eta: float = 0.1, weak_depth: int = 2,
                min_samples_split: int = 2) -> BoostedEnsemble:
    """Fit F_m = F_{m-1} + eta * h_m with h_m regressed on the residuals y - F_{m-1}.

    ``dgtsm_trace[m]`` is the mean squared training residual after stage m+1 and
    ``partition_trace[m]`` counts the distinct joint leaf assignments of the
    first m+1 weak learners over the training rows. Fitting stops early once
    every residual is zero.
    """
    if stages < 1:
        raise TreeError("stages must be >= 1")
    if not 0.0 < eta <= 1.0:
        raise TreeError("eta must lie in (0, 1]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and np.ndim(y) == 1 and len(y) > 1:
        X = X.T
    y = np.asarray(y, dtype=np.float64)
    if len(y) != X.shape[0] or len(y) == 0:
        raise TreeError("X and y must have the same non-zero length")
    model = BoostedEnsemble(float(y.mean()), float(eta))
    F = np.full(len(y), model.f0)
    cells = np.zeros(len(y), dtype=np.int64)
    tol = 1e-12 * (1.0 + float(np.max(np.abs(y))))
    for _ in range(stages):
        r = y - F
        if np.max(np.abs(r)) <= tol:
            break
        h = fit_regression_tree(X, r, weak_depth, min_samples_split)
        F = F + eta * h.predict(X)
        model.stages.append(h)
        model.dgtsm_trace.append(float(np.mean((y - F) ** 2)))
        pairs = cells * h.node_count + h.apply(X)
        _, cells = np.unique(pairs, return_inverse=True)
        cells = cells.astype(np.int64)
        model.partition_trace.append(int(cells.max()) + 1)
    return model

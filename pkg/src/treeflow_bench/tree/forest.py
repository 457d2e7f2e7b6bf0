"""Bagged random forests used as oracles and TSTR classifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..rng import stream
from .cart import DecisionTree, TreeError, fit_tree


@dataclass(frozen=True)
class Forest:
    trees: tuple[DecisionTree, ...]
    seed: int

    @property
    def class_count(self) -> int:
        return self.trees[0].class_count

    def votes(self, X) -> np.ndarray:
        """Vote counts, shape [n, class_count]."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], self.class_count), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for t in self.trees:
            np.add.at(out, (rows, t.predict(X)), 1)
        return out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)  # ties -> lowest class id


def fit_forest(ds: Dataset, n_trees: int = 100, max_depth: int = 15, seed: int = 0, *,
               bootstrap: bool = True, max_features: int | str | None = "sqrt") -> Forest:
    """Bootstrap-aggregated Gini trees with ceil(sqrt(d)) features tried per split."""
    if n_trees < 1:
        raise TreeError("n_trees must be >= 1")
    if ds.n_samples < 1:
        raise TreeError("cannot fit a forest on an empty dataset")
    d = ds.n_features
    m = math.ceil(math.sqrt(d)) if max_features == "sqrt" else (max_features or d)
    rng = stream(seed, "forest")
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, ds.n_samples, ds.n_samples) if bootstrap else np.arange(ds.n_samples)
        trees.append(fit_tree(ds, max_depth, 2, max_features=m, rng=rng, sample_index=idx))
    return Forest(tuple(trees), seed)

"""Pure numpy versions of the tree kernels.

Same contracts and bitwise-identical results as the compiled module: Gini
scores are compared as exact rationals of integer class counts, regression
scores come from sequential cumulative sums, and ties keep the first
candidate (lowest feature, then lowest threshold).
"""

from __future__ import annotations

import numpy as np


def _midpoint(a: float, b: float) -> float:
    m = 0.5 * (a + b)
    return a if m == b else m


def _exact_argmax(num, den, valid):
    """Index of the largest num/den among valid entries, first on exact ties."""
    ratio = np.where(valid, num / den, -np.inf)
    top = ratio.max()
    near = np.flatnonzero(ratio >= top - abs(top) * 1e-12)
    best = int(near[0])
    for k in near[1:]:
        if int(num[k]) * int(den[best]) > int(num[best]) * int(den[k]):
            best = int(k)
    return best


def best_split_gini(X, y, idx, features, n_classes):
    """Best (feature, threshold, score) maximizing sum_c(nL_c^2)/nL + sum_c(nR_c^2)/nR.

    Scores are compared as exact rationals, so equal-impurity candidates fall
    back to the lowest feature and threshold. Returns feature -1 when no
    feature has two distinct values.
    """
    y = np.asarray(y)
    n = len(idx)
    if n < 2:
        return (-1, 0.0, -np.inf)
    best = None
    classes = np.arange(n_classes)
    for f in features:
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cum = np.cumsum(y[idx[order]][:, None] == classes, axis=0).astype(np.int64)
        left = cum[:-1]
        right = cum[-1] - left
        nl = np.arange(1, n, dtype=np.int64)
        nr = n - nl
        num = (left * left).sum(axis=1) * nr + (right * right).sum(axis=1) * nl
        den = nl * nr
        k = _exact_argmax(num, den, valid)
        cand = (int(num[k]), int(den[k]), int(f), _midpoint(xs[k], xs[k + 1]))
        if best is None or cand[0] * best[1] > best[0] * cand[1]:
            best = cand
    if best is None:
        return (-1, 0.0, -np.inf)
    return (best[2], best[3], float(best[0]) / float(best[1]))


def best_split_mse(X, r, idx, features):
    """Best split maximizing SL^2/nL + SR^2/nR over residual sums."""
    best = (-1, 0.0, -np.inf)
    n = len(idx)
    if n < 2:
        return best
    for f in features:
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cs = np.cumsum(r[idx[order]])
        sl = cs[:-1]
        sr = cs[-1] - sl
        nl = np.arange(1, n, dtype=np.float64)
        score = sl * sl / nl + sr * sr / (n - nl)
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))
        if score[k] > best[2]:
            best = (int(f), _midpoint(xs[k], xs[k + 1]), float(score[k]))
    return best


def descend_paths(X, feature, threshold, left, right, depth):
    """Node id occupied at each depth 0..depth for every row (leaf id repeats once reached)."""
    n = X.shape[0]
    out = np.zeros((n, depth + 1), dtype=np.int64)
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for d in range(1, depth + 1):
        f = feature[node]
        internal = f >= 0
        go_left = np.zeros(n, dtype=bool)
        go_left[internal] = X[rows[internal], f[internal]] <= threshold[node[internal]]
        node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        out[:, d] = node
    return out


def apply_leaves(X, feature, threshold, left, right):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    active = feature[node] >= 0
    while active.any():
        a = rows[active]
        cur = node[a]
        go = X[a, feature[cur]] <= threshold[cur]
        node[a] = np.where(go, left[cur], right[cur])
        active = feature[node] >= 0
    return node

"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly so one process can time them side by
side; results are also checked for bitwise agreement.
"""

import argparse
import time

import numpy as np

from treeflow_bench import _pykernels, kernels
from treeflow_bench.data import BlobSpec, make_blobs
from treeflow_bench.tree import fit_forest, fit_tree

try:
    from treeflow_bench import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    n, d, k = 5000, 16, 4
    X = rng.standard_normal((n, d))
    X[:, :4] = np.round(X[:, :4], 1)  # a few low-cardinality columns
    y = rng.integers(0, k, n)
    r = rng.standard_normal(n)
    idx = np.arange(n, dtype=np.int64)
    feats = list(range(d))
    ds = make_blobs(BlobSpec([(i, -i) for i in range(k)], 1.0, 20000, seed=0))
    tree = fit_tree(ds, 12)
    Xq = rng.standard_normal((200000, 2)) * 3
    forest_ds = make_blobs(BlobSpec(rng.standard_normal((3, 13)) * 1.5, 1.0, 600, seed=1))
    args = (tree.feature, tree.threshold, tree.left, tree.right)
    return {
        "best_split_gini (n=5000, d=16)": lambda m: m.best_split_gini(X, y, idx, feats, k),
        "best_split_mse (n=5000, d=16)": lambda m: m.best_split_mse(X, r, idx, feats),
        "descend_paths (n=200000, depth 12)": lambda m: m.descend_paths(Xq, *args, tree.max_depth),
        "apply_leaves (n=200000, depth 12)": lambda m: m.apply_leaves(Xq, *args),
        "fit_forest 100x15 (n=600, d=13)": lambda m: forest_with(m, forest_ds),
    }


def forest_with(module, ds):
    """fit_forest end to end with every kernel routed through ``module``."""
    saved = {k: getattr(kernels, k) for k in ("best_split_gini", "best_split_mse", "descend_paths",
                                               "apply_leaves")}
    try:
        for k in saved:
            setattr(kernels, k, getattr(module, k))
        forest = fit_forest(ds, 100, 15, seed=0)
        return tuple(t.to_json() for t in forest.trees)
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}  match")
    for name, call in cases(rng).items():
        tp, out_p = best_of(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:40s} {tp * 1e3:11.2f} {'n/a':>12s}")
            continue
        tc, out_c = best_of(lambda: call(_ckernels), args.repeat)
        print(f"{name:40s} {tp * 1e3:11.2f} {tc * 1e3:12.2f} {tp / tc:7.1f}x  {same(out_p, out_c)}")


if __name__ == "__main__":
    main()

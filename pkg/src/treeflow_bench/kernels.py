"""Kernel backend selection.

The compiled extension is used when it was built; setting
``TREEFLOW_BENCH_PURE=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("TREEFLOW_BENCH_PURE", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

best_split_gini = _impl.best_split_gini
best_split_mse = _impl.best_split_mse
descend_paths = _impl.descend_paths
apply_leaves = _impl.apply_leaves

__all__ = ["BACKEND", "best_split_gini", "best_split_mse", "descend_paths", "apply_leaves"]

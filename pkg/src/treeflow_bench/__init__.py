"""Trees, boosting, score diffusion and tree-conditioned flow matching."""

import os as _os

# TREEFLOW_BENCH_THREADS caps BLAS threads; must be set before numpy loads
_threads = _os.environ.get("TREEFLOW_BENCH_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .kernels import BACKEND  # noqa: E402

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

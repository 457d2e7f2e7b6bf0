import sys
import numpy as np
import pytest

from treeflow_bench.data import Dataset


@pytest.fixture
def xor_ds():
    X = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    y = (np.sign(X[:, 0] * X[:, 1]) > 0).astype(int)
    return Dataset(X, y, ("a", "b"), 2)


@pytest.fixture
def blobs4():
    from treeflow_bench.data import BlobSpec, make_blobs

    return make_blobs(BlobSpec([(-2, -2), (-2, 2), (2, -2), (2, 2)], 0.5, 400, seed=3))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

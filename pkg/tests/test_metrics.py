import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeflow_bench.data import BlobSpec, Dataset, make_blobs, train_test_split
from treeflow_bench.metrics import (
    MetricError,
    classification_report,
    correlation_error,
    correlation_matrix,
    timed,
    tstr,
    wasserstein_1d,
    wasserstein_1d_mean,
)


def brute_w1(a, b):
    return min(np.mean(np.abs(np.asarray(a) - np.asarray(p))) for p in itertools.permutations(b))


def test_w1_hand_and_identity():
    assert wasserstein_1d([0, 1], [0, 3]) == 1.0
    X = np.random.default_rng(0).standard_normal((20, 3))
    assert wasserstein_1d_mean(X, X) == 0.0
    assert wasserstein_1d_mean(X, X + 2.5) == pytest.approx(2.5)


def test_w1_metric_axioms_small_family():
    family = [s for n in range(1, 5) for s in itertools.combinations_with_replacement(range(3), n)]
    by_size = {}
    for s in family:
        by_size.setdefault(len(s), []).append(s)
    for group in by_size.values():
        for a, b in itertools.product(group, repeat=2):
            d = wasserstein_1d(a, b)
            assert d == pytest.approx(brute_w1(a, b), abs=1e-12)
            assert d == wasserstein_1d(b, a)
            assert (d == 0) == (a == b)
            for c in group:
                assert wasserstein_1d(a, c) <= d + wasserstein_1d(b, c) + 1e-12


def test_w1_unequal_sizes_quantile_coupling():
    # replicate every point m times: distribution unchanged, so W1 must match equal-size result
    a, b = [0.0, 1.0, 5.0], [2.0, 2.0, 3.0]
    assert wasserstein_1d(a, np.repeat(b, 2)) == pytest.approx(wasserstein_1d(a, b))
    assert wasserstein_1d([0.0], [0.0, 2.0]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=15),
       st.lists(st.floats(-50, 50), min_size=1, max_size=15))
def test_w1_matches_cdf_integral(a, b):
    grid = np.sort(np.concatenate([a, b]))
    Fa = np.searchsorted(np.sort(a), grid[:-1], side="right") / len(a)
    Fb = np.searchsorted(np.sort(b), grid[:-1], side="right") / len(b)
    ref = float(np.sum(np.abs(Fa - Fb) * np.diff(grid)))
    assert wasserstein_1d(a, b) == pytest.approx(ref, abs=1e-9)


def test_w1_errors():
    with pytest.raises(MetricError):
        wasserstein_1d([], [1.0])
    with pytest.raises(MetricError):
        wasserstein_1d_mean(np.zeros((3, 2)), np.zeros((3, 3)))


def test_correlation_error_examples():
    t = np.arange(10.0)
    a = np.stack([t, 2 * t], axis=1)
    b = np.stack([t, -t], axis=1)
    assert correlation_error(a, a) == 0.0
    assert correlation_error(a, b) == pytest.approx(math.sqrt(8))
    perm = np.random.default_rng(0).permutation(10)
    assert correlation_error(a[perm], b) == pytest.approx(correlation_error(a, b))
    assert correlation_error(a, b) == correlation_error(b, a)


def test_zero_variance_identity_convention():
    X = np.stack([np.arange(5.0), np.full(5, 3.0), np.arange(5.0) ** 2], axis=1)
    C = correlation_matrix(X)
    assert np.all(np.isfinite(C))
    assert C[1, 1] == 1.0 and C[1, 0] == 0.0 and C[2, 1] == 0.0
    with pytest.raises(MetricError):
        correlation_matrix(np.zeros((1, 2)))


def test_classification_report_examples():
    assert classification_report([0, 1, 2], [0, 1, 2]).to_dict() == {
        "accuracy": 1.0, "macro_f1": 1.0, "cohen_kappa": 1.0}
    r = classification_report([0, 1], [1, 0])
    assert r.accuracy == 0.0 and r.cohen_kappa == -1.0
    r = classification_report([0, 0, 1, 1], [0, 0, 0, 0])
    assert r.cohen_kappa == 0.0 and r.accuracy == 0.5
    # degenerate p_e = 1 with perfect agreement
    assert classification_report([1, 1], [1, 1], 3).cohen_kappa == 1.0
    # absent classes count as F1 = 0 in the macro mean
    assert classification_report([0, 0], [0, 0], 2).macro_f1 == 0.5
    with pytest.raises(MetricError):
        classification_report([0, 1], [0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
def test_report_bounds_and_hamming(pairs):
    t, p = map(np.array, zip(*pairs))
    r = classification_report(t, p, 4)
    assert r.accuracy == pytest.approx(1 - np.mean(t != p))
    assert -1 <= r.cohen_kappa <= 1 and 0 <= r.macro_f1 <= 1


def test_tstr_identity_and_shuffled_floor():
    ds = make_blobs(BlobSpec([(-1, 0), (1, 0)], 0.6, 400, seed=2))
    tr, te = train_test_split(ds, 0.25, 0, stratified=True)
    real = tstr(tr, te)
    assert real > 0.8
    assert abs(tstr(tr, te, seed=1) - real) <= 0.02
    shuffled = tr.with_labels(np.random.default_rng(0).permutation(tr.labels))
    assert abs(tstr(shuffled, te) - 0.5) < 0.15


def test_tstr_missing_class_warns():
    X = np.random.default_rng(0).standard_normal((30, 2))
    syn = Dataset(X, np.zeros(30, dtype=int), class_count=2)
    real = Dataset(X[:10], np.array([0, 1] * 5), class_count=2)
    with pytest.warns(RuntimeWarning):
        acc = tstr(syn, real)
    assert acc == 0.5


def test_timed():
    _, dt = timed(lambda: None)
    assert dt < 1e-3
    (inner, dt_in), dt_out = timed(lambda: timed(lambda: time.sleep(0.01)))
    assert dt_out >= dt_in
    runs = [timed(lambda: time.sleep(0.1))[1] for _ in range(3)]
    assert all(0.08 <= r <= 0.12 for r in runs)

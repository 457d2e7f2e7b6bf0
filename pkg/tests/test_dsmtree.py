import copy
import math

import numpy as np
import pytest

from treeflow_bench.data import BlobSpec, Dataset, make_blobs, standardize
from treeflow_bench.dsmtree import (
    DistillError,
    DsmConfig,
    SplitModel,
    distill_report,
    infer,
    make_teacher,
    masked_cross_entropy,
    oracle_policy,
    path_agreement,
    train_split_model,
)
from treeflow_bench.nn import mlp_init, split_model_spec
from treeflow_bench.tree import Decision, fit_tree, tree_decisions


@pytest.fixture(scope="module")
def blob_ds():
    ds, _ = standardize(make_blobs(BlobSpec([(-2, -2), (-2, 2), (2, -2), (2, 2)], 0.8, 500, seed=0)))
    return ds


def test_uniform_logits_give_ln2():
    loss, grad = masked_cross_entropy(np.zeros((4, 2)), np.array([0, 1, 1, 0]))
    assert loss == pytest.approx(math.log(2))
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)


def test_masked_rows_contribute_nothing():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((6, 2))
    t = np.array([0, 1, 1, 0, 1, 0])
    base, g = masked_cross_entropy(z, t)
    ex = int(Decision.EXHAUSTED)
    z2 = np.concatenate([z, rng.standard_normal((5, 2))])
    t2 = np.concatenate([t, np.full(5, ex)])
    more, g2 = masked_cross_entropy(z2, t2)
    assert more == pytest.approx(base, abs=1e-15)
    assert np.all(g2[6:] == 0) and np.allclose(g2[:6], g)
    loss, grad = masked_cross_entropy(z, np.full(6, ex))
    assert loss == 0.0 and not grad.any()


def test_all_exhausted_batches_leave_params_alone():
    ds = Dataset(np.random.default_rng(0).standard_normal((40, 3)), np.zeros(40, dtype=int), class_count=2)
    teacher = fit_tree(ds, 1)  # pure data: root is a leaf, every level-0 decision is Exhausted
    assert teacher.node_count == 1
    init = mlp_init(split_model_spec(3, 1), 0)
    model = train_split_model(ds, teacher, DsmConfig(steps=5, batch=16))
    assert model.loss_history == [0.0] * 5
    assert all(np.array_equal(model.net.params[k], init.params[k]) for k in init.params)


def test_oracle_policy_reproduces_predict(blob_ds):
    teacher = fit_tree(blob_ds, 4)
    X = np.concatenate([blob_ds.features, np.random.default_rng(1).uniform(-3, 3, (200, 2))])
    assert np.array_equal(infer(oracle_policy(teacher), teacher, X), teacher.predict(X))
    assert path_agreement(oracle_policy(teacher), teacher, X) == 1.0


def test_infer_ignores_thresholds(blob_ds):
    teacher = fit_tree(blob_ds, 3)
    blind = copy.copy(teacher)
    blind.threshold = np.full_like(teacher.threshold, np.nan)
    model = SplitModel(mlp_init(split_model_spec(2, 3), 0), 3)
    assert np.array_equal(infer(model, blind, blob_ds.features), infer(model, teacher, blob_ds.features))


def test_constant_left_policy(blob_ds):
    teacher = fit_tree(blob_ds, 1)
    left = teacher.left[0]
    out = infer(lambda X, lv: np.zeros(len(X), dtype=int), teacher, blob_ds.features)
    assert np.all(out == teacher.prediction[left])


def test_internal_final_node_returns_its_majority(blob_ds):
    teacher = fit_tree(blob_ds, 3)
    shallow = copy.copy(teacher)
    shallow.max_depth = 1  # traversal runs out of levels at depth 1 nodes
    out = infer(oracle_policy(teacher), shallow, blob_ds.features)
    nodes = teacher.paths(blob_ds.features)[:, 1]
    assert np.array_equal(out, teacher.prediction[nodes])


def test_depth1_student_learns_level0(blob_ds):
    sep = blob_ds.with_labels((blob_ds.features[:, 0] > 0).astype(int))
    teacher = fit_tree(sep, 1)
    model = train_split_model(sep, teacher, DsmConfig(steps=2000, batch=128, seed=0))
    want = tree_decisions(teacher, sep.features, 0)
    assert np.mean(model.decide(sep.features, 0) == want) >= 0.99


def test_untrained_agreement_positive_and_report_schema(blob_ds):
    teacher = fit_tree(blob_ds, 3)
    model = SplitModel(mlp_init(split_model_spec(2, 3), 0), 3)
    assert 0 < path_agreement(model, teacher, blob_ds) <= 1
    rep = distill_report(model, teacher, blob_ds, 0, 0)
    assert set(rep) == {"teacher", "student", "gap", "path_agreement", "steps", "seed"}
    assert set(rep["teacher"]) == set(rep["student"]) == {"acc", "f1", "kappa"}


def test_make_teacher_contracts(blob_ds):
    cfg = DsmConfig(oracle_trees=1, oracle_depth=4, teacher_depth=6, seed=3)
    oracle, teacher = make_teacher(blob_ds, cfg)
    pseudo = oracle.trees[0].predict(blob_ds.features)
    assert np.array_equal(oracle.predict(blob_ds.features), pseudo)
    assert teacher.actual_depth <= cfg.teacher_depth


def test_pseudo_labels_are_easier_than_noisy_labels(blob_ds):
    rng = np.random.default_rng(0)
    y = blob_ds.labels.copy()
    flip = rng.uniform(size=len(y)) < 0.1
    y[flip] = (y[flip] + rng.integers(1, 4, flip.sum())) % 4
    noisy = blob_ds.with_labels(y)
    cfg = DsmConfig(oracle_trees=50, oracle_depth=15, teacher_depth=4, seed=0)
    oracle, teacher = make_teacher(noisy, cfg)
    pseudo = oracle.predict(noisy.features)
    on_pseudo = np.mean(teacher.predict(noisy.features) == pseudo)
    raw_teacher = fit_tree(noisy, cfg.teacher_depth)
    on_raw = np.mean(raw_teacher.predict(noisy.features) == noisy.labels)
    assert on_pseudo >= on_raw


def test_loss_window_medians_descend(blob_ds):
    teacher = fit_tree(blob_ds, 3)
    model = train_split_model(blob_ds, teacher, DsmConfig(steps=2000, batch=128, seed=1))
    med = [np.median(model.loss_history[i:i + 500]) for i in range(0, 2000, 500)]
    assert all(b <= a for a, b in zip(med, med[1:]))


def test_config_validation():
    with pytest.raises(DistillError):
        DsmConfig(steps=0)
    ds = Dataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]))
    with pytest.raises(DistillError):
        train_split_model(ds, fit_tree(ds, 0), DsmConfig(steps=1))

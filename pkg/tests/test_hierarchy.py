import itertools

import numpy as np
import pytest

from treeflow_bench.diffusion import TrajectoryBundle
from treeflow_bench.hierarchy import (
    HierarchyError,
    Linkage,
    MergeEvent,
    build_dendrogram,
    check_ultrametric,
    merger_index,
    merger_time,
    moment_distance,
    moment_tensor,
    track_cluster_stats,
    ultrametric_violation,
)


def frozen(points, steps=4):
    pts = np.asarray(points, dtype=float)
    return TrajectoryBundle(np.arange(steps + 1) / steps, np.repeat(pts[None], steps + 1, axis=0))


def test_singleton_and_mirrored_stats():
    traj = frozen([[1.0, 0.0], [-1.0, 0.0]])
    assert np.all(track_cluster_stats(traj, [0]).spreads == 0)
    st = track_cluster_stats(traj, [0, 1])
    assert np.all(st.centroids == 0) and np.all(st.spreads == 1)


def test_stats_errors():
    traj = frozen([[0.0, 0.0]])
    with pytest.raises(HierarchyError):
        track_cluster_stats(traj, [])
    with pytest.raises(HierarchyError):
        track_cluster_stats(traj, [3])


def test_merger_scan_by_hand():
    # a at origin with spread 0.5 (mirrored pair), b a singleton pair with spread 0.5, moving closer
    times = np.array([0.0, 0.5, 1.0])
    sep = np.array([2.0, 1.2, 0.5])
    pos = np.zeros((3, 4, 1))
    pos[:, 0, 0], pos[:, 1, 0] = -0.5, 0.5
    pos[:, 2, 0], pos[:, 3, 0] = sep - 0.5, sep + 0.5
    traj = TrajectoryBundle(times, pos)
    a, b = track_cluster_stats(traj, [0, 1]), track_cluster_stats(traj, [2, 3])
    assert merger_index(a, b) == 2 and merger_time(a, b) == 1.0
    assert merger_index(a, a) == 0


def test_frozen_singletons_never_merge():
    traj = frozen([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    a, b = track_cluster_stats(traj, [0]), track_cluster_stats(traj, [1])
    assert merger_time(a, b) is None
    link = build_dendrogram(traj, [[0], [1], [2]])
    assert [e.time for e in link.events] == [1.0, 1.0]
    assert (link.events[0].left, link.events[0].right) == (0, 1)
    assert (link.events[1].left, link.events[1].right, link.events[1].size) == (2, 3, 3)


def test_grid_mismatch_rejected():
    a = track_cluster_stats(frozen([[0.0]], 4), [0])
    b = track_cluster_stats(frozen([[0.0]], 5), [0])
    with pytest.raises(HierarchyError):
        merger_index(a, b)


def test_dendrogram_on_converging_pairs():
    # two tight pairs that collapse early, pairs meet later
    steps = 10
    t = np.arange(steps + 1) / steps
    base = np.array([[-3, 0.2], [-3, -0.2], [3, 0.2], [3, -0.2]], dtype=float)
    pos = np.stack([base * np.array([1 - 0.9 * s, 1.0]) for s in t])
    traj = TrajectoryBundle(t, pos)
    link = build_dendrogram(traj, [[0], [1], [2], [3]], labels=["a", "b", "c", "d"])
    assert len(link.events) == 3
    times = [e.time for e in link.events]
    assert times == sorted(times)
    assert link.events[-1].size == 4
    ok, v = check_ultrametric(link)
    assert ok and v <= 0
    again = build_dendrogram(traj, [[0], [1], [2], [3]], labels=["a", "b", "c", "d"])
    assert again == link
    assert Linkage.from_dict(link.to_dict()) == link
    assert link.to_matrix().shape == (3, 4)


def test_overlap_and_too_few_clusters():
    traj = frozen([[0.0], [1.0]])
    with pytest.raises(HierarchyError):
        build_dendrogram(traj, [[0, 1], [1]])
    with pytest.raises(HierarchyError):
        build_dendrogram(traj, [[0, 1]])


def test_ultrametric_examples():
    link = Linkage((0, 1, 2), (MergeEvent(0, 1, 0.2, 2), MergeEvent(2, 3, 0.5, 3)))
    T = link.cophenetic()
    assert sorted([T[0, 1], T[0, 2], T[1, 2]]) == [0.2, 0.5, 0.5]
    assert check_ultrametric(link) == (True, 0.0)
    bad = np.array([[0, 0.1, 0.9], [0.1, 0, 0.1], [0.9, 0.1, 0]])
    ok, v = check_ultrametric(bad)
    assert not ok and v == pytest.approx(0.8)


def test_merging_is_permanent():
    link = Linkage((0, 1, 2, 3), (MergeEvent(0, 1, 0.1, 2), MergeEvent(2, 3, 0.3, 2),
                                  MergeEvent(4, 5, 0.6, 4)))
    sets = link.leaf_sets()
    for m in range(len(link.events)):
        for later in range(m + 1, len(link.events)):
            if link.events[later].left == 4 + m or link.events[later].right == 4 + m:
                assert sets[4 + m] <= sets[4 + later]
    T = link.cophenetic()
    for i, j, k in itertools.permutations(range(4), 3):
        assert T[i, k] <= max(T[i, j], T[j, k])
    assert ultrametric_violation(T) <= 0


def test_moment_examples():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert np.array_equal(moment_tensor(pts, 1), [1.0, 0.0])
    assert np.array_equal(moment_tensor(pts, 2), [[1.0, 0.0], [0.0, 0.0]])
    assert np.array_equal(moment_tensor([[3.0, 4.0]], 1), [3.0, 4.0])
    shifted = pts + np.array([5.0, -1.0])
    assert np.array_equal(moment_tensor(shifted, 1), [6.0, -1.0])
    assert moment_distance(pts, shifted, 2) == 0.0
    with pytest.raises(HierarchyError):
        moment_tensor(pts, 3)
    with pytest.raises(HierarchyError):
        moment_tensor([[1.0, 1.0]], 2)


def test_moment_criterion_flag():
    traj = frozen([[0.0, 0.0], [0.05, 0.0]])
    link = build_dendrogram(traj, [[0], [1]], criterion="moment", eps=0.1)
    assert link.events[0].time == 0.0
    with pytest.raises(HierarchyError):
        build_dendrogram(traj, [[0], [1]], criterion="nope")

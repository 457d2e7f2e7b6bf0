"""Time-domain agglomerative clustering over simulated trajectories."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .diffusion import TrajectoryBundle


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterStats:
    members: np.ndarray
    times: np.ndarray
    centroids: np.ndarray  # [T, d]
    spreads: np.ndarray  # [T]
    covariances: np.ndarray  # [T, d, d]


def track_cluster_stats(traj: TrajectoryBundle, members) -> ClusterStats:
    """Centroid, mean distance to centroid and covariance of ``members`` at every stored time."""
    members = np.unique(np.asarray(members, dtype=np.int64))
    if members.size == 0:
        raise HierarchyError("cluster has no members")
    n = traj.positions.shape[1]
    if members[0] < 0 or members[-1] >= n:
        raise HierarchyError(f"member indices must lie in [0, {n})")
    pts = traj.positions[:, members, :]
    cen = pts.mean(axis=1)
    dev = pts - cen[:, None, :]
    spreads = np.linalg.norm(dev, axis=2).mean(axis=1)
    cov = np.einsum("tni,tnj->tij", dev, dev) / members.size
    return ClusterStats(members, traj.times, cen, spreads, cov)


def _criterion_met(a: ClusterStats, b: ClusterStats, criterion: str, eps: float) -> np.ndarray:
    if criterion == "spread":
        dist = np.linalg.norm(a.centroids - b.centroids, axis=1)
        return dist < a.spreads + b.spreads
    if criterion == "moment":
        d1 = np.linalg.norm(a.centroids - b.centroids, axis=1)
        d2 = np.linalg.norm(a.covariances - b.covariances, axis=(1, 2))
        return (d1 < eps) & (d2 < eps)
    raise HierarchyError(f"unknown merge criterion {criterion!r}")


def merger_index(a: ClusterStats, b: ClusterStats, start: int = 0, criterion: str = "spread",
                 eps: float = 0.1) -> int | None:
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise HierarchyError("cluster statistics live on different time grids")
    hit = np.flatnonzero(_criterion_met(a, b, criterion, eps)[start:])
    return int(hit[0]) + start if hit.size else None


def merger_time(a: ClusterStats, b: ClusterStats, criterion: str = "spread", eps: float = 0.1
                ) -> float | None:
    """Earliest grid time where centroid distance < spread_a + spread_b (None if never)."""
    k = merger_index(a, b, 0, criterion, eps)
    return None if k is None else float(a.times[k])


@dataclass(frozen=True)
class MergeEvent:
    left: int
    right: int
    time: float
    size: int


@dataclass(frozen=True)
class Linkage:
    leaves: tuple
    events: tuple[MergeEvent, ...]

    @property
    def K(self) -> int:
        return len(self.leaves)

    def to_dict(self) -> dict:
        return {
            "leaves": list(self.leaves),
            "events": [{"left": e.left, "right": e.right, "time": e.time, "size": e.size}
                       for e in self.events],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "Linkage":
        return cls(tuple(doc["leaves"]),
                   tuple(MergeEvent(e["left"], e["right"], e["time"], e["size"]) for e in doc["events"]))

    def to_matrix(self) -> np.ndarray:
        """Standard 4-column linkage matrix (left, right, height, size)."""
        return np.array([[e.left, e.right, e.time, e.size] for e in self.events], dtype=np.float64)

    def leaf_sets(self) -> dict[int, frozenset]:
        sets = {i: frozenset([i]) for i in range(self.K)}
        for m, e in enumerate(self.events):
            sets[self.K + m] = sets[e.left] | sets[e.right]
        return sets

    def cophenetic(self) -> np.ndarray:
        """Pairwise leaf merge times (0 on the diagonal)."""
        T = np.zeros((self.K, self.K))
        sets = {i: [i] for i in range(self.K)}
        for m, e in enumerate(self.events):
            a, b = sets[e.left], sets[e.right]
            T[np.ix_(a, b)] = e.time
            T[np.ix_(b, a)] = e.time
            sets[self.K + m] = a + b
        return T


def build_dendrogram(traj: TrajectoryBundle, clusters, labels=None, criterion: str = "spread",
                     eps: float = 0.1) -> Linkage:
    """Repeatedly merge the active pair with the earliest merger time at or after the last event."""
    clusters = [np.asarray(c, dtype=np.int64) for c in clusters]
    K = len(clusters)
    if K < 2:
        raise HierarchyError("need at least two initial clusters")
    seen = np.concatenate(clusters)
    if len(np.unique(seen)) != len(seen):
        raise HierarchyError("initial clusters overlap")
    active = {i: track_cluster_stats(traj, c) for i, c in enumerate(clusters)}
    counts = {i: 1 for i in range(K)}
    last = len(traj.times) - 1
    floor = 0
    events = []
    for m in range(K - 1):
        best = None
        for a, b in itertools.combinations(sorted(active), 2):
            k = merger_index(active[a], active[b], floor, criterion, eps)
            key = (last if k is None else k, a, b)
            if best is None or key < best:
                best = key
        k, a, b = best
        new = K + m
        active[new] = track_cluster_stats(traj, np.concatenate([active[a].members, active[b].members]))
        counts[new] = counts[a] + counts[b]
        del active[a], active[b]
        events.append(MergeEvent(a, b, float(traj.times[k]), counts[new]))
        floor = k
    leaves = tuple(range(K)) if labels is None else tuple(labels)
    return Linkage(leaves, tuple(events))


def ultrametric_violation(T: np.ndarray) -> float:
    """max over triples of T[i,k] - max(T[i,j], T[j,k])."""
    T = np.asarray(T, dtype=np.float64)
    bound = np.maximum(T[:, :, None], T[None, :, :])  # [i, j, k] = max(T_ij, T_jk)
    return float(np.max(T[:, None, :] - bound))


def check_ultrametric(linkage: Linkage | np.ndarray, tol: float = 0.0) -> tuple[bool, float]:
    T = linkage.cophenetic() if isinstance(linkage, Linkage) else np.asarray(linkage)
    v = ultrametric_violation(T)
    return v <= tol, v


def moment_tensor(points, order: int) -> np.ndarray:
    """Order 1: mean vector. Order 2: centered covariance (divide by count)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if order == 1:
        if pts.shape[0] < 1:
            raise HierarchyError("moment of order 1 needs a point")
        return pts.mean(axis=0)
    if order == 2:
        if pts.shape[0] < 2:
            raise HierarchyError("moment of order 2 needs at least two points")
        dev = pts - pts.mean(axis=0)
        return dev.T @ dev / pts.shape[0]
    raise HierarchyError(f"unsupported moment order {order}")


def moment_distance(a, b, order: int) -> float:
    return float(np.linalg.norm(moment_tensor(a, order) - moment_tensor(b, order)))

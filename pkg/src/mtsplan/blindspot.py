"""Blind-spot sensing and capacity-constrained K-means clustering.

A grid cell is a blind spot when its predicted RSS falls strictly below
the threshold delta. Clustering groups blind spots into M clusters of at
most C members each: the assignment step walks the points in a fixed
row-major order and gives each point its nearest centroid that still has
room, then the next-nearest, and so on (feasible by pigeonhole whenever
M * C >= number of points).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raytrace import Heatmap

MAX_ITERS = 100


@dataclass(frozen=True)
class BlindSpotSet:
    cells: tuple          # (i, j) grid indices, row-major order
    threshold: float      # delta, dBm
    positions: np.ndarray  # (B, 2) cell centers, meters

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class Clustering:
    M: int
    capacity: int
    assignment: np.ndarray  # (B,) cluster id per point
    centroids: np.ndarray   # (M, 2)

    def members(self, k: int) -> np.ndarray:
        return np.nonzero(self.assignment == k)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.M)


def sense(heatmap: Heatmap, delta: float) -> BlindSpotSet:
    """Cells with RSS strictly below delta, in row-major order.

    Unreachable cells (-inf) are always included; cells exactly at the
    threshold are not blind.
    """
    cells = []
    positions = []
    for i, j in heatmap.grid.indices():
        if heatmap.values[j, i] < delta:
            cells.append((i, j))
            positions.append(heatmap.grid.center(i, j))
    pos = np.array(positions, dtype=float).reshape(-1, 2)
    return BlindSpotSet(cells=tuple(cells), threshold=delta, positions=pos)


def _farthest_point_init(points: np.ndarray, M: int, rng) -> np.ndarray:
    """Deterministic farthest-point seeding; the first centroid is the
    lowest-index point, exact distance ties fall to the seeded rng."""
    n = points.shape[0]
    chosen = [0]
    dist = np.hypot(*(points - points[0]).T)
    while len(chosen) < min(M, n):
        far = np.nonzero(dist >= dist.max() - 1e-12)[0]
        pick = int(far[0]) if far.size == 1 else int(rng.choice(far))
        chosen.append(pick)
        dist = np.minimum(dist, np.hypot(*(points - points[pick]).T))
    centroids = points[chosen].copy()
    if M > n:  # more clusters than points: recycle positions
        extra = points[np.arange(M - n) % n]
        centroids = np.vstack([centroids, extra])
    return centroids


def _assign(points, centroids, C):
    """Capacity-respecting assignment pass in point order."""
    n = points.shape[0]
    assignment = np.empty(n, dtype=int)
    counts = np.zeros(centroids.shape[0], dtype=int)
    for idx in range(n):
        d = np.hypot(*(centroids - points[idx]).T)
        for k in np.argsort(d, kind="stable"):
            if counts[k] < C:
                assignment[idx] = k
                counts[k] += 1
                break
    return assignment


def capacity_kmeans(points, M: int, C: int, seed: int = 0, max_iters: int = MAX_ITERS) -> Clustering:
    """Cluster points into M groups of at most C members each.

    Deterministic for fixed (points, M, C, seed). Raises ValueError when
    M * C < number of points; M larger than the point count is allowed
    (empty clusters keep their previous centroid).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = points.shape[0]
    if M < 1:
        raise ValueError("M must be at least 1")
    if M * C < n:
        raise ValueError(f"infeasible: M*C = {M * C} < {n} points")
    if n == 0:
        return Clustering(M=M, capacity=C, assignment=np.zeros(0, dtype=int),
                          centroids=np.zeros((M, 2)))

    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(points, M, rng)
    assignment = None
    for _ in range(max_iters):
        new_assignment = _assign(points, centroids, C)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for k in range(M):
            mask = assignment == k
            if mask.any():
                centroids[k] = points[mask].mean(axis=0)
    return Clustering(M=M, capacity=C, assignment=assignment, centroids=centroids)


def within_cluster_ssd(clustering: Clustering, points) -> float:
    """Sum over points of squared distance to their assigned centroid."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    diffs = points - clustering.centroids[clustering.assignment]
    return float(np.sum(diffs * diffs))

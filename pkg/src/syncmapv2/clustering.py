"""Agglomerative readout of the averaged map."""
from __future__ import annotations

import numpy as np
from scipy.cluster.hierarchy import linkage


def canonical_labels(labels) -> np.ndarray:
    """Relabel so ids appear as 0, 1, 2, ... in order of first occurrence."""
    labels = np.asarray(labels).reshape(-1)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.reshape(-1)]


def dendrogram(points, method="ward") -> np.ndarray:
    """scipy linkage matrix: rows of (a, b, distance, size)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return linkage(points, method=method, metric="euclidean")


def hierarchical_cluster(points, n_clu: int, method="ward") -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= n_clu <= n:
        raise ValueError(f"n_clu={n_clu} outside [1, {n}]")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    return cluster_range(points, n_clu, n_clu, method)[0]


def cluster_range(points, n_min=2, n_max=20, method="ward") -> list[np.ndarray]:
    """Cut one dendrogram at every cluster count in [n_min, n_max]."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n_max > n or n_min < 1 or n_min > n_max:
        raise ValueError(f"cluster range [{n_min}, {n_max}] invalid for {n} points")
    if n == 1:
        return [np.zeros(1, dtype=np.int64)]
    Z = dendrogram(points, method)
    # replay the merges (scipy's cut_tree mis-cuts zero-height linkages)
    assign = np.arange(n)
    cuts = {}
    if n <= n_max:
        cuts[n] = assign.copy()
    for i, (a, b) in enumerate(Z[:, :2].astype(np.int64)):
        assign[(assign == a) | (assign == b)] = n + i
        remaining = n - i - 1
        if remaining < n_min:
            break
        if remaining <= n_max:
            cuts[remaining] = assign.copy()
    return [canonical_labels(cuts[k]) for k in range(n_min, n_max + 1)]

"""Deterministic K-means over proposal features, plus cluster profiles.

Lloyd iterations with L2 distance and k-means++ seeding from the supplied
seed. Assignment ties break toward the lower cluster index, so identical
inputs always yield identical partitions.
"""

from __future__ import annotations

import numpy as np

from .model import ClusterPartition, as_feature_matrix

MAX_LLOYD_ITERATIONS = 300


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared L2 distances
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first centroid uniform, then proportional to the
    squared distance to the nearest chosen centroid."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[int(rng.integers(n))]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(closest), r, side="right")), n - 1)
        centroids[c] = points[idx]
        closest = np.minimum(closest, np.sum((points - centroids[c]) ** 2, axis=1))
    return centroids


def _repair_empty(labels: np.ndarray, dists: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point currently farthest from its centroid."""
    labels = labels.copy()
    for c in range(k):
        if (labels == c).any():
            continue
        own = dists[np.arange(labels.size), labels]
        counts = np.bincount(labels, minlength=k)
        own[counts[labels] <= 1] = -1.0  # do not empty another cluster
        donor = int(np.argmax(own))
        labels[donor] = c
    return labels


def kmeans(features, k: int, seed: int) -> ClusterPartition:
    """Cluster feature vectors into k non-empty clusters, deterministically."""
    points = as_feature_matrix(features).astype(np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(points, k, rng)
    dists = _squared_distances(points, centroids)
    labels = _repair_empty(np.argmin(dists, axis=1), dists, k)

    inertia_history = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)
        dists = _squared_distances(points, centroids)
        new_labels = _repair_empty(np.argmin(dists, axis=1), dists, k)
        inertia_history.append(float(dists[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    return ClusterPartition(
        k=k,
        labels=labels,
        centroids=centroids,
        salient_flags=np.zeros(k, dtype=bool),
        inertia_history=tuple(inertia_history),
    )


def cluster_profile(partition: ClusterPartition, features, cluster_index: int) -> np.ndarray:
    """Average profile of a cluster: the arithmetic mean of member features."""
    points = as_feature_matrix(features).astype(np.float64)
    if points.shape[0] != partition.n_points:
        raise ValueError("features do not match the partition")
    mask = partition.labels == cluster_index
    if not 0 <= cluster_index < partition.k or not mask.any():
        raise ValueError(f"cluster {cluster_index} is empty or unknown")
    return points[mask].mean(axis=0)


def proposal_similarity(profile: np.ndarray, feature: np.ndarray) -> float:
    """Euclidean distance of a feature to a cluster profile (smaller = closer)."""
    profile = np.asarray(profile, dtype=np.float64)
    feature = np.asarray(feature, dtype=np.float64)
    if profile.shape != feature.shape:
        raise ValueError(f"dimension mismatch: {profile.shape} vs {feature.shape}")
    return float(np.linalg.norm(profile - feature))

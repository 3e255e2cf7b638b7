"""k-means over row-normalized spectral features (latent communities/categories)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scfrec.spectral.eigensolver import SpectralFeatures


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    centroids: np.ndarray
    side: str

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def default_n_clusters(n_vertices: int) -> int:
    return max(1, math.ceil(math.sqrt(n_vertices)))


def normalize_rows(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    out = np.zeros_like(X)
    nz = norms[:, 0] > 0
    out[nz] = X[nz] / norms[nz]
    return out


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _seed_centroids(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rest[rng.integers(rest.size)])
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _lloyd(X, n_clusters, rng, max_iter, tol):
    n = X.shape[0]
    C = _seed_centroids(X, n_clusters, rng)
    for _ in range(max_iter):
        d = _sq_dists(X, C)
        labels = np.argmin(d, axis=1)
        counts = np.bincount(labels, minlength=n_clusters)
        for c in np.flatnonzero(counts == 0):
            # refill from the point farthest from its own centroid
            own = d[np.arange(n), labels]
            far = int(np.argmax(own))
            labels[far] = c
            d[far] = 0.0
            counts = np.bincount(labels, minlength=n_clusters)
        new_C = np.zeros_like(C)
        np.add.at(new_C, labels, X)
        new_C /= counts[:, None]
        shift = np.sqrt(((new_C - C) ** 2).sum(1)).max()
        C = new_C
        if shift <= tol:
            break
    inertia = float(((X - C[labels]) ** 2).sum())
    return labels, C, inertia


def kmeans(X, n_clusters, seed=0, max_iter=100, tol=1e-6, n_init=10):
    """Lloyd iterations with D^2-weighted seeding; returns (labels, centroids).

    ``n_init`` seeded restarts are run and the lowest-inertia one is kept
    (the earliest restart wins ties).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    if n_clusters == n:
        return np.arange(n), X.copy()
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        labels, C, inertia = _lloyd(X, n_clusters, rng, max_iter, tol)
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, C, inertia)
    return best[0], best[1]


def cluster_vertices(
    feat, n_clusters: int, seed: int = 0, side: str | None = None, n_init: int = 10
) -> ClusterAssignment:
    """Cluster vertices by their L2-normalized feature rows.

    ``feat`` may be :class:`SpectralFeatures` or any ``n_vertices x K`` array
    (e.g. an external item feature matrix).
    """
    if isinstance(feat, SpectralFeatures):
        side = side or feat.side
        X = feat.features
    else:
        X = np.asarray(feat, dtype=np.float64)
    labels, C = kmeans(normalize_rows(X), n_clusters, seed=seed, n_init=n_init)
    return ClusterAssignment(labels.astype(np.int64), n_clusters, C, side or "user")


def write_clusters(path, clusters: ClusterAssignment) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v, c in enumerate(clusters.labels.tolist()):
            fh.write(f"{v}\t{c}\n")


def read_clusters(path, side: str = "user") -> ClusterAssignment:
    """Load labels; centroids are not stored and come back empty."""
    with open(path, encoding="utf-8") as fh:
        data = np.array(fh.read().split(), dtype=np.int64).reshape(-1, 2)
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise ValueError(f"{path}: vertex indices must be 0..n-1 in order")
    labels = data[:, 1]
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    return ClusterAssignment(labels, n_clusters, np.zeros((n_clusters, 0)), side)

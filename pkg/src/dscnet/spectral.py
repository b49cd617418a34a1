"""Normalized spectral clustering (symmetric Laplacian + row re-normalisation)."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_n_clusters, check_square
from .diffcore import sym_eig
from .exceptions import ConfigError

DEGREE_EPS = 1e-12
MAX_ITER = 300


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _sq_dists(points, centers):
    d = (points * points).sum(1)[:, None] - 2.0 * points @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centers[c : c + 1])[:, 0])
    return centers


def _lloyd(points, centers, max_iter=MAX_ITER):
    labels = None
    for it in range(1, max_iter + 1):
        d = _sq_dists(points, centers)
        new = np.argmin(d, axis=1)
        for c in range(centers.shape[0]):
            members = new == c
            if members.any():
                continue
            # re-seed an empty cluster at the point farthest from its centre
            far = int(np.argmax(d[np.arange(len(new)), new]))
            new[far] = c
            d[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([points[labels == c].mean(axis=0) for c in range(centers.shape[0])])
    inertia = float(((points - centers[labels]) ** 2).sum())
    return KMeansResult(labels, centers, inertia, it)


def kmeans(points, n_clusters, seed=0, restarts=20, return_result=False):
    """Lloyd's k-means with k-means++ seeding and ``restarts`` restarts.

    Restart seeds are spawned from ``seed``; the winner is the lowest
    inertia, ties going to the earliest restart.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"need 1 <= n_clusters <= n_samples, got {n_clusters} for {n} samples")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, int(restarts))):
        rng = np.random.default_rng(child)
        result = _lloyd(points, _kmeans_pp(points, n_clusters, rng))
        if best is None or result.inertia < best.inertia:
            best = result
    return best if return_result else best.labels


def spectral_embedding(A, n_clusters, eig_method="auto"):
    """Row-normalised eigenvectors of the ``n_clusters`` smallest eigenvalues of
    ``I - D^{-1/2} A D^{-1/2}``."""
    A = check_square(A, "affinity")
    if np.any(A < 0):
        raise ConfigError("affinity must be nonnegative")
    deg = A.sum(axis=1)
    deg = np.where(deg > 0, deg, DEGREE_EPS)
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(A.shape[0]) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    _, vecs = sym_eig(0.5 * (L + L.T), method=eig_method)
    emb = vecs[:, :n_clusters]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)


def spectral_cluster(A, n_clusters, seed=0, restarts=20, eig_method="auto"):
    """Cluster the nodes of affinity graph ``A`` into ``n_clusters`` groups.

    Returns
    -------
    labels : ndarray of int, shape (N,)
    """
    A = check_square(A, "affinity")
    n_clusters = check_n_clusters(n_clusters, A.shape[0])
    emb = spectral_embedding(A, n_clusters, eig_method)
    return kmeans(emb, n_clusters, seed=seed, restarts=restarts)

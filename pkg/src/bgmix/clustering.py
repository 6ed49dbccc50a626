"""Lloyd k-means with k-means++ seeding and restarts.

Used in two places: initializing the Gibbs samplers from a rough data
partition, and clustering pooled component-parameter draws during
relabeling.  Both call sites need determinism under an explicit
Generator, which is why this lives here instead of behind a third-party
interface.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class KMeansResult:
    centers: np.ndarray      # (k, d)
    labels: np.ndarray       # (n,) indices into 0..k-1
    inertia: float
    n_nonempty: int


def _seed_plus_plus(points, k, rng):
    """k-means++ seeding: spread initial centers with D^2 weighting."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            centers[j] = points[rng.choice(n, p=probs)]
        else:
            # all points coincide with chosen centers
            centers[j] = points[rng.integers(n)]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _assign(points, centers):
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def _lloyd(points, centers, max_iter):
    n, k = points.shape[0], centers.shape[0]
    centers = centers.copy()
    labels = np.full(n, -1)
    for _ in range(max_iter):
        new_labels, d2own = _assign(points, centers)
        # revive empty clusters from the point farthest from its own center,
        # donating only from clusters that keep at least one member
        for j in range(k):
            if np.any(new_labels == j):
                continue
            counts = np.bincount(new_labels, minlength=k)
            donors = counts[new_labels] >= 2
            if not np.any(donors):
                break
            far = np.flatnonzero(donors)[np.argmax(d2own[donors])]
            centers[j] = points[far]
            new_labels[far] = j
            d2own[far] = 0.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if np.any(members):
                centers[j] = points[members].mean(axis=0)
    labels, d2own = _assign(points, centers)
    return centers, labels, float(d2own.sum())


def kmeans(points, k, rng, max_iter=100, n_restarts=10, init_centers=None):
    """Best-of-restarts k-means.

    Parameters
    ----------
    points : ndarray, shape (n, d)
    k : int
        Number of clusters; when k > n only n clusters can be nonempty.
    rng : numpy Generator
        Drives seeding; the result is deterministic given its state.
    max_iter : int
        Lloyd iteration cap per restart; convergence is reached earlier
        when assignments stop changing.
    n_restarts : int
        Independent seedings; the minimum-inertia run wins, ties going to
        the earliest restart.
    init_centers : ndarray, optional
        Explicit (k, d) starting centers; runs a single Lloyd pass and
        ignores the seeding machinery.

    Returns
    -------
    KMeansResult
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
        raise ValueError("points must be a nonempty 2-D array")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    if k < 1:
        raise ValueError("k must be at least 1")

    if init_centers is not None:
        centers, labels, inertia = _lloyd(points, np.asarray(init_centers, float),
                                          max_iter)
    else:
        best = None
        for _ in range(n_restarts):
            seeded = _seed_plus_plus(points, k, rng)
            result = _lloyd(points, seeded, max_iter)
            if best is None or result[2] < best[2]:
                best = result
        centers, labels, inertia = best
    return KMeansResult(centers=centers, labels=labels, inertia=inertia,
                        n_nonempty=int(np.unique(labels).size))

"""
Tile sampling: proportional sampling at 5x, and k-means cluster sampling that
picks tiles at one magnification and descends to their children at the next.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import ConfigError, RangeError

from .tiling import TILE_SIZE, Dims, TileRef, child_tiles


def sample_level5(tiles: Sequence[TileRef], frac: float = 0.6, limit: int = 1000,
                  seed: int = 0) -> List[TileRef]:
    """All tiles up to ``limit``; above it, ceil(frac * count) drawn without replacement."""
    if not 0.0 < frac <= 1.0:
        raise RangeError(f"sample fraction {frac} outside (0, 1]")
    tiles = sorted(tiles)
    if len(tiles) <= limit:
        return tiles
    n = math.ceil(frac * len(tiles))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(tiles), size=n, replace=False)
    return [tiles[i] for i in np.sort(picked)]


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    iterations: int
    converged: bool

    def wcss(self, points: ArrayLike) -> float:
        pts = np.asarray(points, dtype=np.float64)
        return float(((pts - self.centroids[self.assignments]) ** 2).sum())


def _sq_dist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plusplus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++: each further seed drawn with probability proportional to D^2."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = _sq_dist(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = nearest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=nearest / total))
        else:
            nxt = int(rng.choice(np.setdiff1d(np.arange(n), chosen)))
        chosen.append(nxt)
        nearest = np.minimum(nearest, _sq_dist(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def _lloyd(pts: np.ndarray, centroids: np.ndarray, max_iters: int) -> KMeansResult:
    k = centroids.shape[0]
    labels: Optional[np.ndarray] = None
    for it in range(1, max_iters + 1):
        new_labels = np.argmin(_sq_dist(pts, centroids), axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            return KMeansResult(labels, centroids, it, True)
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = pts[members].mean(axis=0)
            else:
                own = ((pts - centroids[labels]) ** 2).sum(axis=1)
                far = int(np.argmax(own))
                centroids[j] = pts[far]
                labels[far] = j
    final = np.argmin(_sq_dist(pts, centroids), axis=1)
    return KMeansResult(final, centroids, max_iters, np.array_equal(final, labels))


def kmeans(points: ArrayLike, k: int, seed: int = 0, max_iters: int = 100,
           n_init: int = 10) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, best of ``n_init`` restarts.

    Each restart stops when an assignment repeats (then every point is nearest
    its centroid and every centroid is its cluster's mean) or after
    ``max_iters``. An emptied cluster is re-seeded at the point farthest from
    its centroid. The restart with the lowest WCSS wins; ties keep the earlier.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ConfigError("kmeans needs a non-empty n x d matrix")
    if not 1 <= k <= pts.shape[0]:
        raise ConfigError(f"k={k} must lie in [1, {pts.shape[0]}]")
    if n_init < 1:
        raise ConfigError(f"n_init={n_init} must be at least 1")

    rng = np.random.default_rng(seed)
    best: Optional[KMeansResult] = None
    best_wcss = math.inf
    for _ in range(n_init):
        res = _lloyd(pts, _plusplus_seeds(pts, k, rng), max_iters)
        score = res.wcss(pts)
        if score < best_wcss:
            best, best_wcss = res, score
    return best


@dataclass
class ClusterSample:
    selected: List[TileRef]
    children: List[TileRef]


def cluster_sample(tiles: Sequence[TileRef], assignments: ArrayLike, n_per_cluster: int = 20,
                   seed: int = 0, child_dims: Optional[Dims] = None, child_level: Optional[str] = None,
                   tile_size: int = TILE_SIZE) -> ClusterSample:
    """Up to ``n_per_cluster`` tiles per cluster, then their children one level up."""
    labels = np.asarray(assignments)
    if labels.shape[0] != len(tiles):
        raise ConfigError(f"{labels.shape[0]} assignments for {len(tiles)} tiles")
    rng = np.random.default_rng(seed)
    picked: List[TileRef] = []
    for cluster in np.unique(labels):
        members = np.flatnonzero(labels == cluster)
        if members.size > n_per_cluster:
            members = np.sort(rng.choice(members, size=n_per_cluster, replace=False))
        picked.extend(tiles[i] for i in members)
    picked = sorted(picked)

    children: List[TileRef] = []
    if child_dims is not None and child_level is not None:
        for tile in picked:
            children.extend(child_tiles(tile, child_dims, child_level, tile_size))
    return ClusterSample(selected=picked, children=sorted(set(children)))

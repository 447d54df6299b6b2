"""
Event Clustering Module
DP-Means in cosine-distance space plus transitive merging of near-duplicate clusters
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from embedding_core import MERGE_SCORE, SCORE_SCALE, stable_seed

logger = logging.getLogger(__name__)

# A point farther than this cosine distance from every center starts a new event.
# Same boundary as the merge score, as a cosine distance
DEFAULT_PENALTY = 1.0 - MERGE_SCORE / SCORE_SCALE
DEFAULT_INIT_CLUSTERS = 5
DEFAULT_MAX_ITERS = 50


@dataclass
class ClusterResult:
    """
    Output of dp_means / merge_clusters.

    Attributes:
        assignments: Cluster index for every input point
        centers: (k, D) normalized member means
        member_sums: (k, D) unnormalized member sums, kept so merges stay exact
        converged: False when max_iters was hit
        iterations: Assignment passes performed
        seeded: Number of k-means++ seeds the first pass started from
    """
    assignments: np.ndarray
    centers: np.ndarray
    member_sums: np.ndarray
    converged: bool = True
    iterations: int = 0
    seeded: int = 0

    @property
    def num_clusters(self) -> int:
        return int(self.centers.shape[0])

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.num_clusters)

    def members(self, cluster: int) -> np.ndarray:
        """Input indices assigned to a cluster, in input order."""
        return np.flatnonzero(self.assignments == cluster)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def _kmeanspp_seeds(points: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with squared cosine distance weights."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = 1.0 - points @ points[chosen[0]]
    while len(chosen) < count:
        weights = np.clip(closest, 0.0, None) ** 2
        total = weights.sum()
        if total <= 0.0:
            # Every remaining point coincides with a seed
            break
        pick = int(rng.choice(n, p=weights / total))
        chosen.append(pick)
        closest = np.minimum(closest, 1.0 - points @ points[pick])
    return points[chosen].copy()


def _rebuild(points: np.ndarray, assignments: np.ndarray):
    """Drop empty clusters, relabel contiguously, recompute sums and centers."""
    used = np.unique(assignments)
    remap = np.full(assignments.max() + 1, -1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    assignments = remap[assignments]
    sums = np.zeros((used.shape[0], points.shape[1]), dtype=np.float64)
    np.add.at(sums, assignments, points)
    return assignments, sums, _normalize_rows(sums)


def dp_means(points: Sequence[np.ndarray], penalty: float = DEFAULT_PENALTY,
             init_clusters: int = DEFAULT_INIT_CLUSTERS, max_iters: int = DEFAULT_MAX_ITERS,
             seed: int = 0) -> ClusterResult:
    """
    DP-Means over unit embeddings with distance = 1 - dot.

    Args:
        points: Non-empty sequence of unit embeddings
        penalty (float): New-cluster cosine distance threshold, in (0, 2)
        init_clusters (int): Number of k-means++ seeds (capped at len(points))
        max_iters (int): Assignment passes before giving up (result flagged)
        seed (int): Seeding RNG key

    Returns:
        ClusterResult
    """
    if len(points) == 0:
        raise ValueError("dp_means needs at least one point")
    if not 0.0 < penalty < 2.0:
        raise ValueError(f"penalty must be in (0, 2), got {penalty}")
    if init_clusters < 1:
        raise ValueError(f"init_clusters must be >= 1, got {init_clusters}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")

    x = np.asarray(np.stack(points), dtype=np.float64)
    n = x.shape[0]
    rng = np.random.default_rng(stable_seed('dp-means', seed, n))
    centers = _kmeanspp_seeds(x, min(init_clusters, n), rng)
    seeded = centers.shape[0]

    assignments = np.full(n, -1, dtype=np.int64)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        previous = assignments.copy()
        center_list = list(centers)
        center_matrix = centers
        for i in range(n):
            dist = 1.0 - center_matrix @ x[i]
            nearest = int(np.argmin(dist))  # lowest index on ties
            if dist[nearest] > penalty:
                center_list.append(x[i].copy())
                center_matrix = np.stack(center_list)
                assignments[i] = len(center_list) - 1
            else:
                assignments[i] = nearest
        assignments, sums, centers = _rebuild(x, assignments)
        if np.array_equal(assignments, previous):
            converged = True
            break

    if not converged:
        logger.warning("dp_means hit max_iters=%d with %d clusters", max_iters, centers.shape[0])
    return ClusterResult(assignments=assignments, centers=centers, member_sums=sums,
                         converged=converged, iterations=iterations, seeded=seeded)


class _UnionFind:
    def __init__(self, size):
        self.parent = list(range(size))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # Keep the lower index as root so labels follow first appearance
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def merge_clusters(result: ClusterResult, merge_score: float = MERGE_SCORE) -> ClusterResult:
    """
    Union every pair of clusters whose centers score above merge_score, transitively,
    until no pair qualifies. Merged centers are the normalized size-weighted means.
    """
    if not -SCORE_SCALE < merge_score <= SCORE_SCALE:
        raise ValueError(f"merge_score must be in (-100, 100], got {merge_score}")

    assignments = result.assignments.copy()
    sums = result.member_sums.copy()
    centers = result.centers.copy()
    while centers.shape[0] > 1:
        scores = SCORE_SCALE * (centers @ centers.T)
        np.fill_diagonal(scores, -np.inf)
        pairs = np.argwhere(np.triu(scores > merge_score, k=1))
        if pairs.shape[0] == 0:
            break
        uf = _UnionFind(centers.shape[0])
        for a, b in pairs:
            uf.union(int(a), int(b))
        roots = np.array([uf.find(i) for i in range(centers.shape[0])])
        _, label = np.unique(roots, return_inverse=True)
        merged_sums = np.zeros((int(label.max()) + 1, sums.shape[1]), dtype=np.float64)
        np.add.at(merged_sums, label, sums)
        assignments = label[assignments]
        sums = merged_sums
        centers = _normalize_rows(sums)

    return ClusterResult(assignments=assignments, centers=centers, member_sums=sums,
                         converged=result.converged, iterations=result.iterations,
                         seeded=result.seeded)

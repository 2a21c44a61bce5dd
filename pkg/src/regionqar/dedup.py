"""Semantic deduplication of per-image QARs.

Texts are embedded, clustered bottom-up with average linkage on cosine
distance, and the flat cut into k clusters yields one medoid per cluster
as the annotation candidate. Per-image counts are small (~20), so the
clustering is a plain distance-matrix implementation with a deterministic
tie rule: among equal-distance pairs, merge the pair whose clusters hold
the lowest leaf indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence over leaves 0..n-1; merged clusters take ids n, n+1, ..."""

    merges: tuple[tuple[int, int, float], ...]
    leaf_count: int

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple((a, b, float(d)) for a, b, d in self.merges))
        if len(self.merges) != max(self.leaf_count - 1, 0):
            raise ClusteringError(
                f"{self.leaf_count} leaves need {self.leaf_count - 1} merges, "
                f"got {len(self.merges)}"
            )
        dists = [d for _, _, d in self.merges]
        if any(b < a - 1e-12 for a, b in zip(dists, dists[1:])):
            raise ClusteringError("linkage distances must be non-decreasing")


def embed_texts(texts: list[str], backend) -> list[list[float]]:
    """One embedding vector per text, in order."""
    if not texts:
        raise ClusteringError("need at least one text")
    vectors = backend.embed(texts=texts)
    if len(vectors) != len(texts):
        raise ClusteringError(f"backend returned {len(vectors)} vectors for {len(texts)} texts")
    return vectors


def cosine_distance_matrix(vectors) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ClusteringError("zero vector has no cosine distance")
    unit = v / norms
    d = 1.0 - unit @ unit.T
    np.fill_diagonal(d, 0.0)
    return np.clip(d, 0.0, 2.0)


def agglomerative_cluster(vectors) -> Dendrogram:
    """Average-linkage merge sequence on cosine distance.

    Cluster ids follow the usual convention: leaves are 0..n-1 and the
    cluster created by merge step t gets id n+t. Distance ties merge the
    pair holding the lowest leaf indices first.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ClusteringError("need at least one vector")
    n = v.shape[0]
    if n == 1:
        return Dendrogram(merges=(), leaf_count=1)

    dist = cosine_distance_matrix(v)
    # active cluster id -> (size, min leaf index); pairwise linkage distances
    # maintained with the average-linkage update rule
    active: dict[int, tuple[int, int]] = {i: (1, i) for i in range(n)}
    link: dict[frozenset[int], float] = {
        frozenset((i, j)): dist[i, j] for i in range(n) for j in range(i + 1, n)
    }
    merges = []
    next_id = n
    while len(active) > 1:
        best = None
        for pair, d in link.items():
            i, j = sorted(pair)
            lo, hi = sorted((active[i][1], active[j][1]))
            key = (d, lo, hi)
            if best is None or key < best[0]:
                best = (key, i, j)
        (d, _, _), i, j = best
        size_i, leaf_i = active[i]
        size_j, leaf_j = active[j]
        merges.append((i, j, d))
        for other in active:
            if other in (i, j):
                continue
            d_new = (
                size_i * link[frozenset((i, other))] + size_j * link[frozenset((j, other))]
            ) / (size_i + size_j)
            link[frozenset((next_id, other))] = d_new
        link = {p: val for p, val in link.items() if i not in p and j not in p}
        del active[i], active[j]
        active[next_id] = (size_i + size_j, min(leaf_i, leaf_j))
        next_id += 1
    return Dendrogram(merges=tuple(merges), leaf_count=n)


def flat_clusters(dendrogram: Dendrogram, k: int) -> list[list[int]]:
    """Cut the dendrogram into min(k, leaf_count) flat clusters of leaf indices."""
    if k < 1:
        raise ClusteringError("k must be >= 1")
    n = dendrogram.leaf_count
    k = min(k, n)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for t, (a, b, _) in enumerate(dendrogram.merges):
        if len(members) <= k:
            break
        members[n + t] = members.pop(a) + members.pop(b)
    return [sorted(m) for m in members.values()]


def select_representatives(dendrogram: Dendrogram, vectors, k: int = 5) -> list[int]:
    """Medoid of each flat cluster, ordered by cluster size descending.

    The medoid is the member minimizing summed cosine distance to the
    rest of its cluster; singleton clusters return their only member.
    """
    clusters = flat_clusters(dendrogram, k)
    dist = cosine_distance_matrix(vectors)
    reps = []
    for cluster in clusters:
        sums = [(dist[np.ix_([i], cluster)].sum(), i) for i in cluster]
        reps.append((len(cluster), min(sums)[1], cluster))
    reps.sort(key=lambda r: (-r[0], min(r[2])))
    return [medoid for _, medoid, _ in reps]

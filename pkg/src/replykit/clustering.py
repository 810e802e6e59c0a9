"""Complete-linkage agglomerative clustering over a sparse distance matrix.

Two clusters merge only while the maximum pairwise distance between their
members stays below the threshold. Because unscored pairs read as distance 1,
any merge requires every cross pair to have been a scored candidate - the
structural reason clusters stay small. A brute-force oracle and a k-means
baseline live here too, for verification and labeling-procedure comparisons.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import sparse as sp

from .corpus import ResponseTable
from .embeddings import EmbeddingMatrix
from .similarity import SparseDistanceMatrix

_ORACLE_MAX_SIZE = 16


@dataclass
class Cluster:
    """A group of response ids; the centroid is the most frequent member."""

    id: int
    member_ids: set[int]
    centroid_id: int
    total_count: int


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    assignment: dict[int, int]

    def __len__(self) -> int:
        return len(self.clusters)

    def by_id(self, cluster_id: int) -> Cluster:
        for cluster in self.clusters:
            if cluster.id == cluster_id:
                return cluster
        raise KeyError(f"no cluster with id {cluster_id}")


def _build_cluster_set(groups: list[list[int]], counts: Sequence[int] | None) -> ClusterSet:
    """Canonicalize raw member groups: cluster id = min member id, sorted output."""
    clusters = []
    assignment: dict[int, int] = {}
    for members in groups:
        member_set = set(members)
        cluster_id = min(member_set)
        if counts is None:
            centroid_id = cluster_id
            total = len(member_set)
        else:
            centroid_id = min(member_set, key=lambda m: (-counts[m], m))
            total = sum(counts[m] for m in member_set)
        clusters.append(
            Cluster(id=cluster_id, member_ids=member_set, centroid_id=centroid_id, total_count=total)
        )
        for m in member_set:
            assignment[m] = cluster_id
    clusters.sort(key=lambda c: c.id)
    return ClusterSet(clusters=clusters, assignment=assignment)


def complete_linkage_cluster(
    D: SparseDistanceMatrix,
    threshold: float,
    counts: Sequence[int] | None = None,
) -> ClusterSet:
    """Agglomerate while the smallest complete-linkage distance is < threshold.

    Tie breaking is deterministic: among equal linkage distances, merge the
    pair whose cluster ids (each cluster's minimal member id) are smallest,
    first id then second. Works on the candidate graph only: a cluster pair
    with any unscored cross pair has linkage 1 and can never merge.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    n = D.size
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    # link[a][b]: complete-linkage distance between live clusters a and b,
    # kept only while it stays mergeable (< threshold)
    link: dict[int, dict[int, float]] = defaultdict(dict)
    heap: list[tuple[float, int, int]] = []
    for (i, j), d in D.entries.items():
        if d < threshold:
            link[i][j] = d
            link[j][i] = d
            heap.append((d, i, j))
    heapq.heapify(heap)
    while heap:
        d, a, b = heapq.heappop(heap)
        if a not in members or b not in members:
            continue
        if link[a].get(b) != d:
            continue  # stale entry; the pair's linkage grew after a merge
        # merge b into a (a < b, so the union keeps id a = its min member id)
        common = link[a].keys() & link[b].keys()
        common.discard(a)
        common.discard(b)
        for c in link[a]:
            if c != b:
                del link[c][a]
        for c in link[b]:
            if c != a:
                del link[c][b]
        merged = {c: max(link[a][c], link[b][c]) for c in common}
        del link[a], link[b]
        members[a].extend(members[b])
        del members[b]
        for c, dist in merged.items():
            link[a][c] = dist
            link[c][a] = dist
            heapq.heappush(heap, (dist, min(a, c), max(a, c)))
    return _build_cluster_set(list(members.values()), counts)


def naive_complete_linkage_oracle(
    D: np.ndarray,
    threshold: float,
    counts: Sequence[int] | None = None,
) -> ClusterSet:
    """Textbook O(n^3) agglomeration over a dense matrix; test oracle only."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if n > _ORACLE_MAX_SIZE:
        raise ValueError(f"oracle limited to {_ORACLE_MAX_SIZE} responses, got {n}")
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    while True:
        best: tuple[float, int, int] | None = None
        for a, b in combinations(sorted(clusters), 2):
            linkage = max(D[x, y] for x in clusters[a] for y in clusters[b])
            if linkage < threshold and (best is None or (linkage, a, b) < best):
                best = (linkage, a, b)
        if best is None:
            break
        _, a, b = best
        clusters[a].extend(clusters[b])
        del clusters[b]
    return _build_cluster_set(list(clusters.values()), counts)


def kmeans_baseline(
    mat: EmbeddingMatrix,
    k: int,
    seed: int,
    counts: Sequence[int] | None = None,
) -> ClusterSet:
    """Lloyd's algorithm with seeded init: the fully automatic baseline.

    Initial centroids are k distinct rows chosen by a seeded shuffle; runs to
    a stable assignment or 100 iterations. Assignment ties go to the lowest
    centroid index, and empty clusters keep their previous centroid.
    """
    X = mat.vectors.toarray() if sp.issparse(mat.vectors) else np.asarray(mat.vectors, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = X[rng.permutation(n)[:k]].copy()
    assignment = np.full(n, -1)
    for _ in range(100):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignment = d2.argmin(axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            mask = assignment == c
            if mask.any():
                centroids[c] = X[mask].mean(axis=0)
    groups = [list(np.flatnonzero(assignment == c)) for c in range(k)]
    groups = [[int(m) for m in g] for g in groups if g]
    return _build_cluster_set(groups, counts)


def cluster_stats(cs: ClusterSet, table: ResponseTable | None = None) -> dict:
    """Cluster count, size histogram, and occurrence coverage of non-singletons."""
    sizes = [len(c.member_ids) for c in cs.clusters]
    histogram: dict[int, int] = {}
    for size in sizes:
        histogram[size] = histogram.get(size, 0) + 1
    if table is not None:
        total_occurrences = sum(table.counts)
        covered = sum(
            table[m].count for c in cs.clusters if len(c.member_ids) > 1 for m in c.member_ids
        )
    else:
        total_occurrences = sum(c.total_count for c in cs.clusters)
        covered = sum(c.total_count for c in cs.clusters if len(c.member_ids) > 1)
    return {
        "n_clusters": len(cs.clusters),
        "size_histogram": dict(sorted(histogram.items())),
        "max_size": max(sizes, default=0),
        "coverage": covered / total_occurrences if total_occurrences else 0.0,
    }


def cluster_set_records(cs: ClusterSet, table: ResponseTable) -> list[dict]:
    return [
        {
            "id": c.id,
            "centroid_id": c.centroid_id,
            "centroid_text": table[c.centroid_id].normalized_text,
            "total_count": c.total_count,
            "members": [
                {"id": m, "text": table[m].normalized_text, "count": table[m].count}
                for m in sorted(c.member_ids)
            ],
        }
        for c in cs.clusters
    ]


def cluster_set_from_records(records: list[dict]) -> ClusterSet:
    clusters = []
    assignment: dict[int, int] = {}
    for rec in records:
        member_ids = {m["id"] for m in rec["members"]}
        clusters.append(
            Cluster(
                id=rec["id"],
                member_ids=member_ids,
                centroid_id=rec["centroid_id"],
                total_count=rec["total_count"],
            )
        )
        for m in member_ids:
            assignment[m] = rec["id"]
    return ClusterSet(clusters=clusters, assignment=assignment)


def cluster_set_hash(cs: ClusterSet) -> str:
    """Stable digest of the partition structure, for action-log validation."""
    canonical = [
        [c.id, c.centroid_id, c.total_count, sorted(c.member_ids)] for c in cs.clusters
    ]
    blob = json.dumps(canonical, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]

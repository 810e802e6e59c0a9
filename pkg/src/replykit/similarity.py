"""Pair similarity scoring and assembly of the sparse dissimilarity matrix.

The stored distance for a scored pair {i, j} is 1 - prob_similar; every
unscored pair reads as the maximal distance 1, and the diagonal is 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .candidates import CandidatePairSet
from .corpus import ResponseTable
from .embeddings import EmbeddingMatrix, cosine

SCORER_KINDS = ("cosine_calibrated", "external")


class ExternalScorerError(RuntimeError):
    """External scorer failed after bounded retries; carries the unscored pairs."""

    def __init__(self, message: str, unscored: list[tuple[int, int]]):
        super().__init__(message)
        self.unscored = unscored


@dataclass(frozen=True)
class ScorerSpec:
    """Similarity scorer configuration.

    The cosine_calibrated kind maps the mean cosine across encoders through a
    logistic: prob = sigma(gain * cosine + offset). The defaults (8, -4) send
    cosine 0.5 to probability 0.5 and cosine 1.0 to 0.982, placing the 75%
    merge bar at mean cosine ~0.637 - a stand-in calibration for a trained
    cross-encoder, which plugs in via the external kind.
    """

    kind: str = "cosine_calibrated"
    gain: float = 8.0
    offset: float = -4.0
    endpoint: str | None = None
    batch_size: int = 128
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external scorer requires an endpoint")


@dataclass
class SparseDistanceMatrix:
    """Dissimilarities on candidate pairs only; absent pairs read as 1."""

    size: int
    entries: dict[tuple[int, int], float]

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self.entries.get(key, 1.0)

    def sorted_entries(self) -> list[tuple[int, int, float]]:
        return [(i, j, d) for (i, j), d in sorted(self.entries.items())]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _mean_cosine(mats: list[EmbeddingMatrix], i: int, j: int) -> float:
    # Encoders that fell back to a pseudo-random vector for either side say
    # nothing about this pair; use the rest, or everything if none are clean.
    clean = [m for m in mats if not (m.oov_flags[i] or m.oov_flags[j])]
    pool = clean or mats
    return sum(cosine(m, i, j) for m in pool) / len(pool)


def score_pairs(
    pairs: CandidatePairSet,
    table: ResponseTable,
    spec: ScorerSpec,
    mats: list[EmbeddingMatrix] | None = None,
    jobs: int = 1,
) -> dict[tuple[int, int], float]:
    """Probability of semantic similarity for every candidate pair."""
    ordered = pairs.sorted_pairs()
    if spec.kind == "cosine_calibrated":
        if not mats:
            raise ValueError("cosine_calibrated scorer requires at least one embedding matrix")
        return {
            (i, j): _sigmoid(spec.gain * _mean_cosine(mats, i, j) + spec.offset)
            for i, j in ordered
        }
    return _score_external(ordered, table, spec, jobs=jobs)


def _score_external(
    ordered: list[tuple[int, int]],
    table: ResponseTable,
    spec: ScorerSpec,
    jobs: int = 1,
) -> dict[tuple[int, int], float]:
    import httpx

    url = spec.endpoint.rstrip("/") + "/score"
    batches = [ordered[i : i + spec.batch_size] for i in range(0, len(ordered), spec.batch_size)]

    def fetch(batch: list[tuple[int, int]]) -> list[float]:
        body = {
            "pairs": [
                {"a": table[i].normalized_text, "b": table[j].normalized_text}
                for i, j in batch
            ]
        }
        last_error: Exception | None = None
        for _ in range(spec.max_retries):
            try:
                reply = httpx.post(url, json=body, timeout=30.0)
                reply.raise_for_status()
                probs = reply.json()["prob_similar"]
                if len(probs) != len(batch):
                    raise ExternalScorerError(
                        f"scorer returned {len(probs)} scores for {len(batch)} pairs", batch
                    )
                return [float(p) for p in probs]
            except ExternalScorerError:
                raise
            except Exception as exc:
                last_error = exc
        raise ExternalScorerError(
            f"scorer at {url} failed for {len(batch)} pairs: {last_error}", batch
        ) from last_error

    if jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fetch, batches))
    else:
        results = [fetch(b) for b in batches]
    scores: dict[tuple[int, int], float] = {}
    for batch, probs in zip(batches, results):
        scores.update(zip(batch, probs))
    return scores


def build_distance_matrix(
    scores: dict[tuple[int, int], float], size: int
) -> SparseDistanceMatrix:
    """Store 1 - prob for each scored pair; everything else defaults to 1."""
    entries: dict[tuple[int, int], float] = {}
    for (i, j), prob in scores.items():
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"probability {prob} for pair ({i}, {j}) outside [0, 1]")
        if i == j:
            raise ValueError(f"self-pair ({i}, {i}) cannot be scored")
        if not (0 <= i < size and 0 <= j < size):
            raise ValueError(f"pair ({i}, {j}) out of range for size {size}")
        key = (i, j) if i < j else (j, i)
        entries[key] = 1.0 - prob
    return SparseDistanceMatrix(size=size, entries=entries)

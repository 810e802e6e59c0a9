"""Candidate-pair generation: the union of per-encoder k-nearest-neighbor pairs.

Scoring every pair of responses is quadratic; instead each encoder nominates,
for each response, its k nearest neighbors, and only the union of those pairs
is ever scored. Pairs that some encoder missed are treated as maximally
distant downstream, which is what keeps clusters small.
"""

from __future__ import annotations

from dataclasses import dataclass

from .embeddings import EmbeddingMatrix, cosine_knn


@dataclass
class CandidatePairSet:
    """Unordered id pairs stored canonically as (min, max)."""

    pairs: set[tuple[int, int]]
    per_encoder_counts: dict[str, int]

    def __len__(self) -> int:
        return len(self.pairs)

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)


def generate_candidate_pairs(mats: list[EmbeddingMatrix], k: int) -> CandidatePairSet:
    """Union of {i, n} over every encoder and every response's k nearest neighbors.

    Rows carrying an encoder's all-OOV fallback flag contribute no pairs from
    that encoder (their vectors carry no semantics), but the same pair may
    still enter through another encoder.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not mats:
        raise ValueError("at least one embedding matrix required")
    n_rows = mats[0].n_rows
    for mat in mats:
        if mat.n_rows != n_rows:
            raise ValueError(
                f"embedding matrices cover different tables: {mat.n_rows} vs {n_rows} rows"
            )
    pairs: set[tuple[int, int]] = set()
    per_encoder_counts: dict[str, int] = {}
    for mat in mats:
        encoder_pairs: set[tuple[int, int]] = set()
        usable = ~mat.oov_flags
        for i in range(n_rows):
            if not usable[i]:
                continue
            for neighbor, _sim in cosine_knn(mat, i, k):
                if usable[neighbor]:
                    encoder_pairs.add((min(i, neighbor), max(i, neighbor)))
        name = mat.encoder.name
        while name in per_encoder_counts:
            name += "+"
        per_encoder_counts[name] = len(encoder_pairs)
        pairs |= encoder_pairs
    return CandidatePairSet(pairs=pairs, per_encoder_counts=per_encoder_counts)

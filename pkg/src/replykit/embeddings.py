"""Sentence encoders for candidate-pair generation: lexical built-ins plus an HTTP hook.

Built-in encoders are tf-idf rows, unweighted word-vector means, and
tf-idf-weighted word-vector means. The `external` kind delegates to any
service speaking the POST /encode protocol, so a neural encoder can be
plugged in without touching the pipeline.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .corpus import ResponseTable

logger = logging.getLogger(__name__)

ENCODER_KINDS = ("tfidf", "avg_wordvec", "tfidf_weighted_wordvec", "external")

# xor-folded into the per-response RNG seed so fallback vectors differ from
# other seeded streams in the pipeline
_FALLBACK_SEED_SALT = 0x5EED


class WordVectorFormatError(ValueError):
    """Malformed word-vector file; messages name the offending line."""


class ExternalEncoderError(RuntimeError):
    """External encoder service failed after bounded retries."""


@dataclass
class TfidfModel:
    """Vocabulary and idf statistics fit on a response table.

    idf_t = ln((1 + N) / (1 + df_t)) + 1, where N is the number of responses
    and df_t counts responses containing token t.
    """

    vocabulary: dict[str, int]
    idf: np.ndarray

    def idf_of(self, token: str) -> float | None:
        col = self.vocabulary.get(token)
        return None if col is None else float(self.idf[col])


@dataclass
class WordVectorTable:
    dimension: int
    entries: dict[str, np.ndarray]


@dataclass(frozen=True)
class EncoderSpec:
    """Configuration for one encoder; `name` labels it in diagnostics."""

    kind: str
    name: str = ""
    word_vectors_path: str | None = None
    endpoint: str | None = None
    batch_size: int = 64
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external encoder requires an endpoint")
        if not self.name:
            object.__setattr__(self, "name", self.kind)


@dataclass
class EmbeddingMatrix:
    """One row per response id; rows are dense or CSR, with cached norms.

    `oov_flags[i]` marks rows that had no usable tokens and were replaced by
    a deterministic pseudo-random unit vector (seeded by the response id) so
    cosine stays defined. Flagged rows never produce candidate pairs from
    this encoder.
    """

    encoder: EncoderSpec
    vectors: np.ndarray | sparse.csr_matrix
    row_norms: np.ndarray = field(init=False)
    oov_flags: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.oov_flags is None:
            self.oov_flags = np.zeros(self.n_rows, dtype=bool)
        if sparse.issparse(self.vectors):
            self.row_norms = np.sqrt(np.asarray(self.vectors.multiply(self.vectors).sum(axis=1)).ravel())
        else:
            self.row_norms = np.linalg.norm(self.vectors, axis=1)

    @property
    def n_rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def fit_tfidf(table: ResponseTable) -> TfidfModel:
    """Fit vocabulary and idf over the whitespace tokens of normalized responses."""
    if len(table) == 0:
        raise ValueError("cannot fit tf-idf on an empty response table")
    df: dict[str, int] = {}
    for response in table:
        for token in set(response.normalized_text.split()):
            df[token] = df.get(token, 0) + 1
    vocabulary = {token: col for col, token in enumerate(sorted(df))}
    n = len(table)
    idf = np.empty(len(vocabulary))
    for token, col in vocabulary.items():
        idf[col] = math.log((1 + n) / (1 + df[token])) + 1.0
    return TfidfModel(vocabulary=vocabulary, idf=idf)


def load_word_vectors(path: str | Path) -> WordVectorTable:
    """Read `token v1 ... vd` lines; constant d enforced, later duplicates win."""
    entries: dict[str, np.ndarray] = {}
    dimension: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dimension is None:
                if not values:
                    raise WordVectorFormatError(f"line {lineno}: no vector components")
                dimension = len(values)
            elif len(values) != dimension:
                raise WordVectorFormatError(
                    f"line {lineno}: expected {dimension} components, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise WordVectorFormatError(f"line {lineno}: non-numeric component") from exc
            if token in entries:
                logger.warning("word vector for %r redefined at line %d", token, lineno)
            entries[token] = vec
    if dimension is None:
        raise WordVectorFormatError("empty word-vector file: dimension undefined")
    return WordVectorTable(dimension=dimension, entries=entries)


def _fallback_vector(response_id: int, dimension: int) -> np.ndarray:
    rng = np.random.default_rng(_FALLBACK_SEED_SALT ^ response_id)
    vec = rng.standard_normal(dimension)
    return vec / np.linalg.norm(vec)


def _embed_tfidf(table: ResponseTable, tfidf: TfidfModel) -> tuple[sparse.csr_matrix, np.ndarray]:
    n_rows, n_cols = len(table), len(tfidf.vocabulary)
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    flags = np.zeros(n_rows, dtype=bool)
    for i, response in enumerate(table):
        row: dict[int, float] = {}
        for token in response.normalized_text.split():
            col = tfidf.vocabulary.get(token)
            if col is not None:
                row[col] = row.get(col, 0.0) + float(tfidf.idf[col])
        if not row:
            flags[i] = True
            rng = np.random.default_rng(_FALLBACK_SEED_SALT ^ i)
            row = {int(rng.integers(n_cols)): 1.0}
        for col in sorted(row):
            indices.append(col)
            data.append(row[col])
        indptr.append(len(indices))
    matrix = sparse.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))
    return matrix, flags


def _embed_wordvec(
    table: ResponseTable,
    wv: WordVectorTable,
    tfidf: TfidfModel | None,
) -> tuple[np.ndarray, np.ndarray]:
    vectors = np.zeros((len(table), wv.dimension))
    flags = np.zeros(len(table), dtype=bool)
    for i, response in enumerate(table):
        total = np.zeros(wv.dimension)
        weight_sum = 0.0
        for token in response.normalized_text.split():
            vec = wv.entries.get(token)
            if vec is None:
                continue
            if tfidf is None:
                weight = 1.0
            else:
                idf = tfidf.idf_of(token)
                if idf is None:
                    continue
                weight = idf  # tf accumulates through repeated occurrences
            total += weight * vec
            weight_sum += weight
        if weight_sum > 0.0 and np.any(total != 0.0):
            vectors[i] = total / weight_sum
        else:
            vectors[i] = _fallback_vector(i, wv.dimension)
            flags[i] = True
    return vectors, flags


def _fetch_external_vectors(
    texts: list[str], spec: EncoderSpec, jobs: int = 1
) -> np.ndarray:
    import httpx

    url = spec.endpoint.rstrip("/") + "/encode"
    batches = [texts[i : i + spec.batch_size] for i in range(0, len(texts), spec.batch_size)]

    def fetch(batch: list[str]) -> tuple[int, list[list[float]]]:
        last_error: Exception | None = None
        for _ in range(spec.max_retries):
            try:
                reply = httpx.post(url, json={"texts": batch}, timeout=30.0)
                reply.raise_for_status()
                payload = reply.json()
                vectors = payload["vectors"]
                if len(vectors) != len(batch):
                    raise ExternalEncoderError(
                        f"encoder returned {len(vectors)} vectors for {len(batch)} texts"
                    )
                return payload["dimension"], vectors
            except ExternalEncoderError:
                raise
            except Exception as exc:  # transport and HTTP-status failures retry
                last_error = exc
        raise ExternalEncoderError(f"encoder at {url} unreachable: {last_error}") from last_error

    if jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fetch, batches))
    else:
        results = [fetch(b) for b in batches]

    dimension = results[0][0]
    rows: list[list[float]] = []
    for dim, vectors in results:
        if dim != dimension:
            raise ExternalEncoderError("encoder returned inconsistent dimensions across batches")
        for vec in vectors:
            if len(vec) != dimension:
                raise ExternalEncoderError("encoder returned a vector of the wrong dimension")
            rows.append(vec)
    return np.array(rows, dtype=float)


def embed(
    table: ResponseTable,
    spec: EncoderSpec,
    tfidf: TfidfModel | None = None,
    wv: WordVectorTable | None = None,
    jobs: int = 1,
) -> EmbeddingMatrix:
    """Encode every response in the table as one row under the given encoder."""
    if spec.kind == "tfidf":
        if tfidf is None:
            raise ValueError("tfidf encoder requires a fitted TfidfModel")
        vectors, flags = _embed_tfidf(table, tfidf)
    elif spec.kind == "avg_wordvec":
        if wv is None:
            raise ValueError("avg_wordvec encoder requires a WordVectorTable")
        vectors, flags = _embed_wordvec(table, wv, tfidf=None)
    elif spec.kind == "tfidf_weighted_wordvec":
        if wv is None or tfidf is None:
            raise ValueError("tfidf_weighted_wordvec requires both TfidfModel and WordVectorTable")
        vectors, flags = _embed_wordvec(table, wv, tfidf=tfidf)
    elif spec.kind == "external":
        vectors = _fetch_external_vectors([r.normalized_text for r in table], spec, jobs=jobs)
        flags = np.zeros(len(table), dtype=bool)
        for i in range(vectors.shape[0]):
            if not np.any(vectors[i]):
                vectors[i] = _fallback_vector(i, vectors.shape[1])
                flags[i] = True
    else:  # pragma: no cover - EncoderSpec validates kind
        raise ValueError(f"unknown encoder kind {spec.kind!r}")
    return EmbeddingMatrix(encoder=spec, vectors=vectors, oov_flags=flags)


def _cosine_row(mat: EmbeddingMatrix, query_id: int) -> np.ndarray:
    """Cosine similarity of the query row against every row, as a dense vector."""
    if sparse.issparse(mat.vectors):
        dots = np.asarray((mat.vectors @ mat.vectors[query_id].T).todense()).ravel()
    else:
        dots = mat.vectors @ mat.vectors[query_id]
    denom = mat.row_norms * mat.row_norms[query_id]
    return dots / np.where(denom > 0.0, denom, 1.0)


def cosine(mat: EmbeddingMatrix, i: int, j: int) -> float:
    if sparse.issparse(mat.vectors):
        dot = (mat.vectors[i] @ mat.vectors[j].T).toarray().item()
    else:
        dot = float(mat.vectors[i] @ mat.vectors[j])
    denom = float(mat.row_norms[i] * mat.row_norms[j])
    return dot / denom if denom > 0.0 else 0.0


def cosine_knn(mat: EmbeddingMatrix, query_id: int, k: int) -> list[tuple[int, float]]:
    """The k nearest rows to `query_id` by cosine, excluding itself.

    Exact full scan; descending similarity with ties broken by ascending id.
    """
    if k < 1:
        raise ValueError("k must be positive")
    n = mat.n_rows
    if not 0 <= query_id < n:
        raise ValueError(f"query_id {query_id} out of range for {n} rows")
    sims = _cosine_row(mat, query_id)
    order = np.lexsort((np.arange(n), -sims))  # primary: similarity desc; tie: id asc
    result = []
    for idx in order:
        if idx == query_id:
            continue
        result.append((int(idx), float(sims[idx])))
        if len(result) == k:
            break
    return result

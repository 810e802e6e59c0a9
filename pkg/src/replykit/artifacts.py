"""On-disk stage artifacts: canonical JSON documents stamped with a config hash.

Every pipeline stage writes its output with the hash of the semantic
configuration (parameters and seed, not paths) that produced it, and refuses
to consume an artifact whose hash disagrees with the current run unless
forced. Re-running a stage with identical config and seed rewrites identical
bytes; nothing here embeds timestamps.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy import sparse

from .embeddings import EmbeddingMatrix, EncoderSpec


class ArtifactError(ValueError):
    """Missing, malformed, or stale stage artifact."""


def config_hash(semantic_config: dict) -> str:
    blob = json.dumps(semantic_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_json_artifact(path: str | Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def read_json_artifact(
    path: str | Path,
    stage_hint: str,
    expect_hash: str | None = None,
    force: bool = False,
) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path.name}: run `{stage_hint}` first")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"artifact {path} is not valid JSON: {exc.msg}") from exc
    if expect_hash is not None and not force:
        found = payload.get("config_hash")
        if found != expect_hash:
            raise ArtifactError(
                f"artifact {path.name} was produced under config {found}, current is "
                f"{expect_hash}; rerun upstream stages or pass --force"
            )
    return payload


def write_embedding_matrix(directory: str | Path, name: str, mat: EmbeddingMatrix) -> dict:
    """Persist one encoder's rows as .npy files; returns the manifest entry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry: dict = {"name": name, "kind": mat.encoder.kind, "shape": list(mat.vectors.shape)}
    np.save(directory / f"{name}.flags.npy", mat.oov_flags)
    if sparse.issparse(mat.vectors):
        entry["format"] = "csr"
        csr = mat.vectors.tocsr()
        np.save(directory / f"{name}.data.npy", csr.data)
        np.save(directory / f"{name}.indices.npy", csr.indices)
        np.save(directory / f"{name}.indptr.npy", csr.indptr)
    else:
        entry["format"] = "dense"
        np.save(directory / f"{name}.vectors.npy", np.asarray(mat.vectors))
    return entry


def read_embedding_matrix(directory: str | Path, entry: dict) -> EmbeddingMatrix:
    directory = Path(directory)
    name = entry["name"]
    flags = np.load(directory / f"{name}.flags.npy")
    spec = EncoderSpec(kind=entry["kind"], name=name, endpoint="loaded" if entry["kind"] == "external" else None)
    if entry["format"] == "csr":
        vectors = sparse.csr_matrix(
            (
                np.load(directory / f"{name}.data.npy"),
                np.load(directory / f"{name}.indices.npy"),
                np.load(directory / f"{name}.indptr.npy"),
            ),
            shape=tuple(entry["shape"]),
        )
    else:
        vectors = np.load(directory / f"{name}.vectors.npy")
    return EmbeddingMatrix(encoder=spec, vectors=vectors, oov_flags=flags)

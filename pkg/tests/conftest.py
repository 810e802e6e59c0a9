from __future__ import annotations

import numpy as np
import pytest

from replykit.corpus import DOCTOR, PATIENT, Conversation, Response, ResponseTable, Turn
from replykit.embeddings import EmbeddingMatrix, EncoderSpec


def make_table(texts: list[str], counts: list[int] | None = None) -> ResponseTable:
    counts = counts or [2] * len(texts)
    responses = [
        Response(normalized_text=t, raw_variant_counts={t: c}, count=c)
        for t, c in zip(texts, counts)
    ]
    return ResponseTable(responses=responses)


def make_matrix(rows: list[list[float]], kind: str = "avg_wordvec", name: str = "") -> EmbeddingMatrix:
    spec = EncoderSpec(kind=kind, name=name or kind)
    return EmbeddingMatrix(encoder=spec, vectors=np.array(rows, dtype=float))


def conv(conv_id: str, *pairs: tuple[str, str]) -> Conversation:
    return Conversation(
        id=conv_id, turns=tuple(Turn(speaker=s, text=t) for s, t in pairs)
    )


@pytest.fixture
def doctor() -> str:
    return DOCTOR


@pytest.fixture
def patient() -> str:
    return PATIENT


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[{'PASS' if report.passed else 'FAIL'}] {name}", flush=True)

"""Dialogue corpus ingestion, text normalization, and the deduplicated response table."""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

DOCTOR = "doctor"
PATIENT = "patient"
SPEAKERS = (DOCTOR, PATIENT)

_WHITESPACE_RE = re.compile(r"\s+")


class CorpusFormatError(ValueError):
    """Malformed corpus input; messages name the offending line."""


@dataclass(frozen=True)
class Turn:
    """One message in a conversation. Consecutive turns may share a speaker."""

    speaker: str
    text: str


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]


@dataclass
class Response:
    """A normalized speaker utterance with its raw surface forms and total count."""

    normalized_text: str
    raw_variant_counts: dict[str, int]
    count: int

    @property
    def raw_variants(self) -> set[str]:
        return set(self.raw_variant_counts)

    def most_common_raw(self) -> str:
        """Most frequent raw variant; ties broken lexicographically."""
        return min(self.raw_variant_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


@dataclass
class ResponseTable:
    """Deduplicated responses; list position is the canonical response id."""

    responses: list[Response]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._index = {r.normalized_text: i for i, r in enumerate(self.responses)}
        if len(self._index) != len(self.responses):
            raise ValueError("duplicate normalized_text in response table")

    def __len__(self) -> int:
        return len(self.responses)

    def __getitem__(self, response_id: int) -> Response:
        return self.responses[response_id]

    def __iter__(self) -> Iterator[Response]:
        return iter(self.responses)

    def id_of(self, normalized_text: str) -> int | None:
        return self._index.get(normalized_text)

    @property
    def counts(self) -> list[int]:
        return [r.count for r in self.responses]


def load_conversations(path: str | Path) -> list[Conversation]:
    """Parse a JSON-lines corpus file: one conversation object per line.

    Raises CorpusFormatError naming the line number for any malformed record,
    unknown speaker tag, empty turn text, or duplicate conversation id.
    """
    conversations: list[Conversation] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            conversations.append(_parse_conversation(record, lineno, seen_ids))
    return conversations


def _parse_conversation(record: object, lineno: int, seen_ids: set[str]) -> Conversation:
    if not isinstance(record, dict):
        raise CorpusFormatError(f"line {lineno}: expected a JSON object")
    conv_id = record.get("id")
    if not isinstance(conv_id, str) or not conv_id:
        raise CorpusFormatError(f"line {lineno}: missing or empty conversation id")
    if conv_id in seen_ids:
        raise CorpusFormatError(f"line {lineno}: duplicate conversation id {conv_id!r}")
    raw_turns = record.get("turns")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise CorpusFormatError(f"line {lineno}: conversation {conv_id!r} has no turns")
    turns = []
    for pos, t in enumerate(raw_turns):
        if not isinstance(t, dict):
            raise CorpusFormatError(f"line {lineno}: turn {pos} is not an object")
        speaker = t.get("speaker")
        if speaker not in SPEAKERS:
            raise CorpusFormatError(f"line {lineno}: unknown speaker {speaker!r} in turn {pos}")
        text = t.get("text")
        if not isinstance(text, str) or not text.strip():
            raise CorpusFormatError(f"line {lineno}: empty text in turn {pos}")
        turns.append(Turn(speaker=speaker, text=text))
    seen_ids.add(conv_id)
    return Conversation(id=conv_id, turns=tuple(turns))


@lru_cache(maxsize=4096)
def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not _is_punctuation(ch))


@lru_cache(maxsize=64)
def _placeholder_rules(placeholders: tuple[str, ...]) -> tuple[re.Pattern | None, frozenset[str]]:
    markers = sorted({m for m in placeholders if m}, key=len, reverse=True)
    if not markers:
        return None, frozenset()
    scrub = re.compile("|".join(re.escape(m) for m in markers), re.IGNORECASE)
    # Tokens equal to a marker's lowercased, punctuation-free form are also
    # dropped, so markers mangled by earlier processing still disappear.
    residuals = frozenset(_strip_punctuation(m.lower()) for m in markers) - {""}
    return scrub, residuals


def normalize_text(raw: str, placeholders: Iterable[str] = ()) -> str:
    """Lowercase, remove punctuation and placeholder markers, collapse whitespace.

    Placeholder markers (e.g. "[PATIENT_NAME]") are scrubbed case-insensitively
    before punctuation removal. Punctuation is any character in a Unicode P*
    category; digits are kept. The pass repeats until a fixed point so the
    function is idempotent for any marker set.
    """
    scrub, residuals = _placeholder_rules(tuple(sorted(set(placeholders))))
    text = raw
    while True:
        out = scrub.sub(" ", text) if scrub else text
        out = _strip_punctuation(out.lower())
        tokens = [t for t in out.split() if t not in residuals]
        out = " ".join(tokens)
        if out == text:
            return out
        text = out


def iter_speaker_blocks(turns: Sequence[Turn]) -> Iterator[tuple[str, list[Turn]]]:
    """Yield maximal runs of consecutive same-speaker turns, in order."""
    block: list[Turn] = []
    for turn in turns:
        if block and turn.speaker != block[-1].speaker:
            yield block[-1].speaker, block
            block = []
        block.append(turn)
    if block:
        yield block[-1].speaker, block


def extract_response_table(
    convs: Iterable[Conversation],
    speaker: str = DOCTOR,
    placeholders: Iterable[str] = (),
) -> ResponseTable:
    """Collect each contiguous run of `speaker` messages as one response unit.

    Units are space-joined, normalized, and counted corpus-wide; normalized
    strings occurring fewer than twice are dropped. Ids are deterministic:
    responses are sorted by (count desc, normalized_text asc).
    """
    placeholders = tuple(sorted(set(placeholders)))
    variant_counts: dict[str, Counter[str]] = {}
    for conv in convs:
        for block_speaker, block in iter_speaker_blocks(conv.turns):
            if block_speaker != speaker:
                continue
            raw_unit = " ".join(t.text for t in block)
            normalized = normalize_text(raw_unit, placeholders)
            if not normalized:
                continue  # units that normalize to nothing carry no text to suggest
            variant_counts.setdefault(normalized, Counter())[raw_unit] += 1
    responses = []
    for normalized, variants in variant_counts.items():
        total = sum(variants.values())
        if total < 2:
            continue
        responses.append(
            Response(
                normalized_text=normalized,
                raw_variant_counts=dict(sorted(variants.items())),
                count=total,
            )
        )
    responses.sort(key=lambda r: (-r.count, r.normalized_text))
    return ResponseTable(responses=responses)


def response_table_records(table: ResponseTable) -> list[dict]:
    return [
        {
            "id": i,
            "normalized_text": r.normalized_text,
            "count": r.count,
            "raw_variants": r.raw_variant_counts,
        }
        for i, r in enumerate(table.responses)
    ]


def response_table_from_records(records: list[dict]) -> ResponseTable:
    responses = []
    for expected_id, rec in enumerate(records):
        if rec["id"] != expected_id:
            raise ValueError(f"response ids not contiguous at {rec['id']}")
        responses.append(
            Response(
                normalized_text=rec["normalized_text"],
                raw_variant_counts=dict(rec["raw_variants"]),
                count=rec["count"],
            )
        )
    return ResponseTable(responses=responses)
